// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <string>

#include "streamseg/backbone/backbone.hpp"

namespace streamseg::memory {

/// Per-voxel affine gate maps over concatenated (feature, state) vectors.
/// The candidate map sees (feature, reset-gated state).
struct GruWeights {
  Eigen::MatrixXd w_update;     // F x 2F
  Eigen::VectorXd b_update;     // F
  Eigen::MatrixXd w_reset;      // F x 2F
  Eigen::VectorXd b_reset;      // F
  Eigen::MatrixXd w_candidate;  // F x 2F
  Eigen::VectorXd b_candidate;  // F

  Eigen::Index feature_dim() const { return b_update.size(); }
  void check() const;

  /// Defaults tuned so a clean unit-margin one-hot feature drives the update
  /// gate to ~0.9: fresh confident observations dominate, old state decays.
  static GruWeights defaults(const backbone::FeatureDims& dims);
};

/// Binary weight file: magic "GRUW", u32 version, u32 feature dim, then the
/// six blocks (w_update, b_update, w_reset, b_reset, w_candidate, b_candidate)
/// as row-major f64.
void save_gru_weights(const std::string& path, const GruWeights& w);
GruWeights load_gru_weights(const std::string& path);

}  // namespace streamseg::memory

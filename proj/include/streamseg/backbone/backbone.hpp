// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <vector>

#include "streamseg/sim/scene.hpp"

namespace streamseg::backbone {

/// Per-point feature: class logits (C) concatenated with an instance
/// embedding (D). Stored flat so memory cells and backbone outputs share one
/// representation.
using FeatureVec = Eigen::VectorXd;

struct FeatureDims {
  uint32_t n_classes = 8;
  uint32_t embed_dim = 8;

  uint32_t total() const { return n_classes + embed_dim; }
};

inline Eigen::VectorXd class_logits(const FeatureVec& f, const FeatureDims& d) {
  return f.head(d.n_classes);
}
inline Eigen::VectorXd instance_embedding(const FeatureVec& f, const FeatureDims& d) {
  return f.tail(d.embed_dim);
}

/// Instance id -> embedding centroid. Travels with the memory so labels can
/// be decoded from memory features alone.
class InstanceCodebook {
 public:
  InstanceCodebook() = default;
  explicit InstanceCodebook(uint32_t embed_dim, uint64_t seed = 0)
      : embed_dim_(embed_dim), seed_(seed) {}

  /// Deterministic centroid for an id; registers it on first use.
  const Eigen::VectorXd& centroid(uint32_t instance_id);

  bool empty() const { return centroids_.empty(); }
  std::size_t size() const { return centroids_.size(); }
  uint32_t embed_dim() const { return embed_dim_; }

  /// Nearest centroid by Euclidean distance; ties resolve to the lower id.
  uint32_t decode(const Eigen::VectorXd& embedding) const;

  const std::map<uint32_t, Eigen::VectorXd>& entries() const { return centroids_; }
  void merge(const InstanceCodebook& other);

 private:
  uint32_t embed_dim_ = 8;
  uint64_t seed_ = 0;
  std::map<uint32_t, Eigen::VectorXd> centroids_;
};

struct LatencyModel {
  enum class Kind { fixed, gaussian };
  Kind kind = Kind::fixed;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  uint64_t seed = 0;
};

/// Draws latencies from a model; deterministic under seed, independent of
/// frame content.
class LatencySampler {
 public:
  explicit LatencySampler(const LatencyModel& model)
      : model_(model), rng_(model.seed) {}

  double next();

 private:
  LatencyModel model_;
  std::mt19937_64 rng_;
};

struct NoiseModel {
  double label_flip_prob = 0.0;
  double logit_margin = 1.0;
  double embed_sigma = 0.0;
};

struct SegmentResult {
  std::vector<FeatureVec> features;
  double latency_ms = 0.0;
};

/// Interchangeable segmenter: per-point features plus a declared latency.
class BackboneInterface {
 public:
  virtual ~BackboneInterface() = default;
  virtual SegmentResult segment(const sim::FrameSample& frame) = 0;
  virtual const FeatureDims& dims() const = 0;
  virtual const InstanceCodebook& codebook() const = 0;
};

/// Ground-truth-driven segmenter with controllable corruption; stands in for
/// a trained network.
class OracleBackbone : public BackboneInterface {
 public:
  OracleBackbone(FeatureDims dims, NoiseModel noise, LatencyModel latency,
                 sim::ClassTable classes, uint64_t seed = 7);

  SegmentResult segment(const sim::FrameSample& frame) override;
  const FeatureDims& dims() const override { return dims_; }
  const InstanceCodebook& codebook() const override { return codebook_; }

 private:
  FeatureDims dims_;
  NoiseModel noise_;
  sim::ClassTable classes_;
  std::vector<uint32_t> class_ids_;  // non-zero ids, flip candidates
  uint64_t seed_;
  LatencySampler latency_;
  InstanceCodebook codebook_;
};

struct HeadOutput {
  std::vector<uint32_t> semantic_id;
  std::vector<uint32_t> instance_id;
};

/// Lightweight decode: argmax class logits; nearest-codebook instance for
/// thing classes, instance 0 for stuff.
HeadOutput prediction_head(const std::vector<FeatureVec>& features,
                           const FeatureDims& dims, const InstanceCodebook& codebook,
                           const sim::ClassTable& classes);

}  // namespace streamseg::backbone

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "streamseg/core/point_cloud.hpp"
#include "streamseg/core/se3.hpp"
#include "streamseg/forecast/flow_field.hpp"
#include "streamseg/sim/scene.hpp"

namespace streamseg::forecast {

/// Recurrent ego-motion state: exponentially smoothed per-frame twist with
/// one slot per forecast head. The first observation seeds the state so a
/// constant-velocity history forecasts exactly from the first update on.
class PoseMemory {
 public:
  explicit PoseMemory(double alpha = 0.8, uint32_t m_max = 10)
      : alpha_(alpha), heads_(m_max) {}

  uint32_t m_max() const { return static_cast<uint32_t>(heads_.size()); }
  bool initialized() const { return initialized_; }

  /// Folds a keyframe-to-keyframe relative pose spanning `gap_k` frames.
  void update(const RigidTransform& p_rel, uint32_t gap_k);

  /// Head m returns exp(m * smoothed twist); identity before any update.
  RigidTransform forecast(uint32_t m) const;

  TwistVector smoothed(uint32_t head = 1) const;

 private:
  double alpha_;
  bool initialized_ = false;
  std::vector<TwistVector> heads_;
};

using VoxelInstanceMap = std::unordered_map<VoxelKey, uint32_t, VoxelKeyHash>;

/// Recurrent per-voxel forward-flow rates (m/frame), anchored at the voxels
/// where movers currently are. State advects with the scene between
/// keyframes, then blends in the newly estimated key flow.
class FlowMemory {
 public:
  explicit FlowMemory(double voxel_size = 0.2, double alpha = 0.7,
                      uint32_t max_age_keyframes = 100)
      : voxel_size_(voxel_size), alpha_(alpha), max_age_(max_age_keyframes) {}

  double voxel_size() const { return voxel_size_; }
  bool empty() const { return state_.empty(); }
  std::size_t size() const { return state_.size(); }

  /// Advect prior rates by (pose, own motion over the gap), then fold the new
  /// per-frame key rates. Voxels first seen take the new rate directly.
  void update(const FlowField& key_rate, const RigidTransform& pose, uint32_t gap_k,
              uint32_t keyframe_index);

  /// Smoothed per-frame rate field anchored at the currently held voxels.
  FlowField rate_field() const;

  /// m-frame displacement forecast. Anchors are swept along each voxel's
  /// predicted path in sub-voxel steps, all carrying the source voxel's full
  /// m-frame displacement, so queries near any future position of a mover
  /// resolve to its displacement.
  FlowField forecast(uint32_t m) const;

 private:
  struct Entry {
    Vec3 rate = Vec3::Zero();
    uint32_t last_observed = 0;
  };
  double voxel_size_;
  double alpha_;
  uint32_t max_age_;
  std::unordered_map<VoxelKey, Entry, VoxelKeyHash> state_;
};

struct IcpParams {
  int max_iterations = 20;
  double tolerance = 1e-4;
  double trim_keep = 0.8;  // fraction of best correspondences kept
};

/// Point-to-point ICP estimate of the transform taking `prev` coordinates
/// into `cur` coordinates. Requires >= 50 points per cloud; throws on
/// degenerate geometry (rank-deficient correspondence covariance).
RigidTransform estimate_pose(const PointCloud& prev, const PointCloud& cur,
                             const RigidTransform& init, const IcpParams& params = {});

/// One instance's rigid motion over a keyframe gap, in current-keyframe
/// coordinates (maps pose-aligned previous points onto current points).
struct InstanceMotion {
  uint32_t instance_id = 0;
  RigidTransform motion;
  double mean_residual = 0.0;
  uint32_t n_prev = 0;
  uint32_t n_cur = 0;
};

struct KeyFlowParams {
  double voxel_size = 0.2;
  uint32_t min_instance_points = 4;
  IcpParams icp{10, 1e-6, 0.9};
};

struct KeyFlowResult {
  /// Per-frame flow at current instance voxels; feeds the flow memory.
  FlowField rate;
  /// Full-gap displacement at pose-aligned previous voxels; feeds memory
  /// alignment.
  FlowField gap_displacement;
  std::vector<InstanceMotion> instances;
  VoxelInstanceMap rate_instance;
  VoxelInstanceMap displacement_instance;
  std::vector<uint32_t> skipped_instances;  // fewer than min_instance_points
};

/// Per-instance rigid fit between keyframes after ego-pose compensation.
/// Voxels of unmatched (static background) points carry no entry: zero flow.
KeyFlowResult estimate_key_flow(const PointCloud& prev_key, const PointCloud& cur_key,
                                const RigidTransform& pose, uint32_t gap_k,
                                const KeyFlowParams& params = {});

/// Exact key flow from simulator ground truth for the same window.
KeyFlowResult gt_key_flow(const sim::Sequence& seq, uint32_t prev_index,
                          uint32_t cur_index, const KeyFlowParams& params = {});

struct MovingMaskPolicy {
  enum class Kind { none, speed_threshold, gt_instances };
  Kind kind = Kind::speed_threshold;
  double speed_threshold = 0.05;  // m/frame; default voxel_size / 4
  std::vector<uint32_t> moving_instances;  // for Kind::gt_instances
};

/// Drops voxels classified as non-moving; absent voxels read as zero flow.
FlowField apply_moving_mask(const FlowField& field, const MovingMaskPolicy& policy,
                            const VoxelInstanceMap* voxel_instance = nullptr);

/// Masks both fields of a key-flow estimate in place.
void apply_moving_mask(KeyFlowResult& result, const MovingMaskPolicy& policy);

}  // namespace streamseg::forecast

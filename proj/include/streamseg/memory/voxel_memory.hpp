// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "streamseg/backbone/backbone.hpp"
#include "streamseg/core/spatial_index.hpp"
#include "streamseg/core/voxel.hpp"
#include "streamseg/forecast/flow_field.hpp"
#include "streamseg/memory/gru.hpp"

namespace streamseg::memory {

struct MemoryCell {
  backbone::FeatureVec h;
  uint32_t last_observed = 0;  // keyframe index
};

struct MemoryParams {
  double voxel_size = 0.2;
  uint32_t max_age_keyframes = 100;
  double max_range_m = 60.0;
};

enum class HitKind : uint8_t { direct = 0, nn_fallback = 1 };

struct QueryResult {
  std::vector<backbone::FeatureVec> features;
  std::vector<HitKind> hit_kind;
};

/// Hash-table voxel memory. Mutated only while an update is being built;
/// published snapshots treat it as immutable.
class VoxelMemory {
 public:
  explicit VoxelMemory(MemoryParams params = {});

  double voxel_size() const { return params_.voxel_size; }
  const MemoryParams& params() const { return params_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  uint32_t last_keyframe_index() const { return last_keyframe_; }
  void set_last_keyframe_index(uint32_t i) { last_keyframe_ = i; }

  const std::unordered_map<VoxelKey, MemoryCell, VoxelKeyHash>& cells() const {
    return cells_;
  }
  const MemoryCell* cell(const VoxelKey& key) const;
  void upsert(const VoxelKey& key, MemoryCell cell);

  backbone::InstanceCodebook& codebook() { return codebook_; }
  const backbone::InstanceCodebook& codebook() const { return codebook_; }

  /// Rebuilds the companion nearest-neighbor index over occupied voxel
  /// centers. Must be called after the last mutation and before queries.
  void rebuild_index();
  bool index_valid() const;
  const SpatialIndex* index() const { return index_.get(); }

  /// Nearest occupied cell for each point: direct hash hit when the point's
  /// own voxel is occupied, nearest-center fallback otherwise.
  QueryResult query(const std::vector<Point3>& points) const;

  /// Single-point query used by hot loops.
  std::pair<const MemoryCell*, HitKind> query_one(const Point3& p) const;

 private:
  MemoryParams params_;
  uint32_t last_keyframe_ = 0;
  std::unordered_map<VoxelKey, MemoryCell, VoxelKeyHash> cells_;
  std::shared_ptr<const SpatialIndex> index_;
  std::vector<VoxelKey> index_keys_;
  backbone::InstanceCodebook codebook_;
};

/// Motion alignment: each cell's voxel center c moves to
/// pose * c + displacement(pose * c) and is re-bucketed. Collisions merge by
/// element-wise mean of h and max of last_observed. The displacement field
/// covers the whole keyframe gap (per-frame rate times gap).
VoxelMemory align_memory(const VoxelMemory& mem, const RigidTransform& pose,
                         const forecast::FlowField& displacement);

/// Gated recurrent update with the keyframe's voxelized features.
/// Voxels present in both blend by the update gate; feature-only voxels
/// initialize from the candidate map; memory-only voxels are kept unchanged
/// (then aged out by the eviction rules).
VoxelMemory gru_update(
    const VoxelMemory& aligned,
    const std::unordered_map<VoxelKey, backbone::FeatureVec, VoxelKeyHash>& features,
    const GruWeights& weights, uint32_t keyframe_index);

/// Mean feature per occupied voxel.
std::unordered_map<VoxelKey, backbone::FeatureVec, VoxelKeyHash> voxelize_features(
    const std::vector<Point3>& points, const std::vector<backbone::FeatureVec>& features,
    double voxel_size);

}  // namespace streamseg::memory

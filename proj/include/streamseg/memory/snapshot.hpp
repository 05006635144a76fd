// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "streamseg/backbone/backbone.hpp"
#include "streamseg/core/se3.hpp"
#include "streamseg/forecast/flow_field.hpp"
#include "streamseg/memory/voxel_memory.hpp"

namespace streamseg::memory {

inline uint64_t snapshot_stamp(uint64_t version) {
  uint64_t h = version + 0x9e3779b97f4a7c15ULL;
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  return h;
}

/// Immutable bundle published by the predictive context: memory, forecast
/// tables, and the raw keyframe output. `stamp` is derived from `version`;
/// readers use the pair to assert they never observe a torn snapshot.
struct Snapshot {
  uint64_t version = 0;
  uint32_t keyframe_index = 0;
  VoxelMemory memory;

  std::vector<RigidTransform> pose_forecast;  // index m-1, m = 1..m_max
  std::vector<forecast::FlowField> flow_forecast;
  forecast::FlowField rate_field;            // per-frame rates at source voxels
  std::vector<VoxelMemory> forward_aligned;  // only for the forward strategy

  // Raw keyframe output for memoryless (baseline) queries.
  std::vector<Point3> keyframe_points;
  backbone::HeadOutput keyframe_labels;
  std::shared_ptr<const SpatialIndex> keyframe_index_tree;

  uint64_t stamp = snapshot_stamp(0);

  const RigidTransform& pose_at(uint32_t m) const {
    return pose_forecast.at(m - 1);
  }
  const forecast::FlowField& flow_at(uint32_t m) const {
    return flow_forecast.at(m - 1);
  }
  bool consistent() const { return stamp == snapshot_stamp(version); }
};

/// Single-writer multi-reader publication slot. The writer retains every
/// published snapshot, so readers may keep using older versions for as long
/// as the channel lives; reads are wait-free pointer loads.
class SnapshotChannel {
 public:
  void publish(std::shared_ptr<const Snapshot> snap) {
    retained_.push_back(std::move(snap));
    current_.store(retained_.back().get(), std::memory_order_release);
  }

  const Snapshot* latest() const { return current_.load(std::memory_order_acquire); }

  std::size_t published_count() const { return retained_.size(); }
  const std::vector<std::shared_ptr<const Snapshot>>& retained() const {
    return retained_;
  }

 private:
  std::atomic<const Snapshot*> current_{nullptr};
  std::vector<std::shared_ptr<const Snapshot>> retained_;  // writer-owned
};

}  // namespace streamseg::memory

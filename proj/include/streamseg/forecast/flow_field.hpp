// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <unordered_map>
#include <vector>

#include "streamseg/core/spatial_index.hpp"
#include "streamseg/core/voxel.hpp"

namespace streamseg::forecast {

/// Per-voxel forward-flow vectors with a local spatial query. Queries outside
/// the support radius return zero: absent flow means "does not move".
class FlowField {
 public:
  explicit FlowField(double voxel_size = 0.2)
      : voxel_size_(voxel_size), query_radius_(2.0 * voxel_size) {}

  double voxel_size() const { return voxel_size_; }
  double query_radius() const { return query_radius_; }
  void set_query_radius(double r) { query_radius_ = r; }

  std::size_t size() const { return vectors_.size(); }
  bool empty() const { return vectors_.empty(); }
  const std::unordered_map<VoxelKey, Vec3, VoxelKeyHash>& vectors() const {
    return vectors_;
  }

  /// Inserts or averages into a voxel (multiple writers to one key blend).
  void accumulate(const VoxelKey& key, const Vec3& v);
  void set(const VoxelKey& key, const Vec3& v);

  /// Builds the nearest-neighbor index; call once after the last insert.
  void finalize();
  bool finalized() const { return index_ != nullptr || vectors_.empty(); }

  /// Nearest occupied voxel's vector within the query radius, else zero.
  Vec3 query(const Point3& p) const;

  /// Same support, every vector scaled (e.g. per-frame rate -> m-frame
  /// displacement).
  FlowField scaled(double factor) const;

 private:
  double voxel_size_;
  double query_radius_;
  std::unordered_map<VoxelKey, Vec3, VoxelKeyHash> vectors_;
  std::unordered_map<VoxelKey, uint32_t, VoxelKeyHash> counts_;
  std::shared_ptr<const SpatialIndex> index_;
  std::vector<VoxelKey> index_keys_;
};

}  // namespace streamseg::forecast

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "streamseg/core/se3.hpp"

namespace streamseg {

/// Integer grid cell index; key = floor(coord / voxel_size) per component.
struct VoxelKey {
  int64_t ix = 0;
  int64_t iy = 0;
  int64_t iz = 0;

  bool operator==(const VoxelKey& o) const {
    return ix == o.ix && iy == o.iy && iz == o.iz;
  }
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    // FNV-style mix of the three indices.
    uint64_t h = 1469598103934665603ULL;
    for (uint64_t v : {static_cast<uint64_t>(k.ix), static_cast<uint64_t>(k.iy),
                       static_cast<uint64_t>(k.iz)}) {
      h ^= v;
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

inline VoxelKey voxel_key_of(const Point3& p, double voxel_size) {
  return VoxelKey{static_cast<int64_t>(std::floor(p.x() / voxel_size)),
                  static_cast<int64_t>(std::floor(p.y() / voxel_size)),
                  static_cast<int64_t>(std::floor(p.z() / voxel_size))};
}

inline Point3 voxel_center(const VoxelKey& k, double voxel_size) {
  return Point3((static_cast<double>(k.ix) + 0.5) * voxel_size,
                (static_cast<double>(k.iy) + 0.5) * voxel_size,
                (static_cast<double>(k.iz) + 0.5) * voxel_size);
}

using VoxelBuckets = std::unordered_map<VoxelKey, std::vector<uint32_t>, VoxelKeyHash>;

/// Assigns every point to exactly one bucket. Non-finite points are rejected.
inline VoxelBuckets voxelize(const std::vector<Point3>& points, double voxel_size) {
  if (!(voxel_size > 0.0)) {
    throw std::invalid_argument("voxelize: voxel_size must be > 0");
  }
  VoxelBuckets buckets;
  buckets.reserve(points.size());
  for (uint32_t i = 0; i < points.size(); ++i) {
    if (!is_finite(points[i])) {
      throw std::invalid_argument("voxelize: non-finite point");
    }
    buckets[voxel_key_of(points[i], voxel_size)].push_back(i);
  }
  return buckets;
}

}  // namespace streamseg

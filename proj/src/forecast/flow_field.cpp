// SPDX-License-Identifier: Apache-2.0

#include "streamseg/forecast/flow_field.hpp"

namespace streamseg::forecast {

void FlowField::accumulate(const VoxelKey& key, const Vec3& v) {
  auto [it, inserted] = vectors_.emplace(key, v);
  if (!inserted) {
    const uint32_t n = ++counts_[key];
    it->second += (v - it->second) / static_cast<double>(n + 1);
  } else {
    counts_[key] = 0;
  }
  index_.reset();
}

void FlowField::set(const VoxelKey& key, const Vec3& v) {
  vectors_[key] = v;
  counts_[key] = 0;
  index_.reset();
}

void FlowField::finalize() {
  if (vectors_.empty()) {
    index_.reset();
    index_keys_.clear();
    return;
  }
  std::vector<Point3> centers;
  centers.reserve(vectors_.size());
  index_keys_.clear();
  index_keys_.reserve(vectors_.size());
  for (const auto& [key, vec] : vectors_) {
    centers.push_back(voxel_center(key, voxel_size_));
    index_keys_.push_back(key);
  }
  index_ = std::make_shared<SpatialIndex>(std::move(centers));
}

Vec3 FlowField::query(const Point3& p) const {
  if (vectors_.empty()) return Vec3::Zero();
  // Direct hit first: cheapest and exact.
  auto it = vectors_.find(voxel_key_of(p, voxel_size_));
  if (it != vectors_.end()) return it->second;
  if (!index_) return Vec3::Zero();
  const NnHit hit = index_->nn_query(p);
  if (hit.distance > query_radius_) return Vec3::Zero();
  return vectors_.at(index_keys_[hit.index]);
}

FlowField FlowField::scaled(double factor) const {
  FlowField out(voxel_size_);
  out.query_radius_ = query_radius_;
  out.vectors_ = vectors_;
  for (auto& [key, vec] : out.vectors_) vec *= factor;
  out.index_ = index_;
  out.index_keys_ = index_keys_;
  return out;
}

}  // namespace streamseg::forecast

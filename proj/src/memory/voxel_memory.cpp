// SPDX-License-Identifier: Apache-2.0

#include "streamseg/memory/voxel_memory.hpp"

#include <stdexcept>

namespace streamseg::memory {

VoxelMemory::VoxelMemory(MemoryParams params) : params_(params) {
  if (!(params_.voxel_size > 0.0)) {
    throw std::invalid_argument("VoxelMemory: voxel_size must be > 0");
  }
}

const MemoryCell* VoxelMemory::cell(const VoxelKey& key) const {
  auto it = cells_.find(key);
  return it == cells_.end() ? nullptr : &it->second;
}

void VoxelMemory::upsert(const VoxelKey& key, MemoryCell cell) {
  cells_[key] = std::move(cell);
  index_.reset();
}

void VoxelMemory::rebuild_index() {
  if (cells_.empty()) {
    index_.reset();
    index_keys_.clear();
    return;
  }
  std::vector<Point3> centers;
  centers.reserve(cells_.size());
  index_keys_.clear();
  index_keys_.reserve(cells_.size());
  for (const auto& [key, c] : cells_) {
    centers.push_back(voxel_center(key, params_.voxel_size));
    index_keys_.push_back(key);
  }
  index_ = std::make_shared<SpatialIndex>(std::move(centers));
}

bool VoxelMemory::index_valid() const {
  return cells_.empty() ? true : (index_ != nullptr && index_->size() == cells_.size());
}

std::pair<const MemoryCell*, HitKind> VoxelMemory::query_one(const Point3& p) const {
  auto it = cells_.find(voxel_key_of(p, params_.voxel_size));
  if (it != cells_.end()) return {&it->second, HitKind::direct};
  const NnHit hit = index_->nn_query(p);
  return {&cells_.at(index_keys_[hit.index]), HitKind::nn_fallback};
}

QueryResult VoxelMemory::query(const std::vector<Point3>& points) const {
  if (cells_.empty()) throw std::runtime_error("VoxelMemory: query on empty memory");
  if (!index_valid()) throw std::logic_error("VoxelMemory: index not rebuilt");
  QueryResult out;
  out.features.resize(points.size());
  out.hit_kind.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto [cell, kind] = query_one(points[i]);
    out.features[i] = cell->h;
    out.hit_kind[i] = kind;
  }
  return out;
}

VoxelMemory align_memory(const VoxelMemory& mem, const RigidTransform& pose,
                         const forecast::FlowField& displacement) {
  VoxelMemory out(mem.params());
  out.set_last_keyframe_index(mem.last_keyframe_index());
  out.codebook() = mem.codebook();
  std::unordered_map<VoxelKey, uint32_t, VoxelKeyHash> merge_count;
  for (const auto& [key, cell] : mem.cells()) {
    Point3 c = voxel_center(key, mem.voxel_size());
    Point3 moved = pose.apply(c);
    moved += displacement.query(moved);
    const VoxelKey new_key = voxel_key_of(moved, mem.voxel_size());
    const MemoryCell* existing = out.cell(new_key);
    if (existing == nullptr) {
      out.upsert(new_key, cell);
      merge_count[new_key] = 1;
    } else {
      // Collision: element-wise mean of h, newest observation wins the stamp.
      MemoryCell merged = *existing;
      const uint32_t n = ++merge_count[new_key];
      merged.h += (cell.h - merged.h) / static_cast<double>(n);
      merged.last_observed = std::max(merged.last_observed, cell.last_observed);
      out.upsert(new_key, merged);
    }
  }
  return out;
}

VoxelMemory gru_update(
    const VoxelMemory& aligned,
    const std::unordered_map<VoxelKey, backbone::FeatureVec, VoxelKeyHash>& features,
    const GruWeights& weights, uint32_t keyframe_index) {
  weights.check();
  const Eigen::Index f_dim = weights.feature_dim();
  VoxelMemory out(aligned.params());
  out.set_last_keyframe_index(keyframe_index);
  out.codebook() = aligned.codebook();

  auto sigmoid = [](const Eigen::VectorXd& x) {
    return (1.0 / (1.0 + (-x.array()).exp())).matrix();
  };

  // Memory-only voxels are carried over, then aged/range-evicted.
  const auto& params = aligned.params();
  for (const auto& [key, cell] : aligned.cells()) {
    if (features.count(key) != 0) continue;
    if (keyframe_index - cell.last_observed > params.max_age_keyframes) continue;
    if (voxel_center(key, params.voxel_size).norm() > params.max_range_m) continue;
    out.upsert(key, cell);
  }

  Eigen::VectorXd cat(2 * f_dim);
  for (const auto& [key, f_t] : features) {
    if (f_t.size() != f_dim) {
      throw std::invalid_argument("gru_update: feature dimension mismatch");
    }
    MemoryCell next;
    next.last_observed = keyframe_index;
    const MemoryCell* prev = aligned.cell(key);
    if (prev == nullptr) {
      // Fresh voxel: candidate map with zero state.
      cat.head(f_dim) = f_t;
      cat.tail(f_dim).setZero();
      next.h = (weights.w_candidate * cat + weights.b_candidate).array().tanh();
    } else {
      if (prev->h.size() != f_dim) {
        throw std::invalid_argument("gru_update: state dimension mismatch");
      }
      cat.head(f_dim) = f_t;
      cat.tail(f_dim) = prev->h;
      const Eigen::VectorXd z = sigmoid(weights.w_update * cat + weights.b_update);
      const Eigen::VectorXd r = sigmoid(weights.w_reset * cat + weights.b_reset);
      cat.tail(f_dim) = r.cwiseProduct(prev->h);
      const Eigen::VectorXd candidate =
          (weights.w_candidate * cat + weights.b_candidate).array().tanh();
      next.h = z.cwiseProduct(candidate) +
               (Eigen::VectorXd::Ones(f_dim) - z).cwiseProduct(prev->h);
    }
    out.upsert(key, next);
  }
  return out;
}

std::unordered_map<VoxelKey, backbone::FeatureVec, VoxelKeyHash> voxelize_features(
    const std::vector<Point3>& points, const std::vector<backbone::FeatureVec>& features,
    double voxel_size) {
  if (points.size() != features.size()) {
    throw std::invalid_argument("voxelize_features: length mismatch");
  }
  std::unordered_map<VoxelKey, backbone::FeatureVec, VoxelKeyHash> out;
  std::unordered_map<VoxelKey, uint32_t, VoxelKeyHash> counts;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const VoxelKey key = voxel_key_of(points[i], voxel_size);
    auto [it, inserted] = out.emplace(key, features[i]);
    if (inserted) {
      counts[key] = 1;
    } else {
      const uint32_t n = ++counts[key];
      it->second += (features[i] - it->second) / static_cast<double>(n);
    }
  }
  return out;
}

}  // namespace streamseg::memory

// SPDX-License-Identifier: Apache-2.0

#include "streamseg/align/alignment.hpp"

#include <chrono>
#include <stdexcept>

namespace streamseg::align {

StrategyKind strategy_from_string(const std::string& name) {
  if (name == "none") return StrategyKind::none;
  if (name == "backward") return StrategyKind::backward_flow;
  if (name == "forward") return StrategyKind::forward_flow;
  if (name == "inverse1") return StrategyKind::inverse_single;
  if (name == "brute") return StrategyKind::inverse_brute;
  if (name == "iterate") return StrategyKind::inverse_iteration;
  throw std::invalid_argument("unknown alignment strategy: " + name);
}

std::string strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::none: return "none";
    case StrategyKind::backward_flow: return "backward";
    case StrategyKind::forward_flow: return "forward";
    case StrategyKind::inverse_single: return "inverse1";
    case StrategyKind::inverse_brute: return "brute";
    case StrategyKind::inverse_iteration: return "iterate";
  }
  return "unknown";
}

std::vector<Point3> ego_align(const std::vector<Point3>& points,
                              const RigidTransform& pose_to_future) {
  const RigidTransform back = pose_to_future.inverse();
  std::vector<Point3> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = back.apply(points[i]);
  return out;
}

std::optional<Point3> inverse_brute_search(const Point3& p,
                                           const memory::VoxelMemory& memory,
                                           const forecast::FlowField& field,
                                           double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("inverse_brute_search: radius <= 0");
  if (memory.empty() || !memory.index_valid()) return std::nullopt;
  const auto candidates = memory.index()->radius_query(p, radius);
  if (candidates.empty()) return std::nullopt;
  Point3 best = Point3::Zero();
  double best_err = std::numeric_limits<double>::infinity();
  for (uint32_t idx : candidates) {
    const Point3 x = memory.index()->points()[idx];
    const double err = (x + field.query(x) - p).norm();
    if (err < best_err) {
      best_err = err;
      best = x;
    }
  }
  return best;
}

ForwardAlignResult forward_flow_align(const memory::VoxelMemory& memory,
                                      const forecast::FlowField& displacement) {
  const auto t0 = std::chrono::steady_clock::now();
  ForwardAlignResult out{memory::VoxelMemory(memory.params()), 0.0};
  out.memory.set_last_keyframe_index(memory.last_keyframe_index());
  out.memory.codebook() = memory.codebook();
  std::unordered_map<VoxelKey, uint32_t, VoxelKeyHash> merge_count;
  for (const auto& [key, cell] : memory.cells()) {
    const Point3 c = voxel_center(key, memory.voxel_size());
    const Point3 moved = c + displacement.query(c);
    const VoxelKey new_key = voxel_key_of(moved, memory.voxel_size());
    const memory::MemoryCell* existing = out.memory.cell(new_key);
    if (existing == nullptr) {
      out.memory.upsert(new_key, cell);
      merge_count[new_key] = 1;
    } else {
      memory::MemoryCell merged = *existing;
      const uint32_t n = ++merge_count[new_key];
      merged.h += (cell.h - merged.h) / static_cast<double>(n);
      merged.last_observed = std::max(merged.last_observed, cell.last_observed);
      out.memory.upsert(new_key, merged);
    }
  }
  out.memory.rebuild_index();
  out.elapsed_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return out;
}

}  // namespace streamseg::align

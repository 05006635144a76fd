// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "streamseg/core/se3.hpp"
#include "streamseg/forecast/flow_field.hpp"
#include "streamseg/memory/voxel_memory.hpp"

namespace streamseg::align {

enum class StrategyKind : uint8_t {
  none,
  backward_flow,
  forward_flow,
  inverse_single,
  inverse_brute,
  inverse_iteration,
};

StrategyKind strategy_from_string(const std::string& name);
std::string strategy_name(StrategyKind kind);

struct AlignmentStrategy {
  StrategyKind kind = StrategyKind::inverse_iteration;
  double epsilon = 1e-3;      // meters
  int n_max = 10;             // iteration patience
  double brute_radius = 0.6;  // meters; default 3 x voxel_size
};

struct PointAlignment {
  Point3 position = Point3::Zero();
  bool converged = false;
  int iterations = 0;
};

/// Maps incoming points into the memory keyframe's coordinates.
/// `pose_to_future` is the forecast (or known) transform from the keyframe
/// into the incoming frame.
std::vector<Point3> ego_align(const std::vector<Point3>& points,
                              const RigidTransform& pose_to_future);

/// Fixed-point search for the memory preimage of p under the forward-flow
/// query Q: iterate p' <- p - Q(p') until ||(p' - p) + Q(p')|| < eps or the
/// patience runs out. `converged` reports whether the residual bound holds at
/// the returned point.
template <typename Query>
PointAlignment inverse_flow_iteration(const Point3& p, Query&& q, double epsilon,
                                      int n_max) {
  PointAlignment out;
  out.position = p;
  for (;;) {
    const Vec3 f = q(out.position);
    const double residual = ((out.position - p) + f).norm();
    if (residual < epsilon) {
      out.converged = true;
      return out;
    }
    if (out.iterations >= n_max) {
      out.converged = false;
      return out;
    }
    out.position = p - f;
    ++out.iterations;
  }
}

/// One-shot inverse: p - Q(p).
template <typename Query>
Point3 inverse_single(const Point3& p, Query&& q) {
  return p - q(p);
}

/// Scans occupied memory voxels within `radius` of p for the center x
/// minimizing ||x + Q(x) - p||. Empty ball -> nullopt.
std::optional<Point3> inverse_brute_search(const Point3& p,
                                           const memory::VoxelMemory& memory,
                                           const forecast::FlowField& field,
                                           double radius);

/// Moves every memory voxel center by its forecast displacement and rebuilds
/// the index. The expensive path the inverse iteration avoids; wall cost is
/// returned for comparisons.
struct ForwardAlignResult {
  memory::VoxelMemory memory;
  double elapsed_ms = 0.0;
};
ForwardAlignResult forward_flow_align(const memory::VoxelMemory& memory,
                                      const forecast::FlowField& displacement);

/// Single-shot backward mapping: p + backward(p), with the backward field
/// forecast as the negated forward rate at the query location.
template <typename Query>
Point3 backward_flow_align(const Point3& p, Query&& backward) {
  return p + backward(p);
}

}  // namespace streamseg::align

// SPDX-License-Identifier: Apache-2.0

#include "streamseg/align/kernels.hpp"

#include <stdexcept>

namespace streamseg::align {

namespace {

PointAlignment align_one(const Point3& p, const DynamicAlignContext& ctx) {
  const AlignmentStrategy& s = ctx.strategy;
  auto q = [&](const Point3& x) { return ctx.forecast->query(x); };
  switch (s.kind) {
    case StrategyKind::none:
    case StrategyKind::forward_flow:
      // Forward strategy aligns the memory, not the points.
      return {p, true, 0};
    case StrategyKind::backward_flow: {
      const Point3 moved = backward_flow_align(
          p, [&](const Point3& x) { return ctx.backward->query(x); });
      return {moved, true, 1};
    }
    case StrategyKind::inverse_single:
      return {inverse_single(p, q), true, 1};
    case StrategyKind::inverse_brute: {
      const auto found = inverse_brute_search(p, *ctx.memory, *ctx.forecast, s.brute_radius);
      if (found.has_value()) return {*found, true, 1};
      return {inverse_single(p, q), false, 1};
    }
    case StrategyKind::inverse_iteration: {
      PointAlignment r = inverse_flow_iteration(p, q, s.epsilon, s.n_max);
      if (!r.converged) {
        // Non-convergence path: single-shot inverse stands in.
        r.position = inverse_single(p, q);
      }
      return r;
    }
  }
  return {p, true, 0};
}

}  // namespace

BatchAlignResult dynamic_align_batch_serial(const std::vector<Point3>& points,
                                            const DynamicAlignContext& ctx) {
  BatchAlignResult out;
  out.positions.resize(points.size());
  out.converged.resize(points.size());
  out.iterations.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const PointAlignment r = align_one(points[i], ctx);
    out.positions[i] = r.position;
    out.converged[i] = r.converged ? 1 : 0;
    out.iterations[i] = r.iterations;
  }
  return out;
}

BatchAlignResult dynamic_align_batch(const std::vector<Point3>& points,
                                     const DynamicAlignContext& ctx, Execution exec) {
  if ((ctx.strategy.kind != StrategyKind::none &&
       ctx.strategy.kind != StrategyKind::forward_flow && ctx.forecast == nullptr) ||
      (ctx.strategy.kind == StrategyKind::backward_flow && ctx.backward == nullptr) ||
      (ctx.strategy.kind == StrategyKind::inverse_brute && ctx.memory == nullptr)) {
    throw std::invalid_argument("dynamic_align_batch: missing context for strategy");
  }
  if (exec == Execution::serial) return dynamic_align_batch_serial(points, ctx);

  BatchAlignResult out;
  out.positions.resize(points.size());
  out.converged.resize(points.size());
  out.iterations.resize(points.size());
  const auto n = static_cast<int64_t>(points.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const PointAlignment r = align_one(points[i], ctx);
    out.positions[i] = r.position;
    out.converged[i] = r.converged ? 1 : 0;
    out.iterations[i] = r.iterations;
  }
  return out;
}

memory::QueryResult query_batch_serial(const memory::VoxelMemory& memory,
                                       const std::vector<Point3>& points) {
  return memory.query(points);
}

memory::QueryResult query_batch(const memory::VoxelMemory& mem,
                                const std::vector<Point3>& points, Execution exec) {
  if (exec == Execution::serial) return query_batch_serial(mem, points);
  if (mem.empty()) throw std::runtime_error("query_batch: empty memory");
  if (!mem.index_valid()) throw std::logic_error("query_batch: index not rebuilt");
  memory::QueryResult out;
  out.features.resize(points.size());
  out.hit_kind.resize(points.size());
  const auto n = static_cast<int64_t>(points.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    auto [cell, kind] = mem.query_one(points[i]);
    out.features[i] = cell->h;
    out.hit_kind[i] = kind;
  }
  return out;
}

}  // namespace streamseg::align

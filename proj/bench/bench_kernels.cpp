// SPDX-License-Identifier: Apache-2.0
//
// Serial vs OpenMP comparison for the per-point inference kernels, plus the
// forward-align vs inverse-iteration cost pair the flow-strategy table cares
// about. Prints CSV: kernel,n,serial_ms,parallel_ms,speedup.

#include <chrono>
#include <cstdio>
#include <random>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "streamseg/align/kernels.hpp"
#include "streamseg/backbone/backbone.hpp"
#include "streamseg/forecast/forecast.hpp"
#include "streamseg/memory/voxel_memory.hpp"

using namespace streamseg;

namespace {

using ClockT = std::chrono::steady_clock;

double ms_since(ClockT::time_point t0) {
  return std::chrono::duration<double, std::milli>(ClockT::now() - t0).count();
}

memory::VoxelMemory make_memory(uint32_t n_voxels, std::mt19937_64& rng) {
  backbone::FeatureDims dims{8, 8};
  memory::VoxelMemory mem{memory::MemoryParams{0.2, 100, 1e9}};
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  backbone::InstanceCodebook book(dims.embed_dim, 5);
  while (mem.size() < n_voxels) {
    const Point3 p(u(rng), u(rng), u(rng));
    memory::MemoryCell cell;
    backbone::FeatureVec f = backbone::FeatureVec::Zero(dims.total());
    f[1 + (mem.size() % 5)] = 1.0;
    f.tail(dims.embed_dim) = book.centroid(1 + mem.size() % 16);
    cell.h = f;
    mem.upsert(voxel_key_of(p, mem.voxel_size()), cell);
  }
  mem.codebook() = book;
  mem.rebuild_index();
  return mem;
}

forecast::FlowField make_field(const memory::VoxelMemory& mem) {
  forecast::FlowField field(mem.voxel_size());
  std::size_t i = 0;
  for (const auto& [key, cell] : mem.cells()) {
    if (i++ % 8 == 0) field.set(key, Vec3(0.35, 0.1, 0.0));
  }
  field.finalize();
  return field;
}

std::vector<Point3> make_queries(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  std::vector<Point3> pts(n);
  for (auto& p : pts) p = Point3(u(rng), u(rng), u(rng));
  return pts;
}

}  // namespace

int main(int argc, char** argv) {
  uint32_t n_voxels = argc > 1 ? static_cast<uint32_t>(std::atoi(argv[1])) : 100000;
  std::size_t n_points = argc > 2 ? static_cast<std::size_t>(std::atoi(argv[2])) : 20000;

#ifdef _OPENMP
  std::printf("# threads=%d\n", omp_get_max_threads());
#else
  std::printf("# threads=1 (no OpenMP)\n");
#endif
  std::printf("kernel,n,serial_ms,parallel_ms,speedup\n");

  std::mt19937_64 rng(29);
  memory::VoxelMemory mem = make_memory(n_voxels, rng);
  forecast::FlowField field = make_field(mem);
  std::vector<Point3> queries = make_queries(n_points, rng);

  align::DynamicAlignContext ctx;
  ctx.forecast = &field;
  ctx.memory = &mem;
  ctx.strategy.kind = align::StrategyKind::inverse_iteration;

  auto t0 = ClockT::now();
  auto serial_align = align::dynamic_align_batch(queries, ctx, align::Execution::serial);
  const double align_serial = ms_since(t0);
  t0 = ClockT::now();
  auto parallel_align = align::dynamic_align_batch(queries, ctx, align::Execution::parallel);
  const double align_parallel = ms_since(t0);
  std::printf("inverse_iteration,%zu,%.3f,%.3f,%.2f\n", queries.size(), align_serial,
              align_parallel, align_serial / align_parallel);

  t0 = ClockT::now();
  auto serial_q = align::query_batch(mem, queries, align::Execution::serial);
  const double query_serial = ms_since(t0);
  t0 = ClockT::now();
  auto parallel_q = align::query_batch(mem, queries, align::Execution::parallel);
  const double query_parallel = ms_since(t0);
  std::printf("memory_query,%zu,%.3f,%.3f,%.2f\n", queries.size(), query_serial,
              query_parallel, query_serial / query_parallel);

  // Predictive-side forward alignment (memory move + index rebuild) vs the
  // per-frame inference cost of the iteration path.
  t0 = ClockT::now();
  auto forward = align::forward_flow_align(mem, field);
  const double forward_ms = ms_since(t0);
  t0 = ClockT::now();
  auto it_batch = align::dynamic_align_batch(queries, ctx, align::Execution::parallel);
  auto it_query = align::query_batch(mem, it_batch.positions, align::Execution::parallel);
  const double inference_ms = ms_since(t0);
  std::printf("forward_align_vs_inference,%u,%.3f,%.3f,%.2f\n", n_voxels, forward_ms,
              inference_ms, forward_ms / inference_ms);

  // Keep results alive so the work cannot be elided.
  volatile std::size_t sink = serial_align.positions.size() + parallel_align.positions.size() +
                              serial_q.features.size() + parallel_q.features.size() +
                              forward.memory.size() + it_query.features.size();
  (void)sink;
  return 0;
}

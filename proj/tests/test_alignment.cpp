// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Geometry>
#include <random>

#include "streamseg/align/alignment.hpp"
#include "streamseg/align/kernels.hpp"

using namespace streamseg;
using namespace streamseg::align;

namespace {

/// Analytic rigid velocity field f(x) = v + w x (x - c); Lipschitz constant
/// is exactly |w|.
struct RigidField {
  Vec3 v = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  Point3 center = Point3::Zero();

  Vec3 operator()(const Point3& x) const { return v + omega.cross(x - center); }
};

memory::VoxelMemory grid_memory(double voxel, int half_extent) {
  memory::VoxelMemory mem{memory::MemoryParams{voxel, 100, 1e9}};
  for (int x = -half_extent; x <= half_extent; ++x) {
    for (int y = -half_extent; y <= half_extent; ++y) {
      memory::MemoryCell cell;
      cell.h = backbone::FeatureVec::Constant(1, 0.5);
      mem.upsert(VoxelKey{x, y, 0}, cell);
    }
  }
  mem.rebuild_index();
  return mem;
}

}  // namespace

TEST_CASE("ego_align: identity leaves points unchanged") {
  const std::vector<Point3> pts = {Point3(1, 2, 3), Point3(-1, 0, 5)};
  const auto out = ego_align(pts, RigidTransform::identity());
  CHECK(out == pts);
}

TEST_CASE("ego_align maps future points back onto memory coordinates") {
  RigidTransform to_future;
  to_future.rotation = Eigen::AngleAxisd(0.2, Vec3::UnitZ()).toRotationMatrix();
  to_future.translation = Vec3(1.0, -0.5, 0.0);
  const Point3 memory_point(3.0, 4.0, 0.5);
  const Point3 future_point = to_future.apply(memory_point);
  const auto back = ego_align({future_point}, to_future);
  CHECK((back[0] - memory_point).norm() < 1e-12);
}

TEST_CASE("inverse iteration: zero flow converges immediately") {
  const auto r = inverse_flow_iteration(
      Point3(1, 2, 3), [](const Point3&) { return Vec3::Zero(); }, 1e-3, 10);
  CHECK(r.converged);
  CHECK(r.iterations == 0);
  CHECK(r.position == Point3(1, 2, 3));
}

TEST_CASE("inverse iteration: constant field needs exactly one step") {
  const Vec3 f0(0.5, -0.25, 0.0);
  const auto r = inverse_flow_iteration(
      Point3(1, 1, 1), [&](const Point3&) { return f0; }, 1e-3, 10);
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK((r.position - (Point3(1, 1, 1) - f0)).norm() < 1e-12);
}

TEST_CASE("inverse iteration: rotation field reaches the closed-form preimage") {
  RigidField field;
  field.omega = Vec3(0.0, 0.0, 0.1);
  const Point3 x_star(5.0, 0.0, 0.0);
  const Point3 y = x_star + field(x_star);  // forward image of the preimage
  const auto r = inverse_flow_iteration(y, field, 1e-4, 10);
  CHECK(r.converged);
  CHECK(r.iterations <= 10);
  CHECK((r.position - x_star).norm() < 2e-4);
  // The convergence certificate holds exactly as returned.
  CHECK(((r.position - y) + field(r.position)).norm() < 1e-4);
}

TEST_CASE("inverse_single: exact on constant fields, biased on rotations") {
  const Vec3 f0(0.3, 0.0, 0.0);
  CHECK((inverse_single(Point3(1, 0, 0), [&](const Point3&) { return f0; }) -
         Point3(0.7, 0, 0))
            .norm() < 1e-12);

  RigidField field;
  field.omega = Vec3(0.0, 0.0, 0.1);
  const Point3 x_star(5.0, 0.0, 0.0);
  const Point3 y = x_star + field(x_star);
  const Point3 single = inverse_single(y, field);
  const auto iter = inverse_flow_iteration(y, field, 1e-6, 20);
  const double single_err = (single - x_star).norm();
  const double iter_err = (iter.position - x_star).norm();
  CHECK(single_err > 1e-3);    // first-order residual |Q(p) - Q(x*)|
  CHECK(iter_err < single_err);
  CHECK(single_err ==
        doctest::Approx((field(y) - field(x_star)).norm()).epsilon(1e-9));
}

TEST_CASE("contraction ratios stay under L + 0.05; L > 1 reports divergence") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double L : {0.1, 0.5, 0.9}) {
    RigidField field;
    field.omega = Vec3(0.0, 0.0, L);
    field.v = Vec3(0.2, -0.1, 0.0);
    for (int trial = 0; trial < 50; ++trial) {
      const Point3 x_star(3.0 + u(rng), u(rng), u(rng));
      const Point3 y = x_star + field(x_star);
      // Manual iteration to observe per-step errors.
      Point3 x = y;
      double prev_err = (x - x_star).norm();
      for (int n = 0; n < 10 && prev_err > 1e-12; ++n) {
        x = y - field(x);
        const double err = (x - x_star).norm();
        if (prev_err > 1e-12) {
          CHECK(err / prev_err <= L + 0.05);
        }
        prev_err = err;
      }
    }
  }

  RigidField fast;
  fast.omega = Vec3(0.0, 0.0, 1.2);
  const Point3 x_star(4.0, 0.0, 0.0);
  const Point3 y = x_star + fast(x_star);
  const auto r = inverse_flow_iteration(y, fast, 1e-4, 10);
  CHECK_FALSE(r.converged);  // reported, not silent
  CHECK(r.iterations == 10);
  CHECK(is_finite(r.position));
}

TEST_CASE("inverse_brute_search: static scene returns the query's own voxel") {
  const double voxel = 0.2;
  memory::VoxelMemory mem = grid_memory(voxel, 6);
  forecast::FlowField field(voxel);  // empty: all static
  const Point3 p = voxel_center(VoxelKey{2, 1, 0}, voxel);
  const auto found = inverse_brute_search(p, mem, field, 3.0 * voxel);
  REQUIRE(found.has_value());
  CHECK((*found - p).norm() < 1e-12);
}

TEST_CASE("inverse_brute_search matches an exhaustive scan on a rotation field") {
  const double voxel = 0.2;
  memory::VoxelMemory mem = grid_memory(voxel, 8);
  forecast::FlowField field(voxel);
  RigidField rot;
  rot.omega = Vec3(0.0, 0.0, 0.25);
  for (const auto& [key, cell] : mem.cells()) {
    field.set(key, rot(voxel_center(key, voxel)));
  }
  field.finalize();

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int trial = 0; trial < 50; ++trial) {
    const Point3 p(u(rng), u(rng), 0.0);
    const double radius = 3.0 * voxel;
    const auto found = inverse_brute_search(p, mem, field, radius);
    REQUIRE(found.has_value());
    // Exhaustive oracle over all occupied voxels inside the ball.
    double best = std::numeric_limits<double>::infinity();
    Point3 best_x = Point3::Zero();
    for (const auto& [key, cell] : mem.cells()) {
      const Point3 x = voxel_center(key, voxel);
      if ((x - p).norm() > radius) continue;
      const double err = (x + field.query(x) - p).norm();
      if (err < best) {
        best = err;
        best_x = x;
      }
    }
    CHECK((*found - best_x).norm() < 1e-12);
  }

  const auto nothing =
      inverse_brute_search(Point3(100, 100, 100), mem, field, 3.0 * voxel);
  CHECK_FALSE(nothing.has_value());
}

TEST_CASE("forward_flow_align: zero flow keeps keys, constant flow shifts them") {
  const double voxel = 0.2;
  memory::VoxelMemory mem = grid_memory(voxel, 4);
  forecast::FlowField none(voxel);
  const auto same = forward_flow_align(mem, none);
  CHECK(same.memory.size() == mem.size());
  for (const auto& [key, cell] : mem.cells()) {
    CHECK(same.memory.cell(key) != nullptr);
  }

  forecast::FlowField shift(voxel);
  for (const auto& [key, cell] : mem.cells()) shift.set(key, Vec3(0.4, 0.0, 0.0));
  shift.finalize();
  const auto moved = forward_flow_align(mem, shift);
  CHECK(moved.memory.size() == mem.size());
  for (const auto& [key, cell] : mem.cells()) {
    CHECK(moved.memory.cell(VoxelKey{key.ix + 2, key.iy, key.iz}) != nullptr);
  }
  CHECK(moved.elapsed_ms >= 0.0);
}

TEST_CASE("backward alignment: exact on static and constant fields, worse on rotations") {
  RigidField still;
  CHECK((backward_flow_align(Point3(1, 2, 3), [&](const Point3& x) { return -still(x); }) -
         Point3(1, 2, 3))
            .norm() < 1e-12);

  const Vec3 f0(0.4, 0.0, 0.0);
  const Point3 x_star(2.0, 1.0, 0.0);
  const Point3 y = x_star + f0;
  CHECK((backward_flow_align(y, [&](const Point3&) { return -f0; }) - x_star).norm() <
        1e-12);

  RigidField rot;
  rot.omega = Vec3(0.0, 0.0, 0.3);
  const Point3 xs(4.0, -1.0, 0.0);
  const Point3 yy = xs + rot(xs);
  const Point3 back = backward_flow_align(yy, [&](const Point3& x) { return -rot(x); });
  const auto iter = inverse_flow_iteration(yy, rot, 1e-6, 20);
  CHECK((back - xs).norm() > (iter.position - xs).norm());
}

TEST_CASE("strategy equivalence on spatially constant fields") {
  const double voxel = 0.2;
  memory::VoxelMemory mem = grid_memory(voxel, 8);
  const Vec3 f0(0.2, 0.0, 0.0);  // exactly one voxel
  forecast::FlowField field(voxel);
  for (const auto& [key, cell] : mem.cells()) field.set(key, f0);
  field.finalize();
  const forecast::FlowField backward = field.scaled(-1.0);

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AlignmentStrategy strat;
  strat.epsilon = 1e-3;
  strat.n_max = 10;
  strat.brute_radius = 3.0 * voxel;

  for (int trial = 0; trial < 100; ++trial) {
    const Point3 p(u(rng), u(rng), 0.0);
    std::vector<Point3> results;
    for (auto kind : {StrategyKind::backward_flow, StrategyKind::inverse_single,
                      StrategyKind::inverse_brute, StrategyKind::inverse_iteration}) {
      DynamicAlignContext ctx;
      ctx.forecast = &field;
      ctx.backward = &backward;
      ctx.memory = &mem;
      ctx.strategy = strat;
      ctx.strategy.kind = kind;
      const auto out = dynamic_align_batch({p}, ctx, Execution::serial);
      results.push_back(out.positions[0]);
    }
    // Continuous strategies agree to epsilon; brute returns the voxel center,
    // so every strategy retrieves the same memory cell.
    CHECK((results[0] - results[1]).norm() < strat.epsilon);  // backward vs single
    CHECK((results[0] - results[3]).norm() < strat.epsilon);  // backward vs iterate
    for (std::size_t i = 1; i < results.size(); ++i) {
      CHECK(voxel_key_of(results[i], voxel) == voxel_key_of(results[0], voxel));
    }
  }
}

TEST_CASE("parallel kernels match the serial reference bitwise") {
  const double voxel = 0.2;
  memory::VoxelMemory mem = grid_memory(voxel, 10);
  forecast::FlowField field(voxel);
  RigidField rot;
  rot.omega = Vec3(0.0, 0.0, 0.2);
  rot.v = Vec3(0.1, 0.0, 0.0);
  for (const auto& [key, cell] : mem.cells()) {
    field.set(key, rot(voxel_center(key, voxel)));
  }
  field.finalize();
  const forecast::FlowField backward = field.scaled(-1.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<Point3> pts(5000);
  for (auto& p : pts) p = Point3(u(rng), u(rng), 0.1 * u(rng));

  for (auto kind : {StrategyKind::backward_flow, StrategyKind::inverse_single,
                    StrategyKind::inverse_brute, StrategyKind::inverse_iteration}) {
    DynamicAlignContext ctx;
    ctx.forecast = &field;
    ctx.backward = &backward;
    ctx.memory = &mem;
    ctx.strategy.kind = kind;
    const auto serial = dynamic_align_batch(pts, ctx, Execution::serial);
    const auto parallel = dynamic_align_batch(pts, ctx, Execution::parallel);
    CHECK(serial.positions == parallel.positions);
    CHECK(serial.converged == parallel.converged);
    CHECK(serial.iterations == parallel.iterations);
  }

  const auto qs = query_batch(mem, pts, Execution::serial);
  const auto qp = query_batch(mem, pts, Execution::parallel);
  CHECK(qs.hit_kind == qp.hit_kind);
  for (std::size_t i = 0; i < qs.features.size(); ++i) {
    CHECK(qs.features[i] == qp.features[i]);
  }
}

TEST_CASE("dynamic_align_batch validates its context") {
  DynamicAlignContext ctx;
  ctx.strategy.kind = StrategyKind::inverse_iteration;
  CHECK_THROWS_AS(dynamic_align_batch({Point3(0, 0, 0)}, ctx), std::invalid_argument);
}

TEST_CASE("strategy names round trip") {
  for (auto kind : {StrategyKind::none, StrategyKind::backward_flow,
                    StrategyKind::forward_flow, StrategyKind::inverse_single,
                    StrategyKind::inverse_brute, StrategyKind::inverse_iteration}) {
    CHECK(strategy_from_string(strategy_name(kind)) == kind);
  }
  CHECK_THROWS_AS(strategy_from_string("bogus"), std::invalid_argument);
}

// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Geometry>
#include <random>

#include "streamseg/forecast/forecast.hpp"

using namespace streamseg;
using namespace streamseg::forecast;

namespace {

PointCloud random_cloud(std::size_t n, uint64_t seed, double spread = 10.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  PointCloud pc;
  pc.points.resize(n);
  for (auto& p : pc.points) p = Point3(u(rng), u(rng), u(rng));
  return pc;
}

RigidTransform small_transform() {
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(0.05, Vec3(0.2, 0.3, 0.93).normalized()).toRotationMatrix();
  t.translation = Vec3(0.2, -0.15, 0.1);
  return t;
}

}  // namespace

TEST_CASE("icp: identical clouds give the identity") {
  const PointCloud pc = random_cloud(300, 2);
  const RigidTransform t = estimate_pose(pc, pc, RigidTransform::identity());
  CHECK((t.rotation - Mat3::Identity()).norm() < 1e-6);
  CHECK(t.translation.norm() < 1e-6);
}

TEST_CASE("icp: recovers a known small transform") {
  const PointCloud prev = random_cloud(500, 3);
  const RigidTransform truth = small_transform();
  PointCloud cur = prev.transformed(truth);
  const RigidTransform est = estimate_pose(prev, cur, RigidTransform::identity());
  CHECK((est.translation - truth.translation).norm() < 1e-3);
  CHECK(so3_log(est.rotation.transpose() * truth.rotation).norm() < 1e-3);
}

TEST_CASE("icp: trimmed correspondences survive 20 percent outliers") {
  PointCloud prev = random_cloud(500, 4);
  const RigidTransform truth = small_transform();
  PointCloud cur = prev.transformed(truth);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 100; ++i) {
    cur.points.push_back(Point3(u(rng), u(rng), u(rng)));
  }
  IcpParams params;
  params.trim_keep = 0.8;
  const RigidTransform est = estimate_pose(prev, cur, RigidTransform::identity(), params);
  CHECK((est.translation - truth.translation).norm() < 5e-2);
}

TEST_CASE("icp: rejects tiny clouds and degenerate geometry") {
  const PointCloud tiny = random_cloud(10, 6);
  CHECK_THROWS_AS(estimate_pose(tiny, tiny, RigidTransform::identity()),
                  std::invalid_argument);

  PointCloud line;
  for (int i = 0; i < 100; ++i) line.points.push_back(Point3(0.01 * i, 0.0, 0.0));
  CHECK_THROWS_AS(estimate_pose(line, line, RigidTransform::identity()),
                  std::runtime_error);
}

TEST_CASE("pose memory: constant increments are a fixed point") {
  PoseMemory mem(0.8, 10);
  RigidTransform step;
  step.translation = Vec3(0.5, 0.0, 0.0);
  for (int i = 0; i < 5; ++i) mem.update(step, 1);
  const TwistVector xi = mem.smoothed();
  CHECK((xi.v - Vec3(0.5, 0.0, 0.0)).norm() < 1e-12);
  CHECK(xi.omega.norm() < 1e-12);
}

TEST_CASE("pose memory: alpha zero tracks the newest increment exactly") {
  PoseMemory mem(0.0, 10);
  RigidTransform a;
  a.translation = Vec3(1.0, 0.0, 0.0);
  mem.update(a, 1);
  RigidTransform b;
  b.translation = Vec3(0.0, 2.0, 0.0);
  mem.update(b, 1);
  CHECK((mem.smoothed().v - Vec3(0.0, 2.0, 0.0)).norm() < 1e-12);
}

TEST_CASE("pose memory: alternating increments stay bounded and settle") {
  PoseMemory mem(0.5, 10);
  RigidTransform plus, minus;
  plus.translation = Vec3(1.0, 0.0, 0.0);
  minus.translation = Vec3(-1.0, 0.0, 0.0);
  // Scalar recurrence oracle: s <- 0.5 s + 0.5 x, alternating x = +-1,
  // starting from s = +1 (first-update seeding).
  double oracle = 1.0;
  mem.update(plus, 1);
  std::vector<double> series;
  for (int i = 0; i < 30; ++i) {
    const RigidTransform& x = i % 2 == 0 ? minus : plus;
    mem.update(x, 1);
    oracle = 0.5 * oracle + 0.5 * (i % 2 == 0 ? -1.0 : 1.0);
    CHECK(mem.smoothed().v.x() == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(std::abs(mem.smoothed().v.x()) <= 1.0 + 1e-12);
    series.push_back(mem.smoothed().v.x());
  }
  // Oscillation decays toward the two-cycle limit +-1/3.
  CHECK(std::abs(std::abs(series.back()) - 1.0 / 3.0) < 1e-6);
}

TEST_CASE("pose memory: gap scaling folds per-frame twists") {
  PoseMemory mem(0.8, 10);
  RigidTransform two_frames;
  two_frames.translation = Vec3(1.0, 0.0, 0.0);
  mem.update(two_frames, 2);
  CHECK((mem.smoothed().v - Vec3(0.5, 0.0, 0.0)).norm() < 1e-12);
}

TEST_CASE("forecast_pose: stationary, translation, rotation") {
  PoseMemory stationary(0.8, 10);
  for (int m = 1; m <= 10; ++m) {
    const RigidTransform f = stationary.forecast(m);
    CHECK((f.rotation - Mat3::Identity()).norm() == 0.0);
    CHECK(f.translation.norm() == 0.0);
  }
  CHECK_THROWS_AS(stationary.forecast(0), std::out_of_range);
  CHECK_THROWS_AS(stationary.forecast(11), std::out_of_range);

  PoseMemory translating(0.8, 10);
  RigidTransform step;
  step.translation = Vec3(0.5, 0.0, 0.0);
  translating.update(step, 1);
  CHECK((translating.forecast(4).translation - Vec3(2.0, 0.0, 0.0)).norm() < 1e-12);

  PoseMemory rotating(0.8, 10);
  RigidTransform rot;
  rot.rotation = Eigen::AngleAxisd(0.02, Vec3::UnitZ()).toRotationMatrix();
  rotating.update(rot, 1);
  const RigidTransform ten = rotating.forecast(10);
  const Mat3 oracle = Eigen::AngleAxisd(0.2, Vec3::UnitZ()).toRotationMatrix();
  CHECK((ten.rotation - oracle).norm() < 1e-9);
}

TEST_CASE("forecast consistency and head coherence for constant velocity") {
  const TwistVector ego{Vec3(0.0, 0.0, 0.01), Vec3(0.3, 0.05, 0.0)};
  PoseMemory mem(0.8, 10);
  // Keyframe gaps of 2 frames; relative pose = exp(-2 ego) per the frame
  // convention (i -> j uses exp((i-j) xi)).
  const RigidTransform rel = se3_exp(ego * 2.0).inverse();
  for (int u = 0; u < 3; ++u) mem.update(rel, 2);
  for (uint32_t m = 1; m <= 10; ++m) {
    const RigidTransform f = mem.forecast(m);
    const RigidTransform gt = se3_exp(ego * static_cast<double>(m)).inverse();
    CHECK((f.translation - gt.translation).norm() < 1e-6);
    CHECK(so3_log(f.rotation.transpose() * gt.rotation).norm() < 1e-6);
    const TwistVector per_frame = se3_log(f) * (1.0 / static_cast<double>(m));
    CHECK((per_frame.v - se3_log(mem.forecast(1)).v).norm() < 1e-9);
  }
}

TEST_CASE("flow field: empty query and radius policy") {
  FlowField field(0.2);
  CHECK(field.query(Point3(0, 0, 0)) == Vec3::Zero());
  field.set(VoxelKey{0, 0, 0}, Vec3(1.0, 0.0, 0.0));
  field.finalize();
  CHECK(field.query(Point3(0.1, 0.1, 0.1)) == Vec3(1.0, 0.0, 0.0));
  CHECK(field.query(Point3(0.45, 0.1, 0.1)) == Vec3(1.0, 0.0, 0.0));  // within 2 voxels
  CHECK(field.query(Point3(5.0, 0.0, 0.0)) == Vec3::Zero());          // beyond radius
}

TEST_CASE("flow memory: zero history, constant flow, decaying inputs") {
  FlowMemory mem(0.2, 0.7);
  CHECK(mem.forecast(3).empty());

  FlowField key(0.2);
  key.set(VoxelKey{10, 0, 0}, Vec3(0.1, 0.0, 0.0));
  key.finalize();
  mem.update(key, RigidTransform::identity(), 1, 1);
  const FlowField once = mem.forecast(3);
  CHECK((once.query(voxel_center(VoxelKey{10, 0, 0}, 0.2)) - Vec3(0.3, 0.0, 0.0)).norm() <
        1e-12);

  // Decaying inputs at a fixed voxel (sub-voxel rates so the state voxel
  // does not advect away): scalar recurrence oracle for the EMA.
  FlowMemory decay(0.2, 0.7);
  std::vector<double> inputs = {0.08, 0.06, 0.04, 0.02};
  double oracle = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    FlowField f(0.2);
    f.set(VoxelKey{0, 0, 0}, Vec3(0.0, 0.0, inputs[i]));
    f.finalize();
    decay.update(f, RigidTransform::identity(), 1, static_cast<uint32_t>(i + 1));
    oracle = i == 0 ? inputs[0] : 0.7 * oracle + 0.3 * inputs[i];
    mean += inputs[i];
  }
  mean /= static_cast<double>(inputs.size());
  const Vec3 state = decay.rate_field().query(voxel_center(VoxelKey{0, 0, 0}, 0.2));
  CHECK(state.z() == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(state.z() >= inputs.back());
  CHECK(state.z() <= mean + 0.05);
}

TEST_CASE("flow memory advects state with pose and own motion") {
  FlowMemory mem(0.2, 0.7);
  FlowField key(0.2);
  const Vec3 rate(0.2, 0.0, 0.0);  // exactly one voxel per frame
  key.set(VoxelKey{0, 0, 0}, rate);
  key.finalize();
  mem.update(key, RigidTransform::identity(), 1, 1);
  // Next keyframe 2 frames later, no new observation: the voxel should have
  // moved by 2 * rate.
  mem.update(FlowField(0.2), RigidTransform::identity(), 2, 2);
  const FlowField now = mem.rate_field();
  CHECK((now.query(voxel_center(VoxelKey{2, 0, 0}, 0.2)) - rate).norm() < 1e-12);
}

TEST_CASE("estimate_key_flow: static scene yields an all-zero field") {
  sim::SceneConfig cfg;
  cfg.n_background_points = 400;
  cfg.n_frames = 3;
  sim::RigidBody still;
  still.id = 1;
  still.class_id = 3;
  still.n_points = 120;
  still.center = Point3(4.0, 0.0, 1.0);
  cfg.bodies.push_back(still);
  const sim::Sequence seq = sim::generate_scene(cfg);
  PointCloud prev = seq.frames[0].cloud();
  PointCloud cur = seq.frames[2].cloud();
  const KeyFlowResult result =
      estimate_key_flow(prev, cur, RigidTransform::identity(), 2);
  for (const auto& [key, vec] : result.rate.vectors()) {
    CHECK(vec.norm() < 1e-9);
  }
}

TEST_CASE("estimate_key_flow: translating body recovers per-frame flow") {
  sim::SceneConfig cfg;
  cfg.n_background_points = 400;
  cfg.n_frames = 3;
  sim::RigidBody body;
  body.id = 1;
  body.class_id = 3;
  body.n_points = 300;
  body.center = Point3(4.0, 0.0, 1.0);
  body.v = Vec3(1.0, 0.0, 0.0);
  cfg.bodies.push_back(body);
  const sim::Sequence seq = sim::generate_scene(cfg);
  const KeyFlowResult result = estimate_key_flow(
      seq.frames[0].cloud(), seq.frames[2].cloud(), RigidTransform::identity(), 2);
  REQUIRE(result.instances.size() == 1);
  CHECK(result.instances[0].instance_id == 1);
  for (const auto& [key, vec] : result.rate.vectors()) {
    CHECK((vec - Vec3(1.0, 0.0, 0.0)).norm() < 1e-6);
  }
  // Displacement field covers the aligned-previous voxels with the full gap.
  for (const auto& [key, vec] : result.gap_displacement.vectors()) {
    CHECK((vec - Vec3(2.0, 0.0, 0.0)).norm() < 1e-6);
  }
}

TEST_CASE("estimate_key_flow: tiny instances are skipped with zero flow") {
  PointCloud prev, cur;
  for (int i = 0; i < 3; ++i) {
    prev.points.push_back(Point3(i, 0, 0));
    prev.instance_id.push_back(7);
    cur.points.push_back(Point3(i + 1.0, 0, 0));
    cur.instance_id.push_back(7);
  }
  const KeyFlowResult result =
      estimate_key_flow(prev, cur, RigidTransform::identity(), 1);
  CHECK(result.rate.empty());
  REQUIRE(result.skipped_instances.size() == 1);
  CHECK(result.skipped_instances[0] == 7);
}

TEST_CASE("gt key flow matches the estimator on clean data") {
  sim::SceneConfig cfg;
  cfg.n_background_points = 300;
  cfg.n_frames = 4;
  cfg.ego_twist.v = Vec3(0.1, 0.0, 0.0);
  sim::RigidBody body;
  body.id = 1;
  body.class_id = 3;
  body.n_points = 400;
  body.center = Point3(5.0, 1.0, 1.0);
  body.v = Vec3(0.4, 0.1, 0.0);
  body.omega = Vec3(0.0, 0.0, 0.15);
  cfg.bodies.push_back(body);
  const sim::Sequence seq = sim::generate_scene(cfg);
  const RigidTransform pose = sim::gt_relative_pose(seq, 0, 3);

  const KeyFlowResult gt = gt_key_flow(seq, 0, 3);
  const KeyFlowResult est =
      estimate_key_flow(seq.frames[0].cloud(), seq.frames[3].cloud(), pose, 3);
  REQUIRE(gt.instances.size() == 1);
  REQUIRE(est.instances.size() == 1);
  // Same anchors, near-identical vectors.
  for (const auto& [key, vec] : gt.rate.vectors()) {
    const auto it = est.rate.vectors().find(key);
    if (it == est.rate.vectors().end()) continue;
    CHECK((vec - it->second).norm() < 1e-5);
  }
  // GT field values equal the analytic window displacement at anchor centers.
  const sim::RigidBody& b = seq.bodies[0];
  const Mat3 r3 = so3_exp(3.0 * b.omega);
  for (const auto& [key, vec] : gt.gap_displacement.vectors()) {
    const Point3 c = voxel_center(key, 0.2);
    const Point3 world = seq.frames[3].gt_pose_world_from_ego.apply(c);
    const Point3 moved = b.center + r3 * (world - b.center) + 3.0 * b.v;
    const Vec3 expected =
        seq.frames[3].gt_pose_world_from_ego.inverse().rotation * (moved - world);
    CHECK((vec - expected).norm() < 1e-9);
  }
}

TEST_CASE("moving mask: gt policy and threshold policy") {
  FlowField field(0.2);
  field.set(VoxelKey{0, 0, 0}, Vec3(0.01, 0.0, 0.0));
  field.set(VoxelKey{5, 0, 0}, Vec3(0.2, 0.0, 0.0));
  field.finalize();

  MovingMaskPolicy threshold;
  threshold.kind = MovingMaskPolicy::Kind::speed_threshold;
  threshold.speed_threshold = 0.05;
  const FlowField masked = apply_moving_mask(field, threshold);
  CHECK(masked.vectors().count(VoxelKey{0, 0, 0}) == 0);
  CHECK(masked.vectors().count(VoxelKey{5, 0, 0}) == 1);

  VoxelInstanceMap owner;
  owner[VoxelKey{0, 0, 0}] = 1;
  owner[VoxelKey{5, 0, 0}] = 2;
  MovingMaskPolicy gt;
  gt.kind = MovingMaskPolicy::Kind::gt_instances;
  gt.moving_instances = {1};
  const FlowField gt_masked = apply_moving_mask(field, gt, &owner);
  CHECK(gt_masked.vectors().count(VoxelKey{0, 0, 0}) == 1);
  CHECK(gt_masked.vectors().count(VoxelKey{5, 0, 0}) == 0);
}

TEST_CASE("moving mask: jittered static field is mostly zeroed at theta") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 0.01);
  FlowField field(0.2);
  for (int i = 0; i < 1000; ++i) {
    field.set(VoxelKey{i, 0, 0}, Vec3(g(rng), g(rng), g(rng)));
  }
  field.finalize();
  MovingMaskPolicy policy;
  policy.speed_threshold = 0.05;
  const FlowField masked = apply_moving_mask(field, policy);
  CHECK(static_cast<double>(masked.size()) <= 0.01 * 1000.0);
}

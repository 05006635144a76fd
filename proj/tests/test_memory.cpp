// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "streamseg/memory/snapshot.hpp"
#include "streamseg/memory/voxel_memory.hpp"

using namespace streamseg;
using namespace streamseg::memory;
using backbone::FeatureVec;

namespace {

FeatureVec feature(double value, Eigen::Index dim = 4) {
  return FeatureVec::Constant(dim, value);
}

VoxelMemory small_memory(double voxel = 0.2) {
  VoxelMemory mem{MemoryParams{voxel, 100, 60.0}};
  mem.upsert(VoxelKey{0, 0, 0}, {feature(0.1), 1});
  mem.upsert(VoxelKey{3, 0, 0}, {feature(0.5), 2});
  mem.upsert(VoxelKey{0, 4, 1}, {feature(-0.3), 3});
  mem.rebuild_index();
  return mem;
}

GruWeights scalar_weights() {
  GruWeights w;
  w.w_update = (Eigen::MatrixXd(1, 2) << 1.0, 0.5).finished();
  w.b_update = Eigen::VectorXd::Constant(1, 0.1);
  w.w_reset = (Eigen::MatrixXd(1, 2) << 0.3, -0.4).finished();
  w.b_reset = Eigen::VectorXd::Constant(1, 0.2);
  w.w_candidate = (Eigen::MatrixXd(1, 2) << 1.2, 0.8).finished();
  w.b_candidate = Eigen::VectorXd::Constant(1, -0.1);
  return w;
}

}  // namespace

TEST_CASE("align_memory: identity pose, zero flow leaves memory unchanged") {
  const VoxelMemory mem = small_memory();
  const forecast::FlowField no_flow(0.2);
  const VoxelMemory aligned =
      align_memory(mem, RigidTransform::identity(), no_flow);
  REQUIRE(aligned.size() == mem.size());
  for (const auto& [key, cell] : mem.cells()) {
    const MemoryCell* c = aligned.cell(key);
    REQUIRE(c != nullptr);
    CHECK(c->h == cell.h);
    CHECK(c->last_observed == cell.last_observed);
  }
}

TEST_CASE("align_memory: grid-aligned translation shifts every key") {
  const VoxelMemory mem = small_memory(0.2);
  RigidTransform shift;
  shift.translation = Vec3(0.4, 0.0, 0.0);
  const VoxelMemory aligned = align_memory(mem, shift, forecast::FlowField(0.2));
  REQUIRE(aligned.size() == mem.size());
  for (const auto& [key, cell] : mem.cells()) {
    const MemoryCell* c = aligned.cell(VoxelKey{key.ix + 2, key.iy, key.iz});
    REQUIRE(c != nullptr);
    CHECK(c->h == cell.h);
  }
}

TEST_CASE("align_memory: collisions merge by mean and max stamp") {
  VoxelMemory mem{MemoryParams{1.0, 100, 60.0}};
  mem.upsert(VoxelKey{0, 0, 0}, {feature(0.2), 1});
  mem.upsert(VoxelKey{1, 0, 0}, {feature(0.6), 5});
  // Cell 0 flows one voxel forward, cell 1 stays: both land in voxel {1,0,0}.
  forecast::FlowField flow(1.0);
  flow.set(VoxelKey{0, 0, 0}, Vec3(1.0, 0.0, 0.0));
  flow.set(VoxelKey{1, 0, 0}, Vec3(0.0, 0.0, 0.0));
  flow.finalize();
  const VoxelMemory merged = align_memory(mem, RigidTransform::identity(), flow);
  REQUIRE(merged.size() == 1);
  const MemoryCell* c = merged.cell(VoxelKey{1, 0, 0});
  REQUIRE(c != nullptr);
  CHECK(c->h(0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(c->last_observed == 5);
}

TEST_CASE("gru_update: saturated update gate follows the candidate") {
  backbone::FeatureDims dims{4, 0};
  GruWeights w = GruWeights::defaults(dims);
  w.b_update = Eigen::VectorXd::Constant(4, 50.0);  // z -> 1
  VoxelMemory mem{MemoryParams{0.2, 100, 60.0}};
  mem.upsert(VoxelKey{0, 0, 0}, {feature(-0.2), 0});
  std::unordered_map<VoxelKey, FeatureVec, VoxelKeyHash> f;
  f[VoxelKey{0, 0, 0}] = feature(0.5);
  const VoxelMemory out = gru_update(mem, f, w, 1);
  const MemoryCell* c = out.cell(VoxelKey{0, 0, 0});
  REQUIRE(c != nullptr);
  // Candidate with r ~ 0.9: tanh(f + 0.5 * r * h').
  Eigen::VectorXd cat(8);
  cat.head(4) = feature(0.5);
  cat.tail(4) = feature(-0.2);
  const Eigen::VectorXd r =
      (1.0 / (1.0 + (-(w.w_reset * cat + w.b_reset)).array().exp())).matrix();
  cat.tail(4) = r.cwiseProduct(feature(-0.2));
  const Eigen::VectorXd cand = (w.w_candidate * cat + w.b_candidate).array().tanh();
  CHECK((c->h - cand).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("gru_update: closed update gate retains the old state") {
  backbone::FeatureDims dims{4, 0};
  GruWeights w = GruWeights::defaults(dims);
  w.b_update = Eigen::VectorXd::Constant(4, -50.0);  // z -> 0
  w.w_update.setZero();
  VoxelMemory mem{MemoryParams{0.2, 100, 60.0}};
  mem.upsert(VoxelKey{0, 0, 0}, {feature(-0.2), 0});
  std::unordered_map<VoxelKey, FeatureVec, VoxelKeyHash> f;
  f[VoxelKey{0, 0, 0}] = feature(0.5);
  const VoxelMemory out = gru_update(mem, f, w, 1);
  CHECK((out.cell(VoxelKey{0, 0, 0})->h - feature(-0.2)).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("gru_update: scalar chain matches the hand-evaluated oracle") {
  const GruWeights w = scalar_weights();
  VoxelMemory mem{MemoryParams{0.2, 100, 60.0}};
  mem.upsert(VoxelKey{0, 0, 0}, {FeatureVec::Constant(1, -0.2), 0});
  std::unordered_map<VoxelKey, FeatureVec, VoxelKeyHash> f;
  f[VoxelKey{0, 0, 0}] = FeatureVec::Constant(1, 0.5);
  const VoxelMemory out = gru_update(mem, f, w, 1);

  // Direct transcription of the gate chain.
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double z = sigmoid(1.0 * 0.5 + 0.5 * -0.2 + 0.1);
  const double r = sigmoid(0.3 * 0.5 + -0.4 * -0.2 + 0.2);
  const double cand = std::tanh(1.2 * 0.5 + 0.8 * (r * -0.2) + -0.1);
  const double expected = cand * z + -0.2 * (1.0 - z);
  CHECK(out.cell(VoxelKey{0, 0, 0})->h(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gru_update: fresh voxels initialize from the candidate map") {
  const GruWeights w = scalar_weights();
  VoxelMemory mem{MemoryParams{0.2, 100, 60.0}};
  std::unordered_map<VoxelKey, FeatureVec, VoxelKeyHash> f;
  f[VoxelKey{2, 0, 0}] = FeatureVec::Constant(1, 0.5);
  const VoxelMemory out = gru_update(mem, f, w, 3);
  const double expected = std::tanh(1.2 * 0.5 + -0.1);
  REQUIRE(out.cell(VoxelKey{2, 0, 0}) != nullptr);
  CHECK(out.cell(VoxelKey{2, 0, 0})->h(0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(out.cell(VoxelKey{2, 0, 0})->last_observed == 3);
}

TEST_CASE("gru_update: memory-only voxels persist, dimension mismatch throws") {
  const GruWeights w = scalar_weights();
  VoxelMemory mem{MemoryParams{0.2, 100, 60.0}};
  mem.upsert(VoxelKey{0, 0, 0}, {FeatureVec::Constant(1, 0.7), 2});
  std::unordered_map<VoxelKey, FeatureVec, VoxelKeyHash> none;
  const VoxelMemory out = gru_update(mem, none, w, 3);
  CHECK(out.cell(VoxelKey{0, 0, 0})->h(0) == doctest::Approx(0.7));

  std::unordered_map<VoxelKey, FeatureVec, VoxelKeyHash> bad;
  bad[VoxelKey{0, 0, 0}] = FeatureVec::Constant(2, 0.5);
  CHECK_THROWS_AS(gru_update(mem, bad, w, 3), std::invalid_argument);
}

TEST_CASE("gru invariants: gates in (0,1), state is a convex combination") {
  backbone::FeatureDims dims{6, 2};
  const GruWeights w = GruWeights::defaults(dims);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    FeatureVec f(dims.total()), h(dims.total());
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      f[i] = u(rng);
      h[i] = u(rng);
    }
    VoxelMemory mem{MemoryParams{0.2, 100, 60.0}};
    mem.upsert(VoxelKey{0, 0, 0}, {h, 0});
    std::unordered_map<VoxelKey, FeatureVec, VoxelKeyHash> feats;
    feats[VoxelKey{0, 0, 0}] = f;
    const VoxelMemory out = gru_update(mem, feats, w, 1);
    const FeatureVec& next = out.cell(VoxelKey{0, 0, 0})->h;
    // Recompute candidate to bound the convex combination.
    Eigen::VectorXd cat(2 * dims.total());
    cat.head(dims.total()) = f;
    cat.tail(dims.total()) = h;
    const Eigen::VectorXd z =
        (1.0 / (1.0 + (-(w.w_update * cat + w.b_update)).array().exp())).matrix();
    const Eigen::VectorXd r =
        (1.0 / (1.0 + (-(w.w_reset * cat + w.b_reset)).array().exp())).matrix();
    cat.tail(dims.total()) = r.cwiseProduct(h);
    const Eigen::VectorXd cand = (w.w_candidate * cat + w.b_candidate).array().tanh();
    for (Eigen::Index i = 0; i < next.size(); ++i) {
      CHECK(z[i] > 0.0);
      CHECK(z[i] < 1.0);
      CHECK(r[i] > 0.0);
      CHECK(r[i] < 1.0);
      CHECK(std::abs(cand[i]) < 1.0);
      CHECK(next[i] >= std::min(cand[i], h[i]) - 1e-12);
      CHECK(next[i] <= std::max(cand[i], h[i]) + 1e-12);
    }
  }
}

TEST_CASE("alignment invertibility for grid-multiple translations") {
  const VoxelMemory mem = small_memory(0.2);
  RigidTransform t;
  t.translation = Vec3(0.6, -0.4, 0.2);
  const forecast::FlowField no_flow(0.2);
  const VoxelMemory there = align_memory(mem, t, no_flow);
  const VoxelMemory back = align_memory(there, t.inverse(), no_flow);
  REQUIRE(back.size() == mem.size());
  for (const auto& [key, cell] : mem.cells()) {
    CHECK(back.cell(key) != nullptr);
  }
}

TEST_CASE("query: direct hits, fallback, and the brute-force oracle") {
  VoxelMemory mem = small_memory(0.2);
  const Point3 inside = voxel_center(VoxelKey{0, 0, 0}, 0.2);
  auto res = mem.query({inside});
  CHECK(res.hit_kind[0] == HitKind::direct);
  CHECK(res.features[0](0) == doctest::Approx(0.1));

  const Point3 far(1.0, 1.0, 1.0);  // empty voxel
  res = mem.query({far});
  CHECK(res.hit_kind[0] == HitKind::nn_fallback);

  // Oracle comparison on random queries.
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Point3 q(u(rng), u(rng), u(rng));
    auto got = mem.query({q});
    double best = std::numeric_limits<double>::infinity();
    const MemoryCell* best_cell = nullptr;
    bool direct = false;
    for (const auto& [key, cell] : mem.cells()) {
      if (key == voxel_key_of(q, 0.2)) {
        best_cell = &cell;
        direct = true;
        break;
      }
      const double d = (voxel_center(key, 0.2) - q).norm();
      if (d < best) {
        best = d;
        best_cell = &cell;
      }
    }
    CHECK(got.features[0] == best_cell->h);
    CHECK((got.hit_kind[0] == HitKind::direct) == direct);
  }

  VoxelMemory empty{MemoryParams{}};
  CHECK_THROWS_AS(empty.query({inside}), std::runtime_error);
}

TEST_CASE("snapshot publication: versions increase, old versions stay readable") {
  SnapshotChannel channel;
  auto s1 = std::make_shared<Snapshot>();
  s1->version = 1;
  s1->stamp = snapshot_stamp(1);
  s1->memory = small_memory();
  channel.publish(s1);
  const Snapshot* v1 = channel.latest();
  CHECK(v1->version == 1);
  CHECK(v1->consistent());

  auto s2 = std::make_shared<Snapshot>();
  s2->version = 2;
  s2->stamp = snapshot_stamp(2);
  s2->memory = small_memory();
  s2->memory.upsert(VoxelKey{9, 9, 9}, {feature(1.0), 9});
  channel.publish(s2);

  CHECK(channel.latest()->version == 2);
  // Reader holding v1 still sees the old contents.
  CHECK(v1->version == 1);
  CHECK(v1->memory.cell(VoxelKey{9, 9, 9}) == nullptr);
  CHECK(channel.latest()->memory.cell(VoxelKey{9, 9, 9}) != nullptr);
}

TEST_CASE("gru weights: save/load round trip and dimension check") {
  const GruWeights w = GruWeights::defaults(backbone::FeatureDims{5, 3});
  const std::string path = "/tmp/streamseg_test_weights.bin";
  save_gru_weights(path, w);
  const GruWeights back = load_gru_weights(path);
  CHECK(back.w_update == w.w_update);
  CHECK(back.w_candidate == w.w_candidate);
  CHECK(back.b_reset == w.b_reset);
  std::filesystem::remove(path);

  GruWeights bad = w;
  bad.b_update = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
}

// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "streamseg/backbone/backbone.hpp"

using namespace streamseg;
using namespace streamseg::backbone;

namespace {

sim::Sequence two_body_scene(uint32_t n_frames = 3) {
  sim::SceneConfig cfg;
  cfg.n_background_points = 300;
  cfg.n_frames = n_frames;
  cfg.seed = 17;
  sim::RigidBody a;
  a.id = 1;
  a.class_id = 3;
  a.n_points = 200;
  a.center = Point3(5.0, 0.0, 1.0);
  sim::RigidBody b = a;
  b.id = 2;
  b.class_id = 4;
  b.shape = sim::ShapeKind::cylinder;
  b.center = Point3(-5.0, 3.0, 1.0);
  cfg.bodies = {a, b};
  return sim::generate_scene(cfg);
}

}  // namespace

TEST_CASE("zero noise: oracle + head reproduce ground truth") {
  const sim::Sequence seq = two_body_scene();
  FeatureDims dims{seq.classes.logit_count(), 8};
  OracleBackbone oracle(dims, NoiseModel{}, LatencyModel{}, seq.classes);
  const auto seg = oracle.segment(seq.frames[0]);
  CHECK(seg.features.size() == seq.frames[0].size());
  CHECK(seg.latency_ms == 0.0);
  const HeadOutput out = prediction_head(seg.features, dims, oracle.codebook(), seq.classes);
  CHECK(out.semantic_id == seq.frames[0].semantic_id);
  CHECK(out.instance_id == seq.frames[0].instance_id);
}

TEST_CASE("flip probability one with two classes always misses") {
  sim::SceneConfig cfg;
  cfg.n_background_points = 500;
  cfg.n_frames = 1;
  cfg.classes.classes = {{0, "unlabeled", false}, {1, "ground", false}, {2, "clutter", false}};
  const sim::Sequence seq = sim::generate_scene(cfg);
  FeatureDims dims{seq.classes.logit_count(), 8};
  NoiseModel noise;
  noise.label_flip_prob = 1.0;
  OracleBackbone oracle(dims, noise, LatencyModel{}, seq.classes);
  const auto seg = oracle.segment(seq.frames[0]);
  const HeadOutput out = prediction_head(seg.features, dims, oracle.codebook(), seq.classes);
  for (std::size_t i = 0; i < out.semantic_id.size(); ++i) {
    CHECK(out.semantic_id[i] != seq.frames[0].semantic_id[i]);
  }
}

TEST_CASE("flip fraction concentrates around the configured probability") {
  sim::SceneConfig cfg;
  cfg.n_background_points = 10000;
  cfg.n_frames = 1;
  sim::RigidBody body;  // flips onto thing classes need a codebook entry
  body.id = 1;
  body.class_id = 3;
  body.n_points = 50;
  body.center = Point3(4.0, 0.0, 1.0);
  cfg.bodies.push_back(body);
  const sim::Sequence seq = sim::generate_scene(cfg);
  FeatureDims dims{seq.classes.logit_count(), 8};
  NoiseModel noise;
  noise.label_flip_prob = 0.1;
  OracleBackbone oracle(dims, noise, LatencyModel{}, seq.classes);
  const auto seg = oracle.segment(seq.frames[0]);
  const HeadOutput out = prediction_head(seg.features, dims, oracle.codebook(), seq.classes);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < out.semantic_id.size(); ++i) {
    flipped += out.semantic_id[i] != seq.frames[0].semantic_id[i] ? 1 : 0;
  }
  const double fraction = static_cast<double>(flipped) / out.semantic_id.size();
  CHECK(fraction > 0.09);
  CHECK(fraction < 0.11);
}

TEST_CASE("stuff points decode to instance zero") {
  const sim::Sequence seq = two_body_scene();
  FeatureDims dims{seq.classes.logit_count(), 8};
  OracleBackbone oracle(dims, NoiseModel{}, LatencyModel{}, seq.classes);
  const auto seg = oracle.segment(seq.frames[0]);
  const HeadOutput out = prediction_head(seg.features, dims, oracle.codebook(), seq.classes);
  for (std::size_t i = 0; i < out.semantic_id.size(); ++i) {
    if (!seq.classes.is_thing(out.semantic_id[i])) CHECK(out.instance_id[i] == 0);
  }
}

TEST_CASE("separated centroids survive small jitter") {
  const sim::Sequence seq = two_body_scene();
  FeatureDims dims{seq.classes.logit_count(), 8};
  NoiseModel noise;
  noise.embed_sigma = 0.02;  // well under the centroid separation
  OracleBackbone oracle(dims, noise, LatencyModel{}, seq.classes);
  const auto seg = oracle.segment(seq.frames[0]);
  const HeadOutput out = prediction_head(seg.features, dims, oracle.codebook(), seq.classes);
  CHECK(out.instance_id == seq.frames[0].instance_id);
}

TEST_CASE("decode with no instance centroids throws for thing points") {
  const sim::Sequence seq = two_body_scene();
  FeatureDims dims{seq.classes.logit_count(), 8};
  InstanceCodebook empty_book(dims.embed_dim);
  std::vector<FeatureVec> features(1, FeatureVec::Zero(dims.total()));
  features[0][3] = 1.0;  // thing class
  CHECK_THROWS_AS(prediction_head(features, dims, empty_book, seq.classes),
                  std::runtime_error);
}

TEST_CASE("latency: deterministic per seed, independent of frame content") {
  LatencyModel model;
  model.kind = LatencyModel::Kind::gaussian;
  model.mean_ms = 100.0;
  model.stddev_ms = 30.0;
  model.seed = 5;
  LatencySampler a(model), b(model);
  for (int i = 0; i < 50; ++i) {
    const double la = a.next();
    CHECK(la == b.next());
    CHECK(la >= 0.0);
  }

  // Same latency stream regardless of which frames are segmented.
  const sim::Sequence seq = two_body_scene(4);
  FeatureDims dims{seq.classes.logit_count(), 8};
  OracleBackbone on_frames_a(dims, NoiseModel{}, model, seq.classes);
  OracleBackbone on_frames_b(dims, NoiseModel{}, model, seq.classes);
  const double l0 = on_frames_a.segment(seq.frames[0]).latency_ms;
  const double l0b = on_frames_b.segment(seq.frames[3]).latency_ms;
  CHECK(l0 == l0b);
}

TEST_CASE("fixed latency model returns the mean") {
  LatencyModel model;
  model.mean_ms = 42.0;
  LatencySampler s(model);
  CHECK(s.next() == 42.0);
  CHECK(s.next() == 42.0);
}

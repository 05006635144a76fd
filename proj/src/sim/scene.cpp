// SPDX-License-Identifier: Apache-2.0

#include "streamseg/sim/scene.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace streamseg::sim {

ClassTable ClassTable::default_table() {
  ClassTable t;
  t.classes = {
      {0, "unlabeled", false},
      {1, "ground", false},
      {2, "clutter", false},
      {3, "box", true},
      {4, "cylinder", true},
      {5, "barrel", true},
  };
  return t;
}

namespace {

using Rng = std::mt19937_64;

std::vector<Point3> sample_box_surface(Rng& rng, const Vec3& half, uint32_t n) {
  // Faces weighted by area.
  const double ax = half.y() * half.z();
  const double ay = half.x() * half.z();
  const double az = half.x() * half.y();
  std::discrete_distribution<int> face({ax, ax, ay, ay, az, az});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Point3> pts(n);
  for (auto& p : pts) {
    const int f = face(rng);
    const double a = u(rng), b = u(rng);
    switch (f) {
      case 0: p = {half.x(), a * half.y(), b * half.z()}; break;
      case 1: p = {-half.x(), a * half.y(), b * half.z()}; break;
      case 2: p = {a * half.x(), half.y(), b * half.z()}; break;
      case 3: p = {a * half.x(), -half.y(), b * half.z()}; break;
      case 4: p = {a * half.x(), b * half.y(), half.z()}; break;
      default: p = {a * half.x(), b * half.y(), -half.z()}; break;
    }
  }
  return pts;
}

std::vector<Point3> sample_cylinder_surface(Rng& rng, double radius, double half_h,
                                            uint32_t n) {
  const double lateral = 2.0 * M_PI * radius * 2.0 * half_h;
  const double cap = M_PI * radius * radius;
  std::discrete_distribution<int> part({lateral, cap, cap});
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Point3> pts(n);
  for (auto& p : pts) {
    const double phi = 2.0 * M_PI * u01(rng);
    switch (part(rng)) {
      case 0:
        p = {radius * std::cos(phi), radius * std::sin(phi),
             (2.0 * u01(rng) - 1.0) * half_h};
        break;
      case 1: {
        const double r = radius * std::sqrt(u01(rng));
        p = {r * std::cos(phi), r * std::sin(phi), half_h};
        break;
      }
      default: {
        const double r = radius * std::sqrt(u01(rng));
        p = {r * std::cos(phi), r * std::sin(phi), -half_h};
        break;
      }
    }
  }
  return pts;
}

std::vector<Point3> sample_body_points(Rng& rng, const RigidBody& b) {
  if (b.shape == ShapeKind::box) {
    return sample_box_surface(rng, b.extent, b.n_points);
  }
  return sample_cylinder_surface(rng, b.extent.x(), b.extent.z(), b.n_points);
}

RigidBody sample_random_body(Rng& rng, const SceneConfig& cfg, uint32_t id) {
  RigidBody b;
  b.id = id;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> ext(0.3, 1.2);
  b.shape = u01(rng) < 0.5 ? ShapeKind::box : ShapeKind::cylinder;
  b.class_id = b.shape == ShapeKind::box ? 3u : 4u;
  b.extent = Vec3(ext(rng), ext(rng), ext(rng));
  b.n_points = 100 + static_cast<uint32_t>(u01(rng) * 400.0);
  const double ang = 2.0 * M_PI * u01(rng);
  const double rad = cfg.placement_radius * (0.3 + 0.7 * u01(rng));
  b.center = Point3(rad * std::cos(ang), rad * std::sin(ang), 0.5 + u01(rng));
  if (u01(rng) < cfg.random_moving_fraction) {
    const double speed = cfg.random_speed_max * u01(rng);
    const double heading = 2.0 * M_PI * u01(rng);
    b.v = Vec3(speed * std::cos(heading), speed * std::sin(heading), 0.0);
    double omega_mag;
    if (u01(rng) < cfg.random_omega_fast_prob) {
      omega_mag = cfg.random_omega_fast_min +
                  (1.0 - cfg.random_omega_fast_min) * u01(rng);
    } else {
      std::normal_distribution<double> g(0.0, cfg.random_omega_sigma);
      omega_mag = std::min(1.0, std::abs(g(rng)));
    }
    b.omega = Vec3(0.0, 0.0, omega_mag);  // yaw-dominated motion
  }
  return b;
}

/// World position of a body-local point at frame t. Bodies rotate about a
/// fixed center and drift with constant velocity.
Point3 body_world_position(const RigidBody& b, const Point3& local, uint32_t t) {
  const Mat3 r = so3_exp(static_cast<double>(t) * b.omega);
  return b.center + r * local + static_cast<double>(t) * b.v;
}

}  // namespace

Sequence generate_scene(const SceneConfig& cfg) {
  if (!(cfg.fps > 0.0)) throw std::invalid_argument("SceneConfig: fps must be > 0");
  if (cfg.bodies.empty() && cfg.n_random_bodies == 0 && cfg.n_background_points == 0) {
    throw std::invalid_argument("SceneConfig: scene has no bodies and no background");
  }

  Rng rng(cfg.seed);
  Sequence seq;
  seq.fps = cfg.fps;
  seq.classes = cfg.classes;
  seq.bodies = cfg.bodies;
  uint32_t next_id = 1;
  for (const auto& b : seq.bodies) next_id = std::max(next_id, b.id + 1);
  for (uint32_t i = 0; i < cfg.n_random_bodies; ++i) {
    seq.bodies.push_back(sample_random_body(rng, cfg, next_id++));
  }

  // Body-local surface samples, fixed for the whole sequence.
  std::vector<std::vector<Point3>> locals;
  locals.reserve(seq.bodies.size());
  for (const auto& b : seq.bodies) {
    locals.push_back(sample_body_points(rng, b));
  }

  // Background: ground plane plus static clutter columns.
  const uint32_t n_bg = cfg.n_background_points;
  const uint32_t n_ground = n_bg * 7 / 10;
  std::vector<Point3> bg_points;
  std::vector<uint32_t> bg_class;
  bg_points.reserve(n_bg);
  bg_class.reserve(n_bg);
  std::uniform_real_distribution<double> gx(-30.0, 30.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (uint32_t i = 0; i < n_ground; ++i) {
    bg_points.emplace_back(gx(rng), gx(rng), -1.5 + 0.02 * u01(rng));
    bg_class.push_back(1);
  }
  const uint32_t n_clutter_groups = 12;
  std::vector<Point3> clutter_centers;
  for (uint32_t g = 0; g < n_clutter_groups; ++g) {
    clutter_centers.emplace_back(gx(rng), gx(rng), 0.0);
  }
  for (uint32_t i = n_ground; i < n_bg; ++i) {
    const auto& c = clutter_centers[i % n_clutter_groups];
    bg_points.emplace_back(c.x() + 0.6 * (u01(rng) - 0.5), c.y() + 0.6 * (u01(rng) - 0.5),
                           -1.0 + 2.5 * u01(rng));
    bg_class.push_back(2);
  }

  // Ego trajectory: constant twist per frame.
  std::vector<RigidTransform> ego(cfg.n_frames);
  for (uint32_t t = 0; t < cfg.n_frames; ++t) {
    ego[t] = se3_exp(cfg.ego_twist * static_cast<double>(t));
  }

  seq.frames.resize(cfg.n_frames);
  for (uint32_t t = 0; t < cfg.n_frames; ++t) {
    FrameSample& f = seq.frames[t];
    f.frame_index = t;
    f.timestamp = static_cast<double>(t) / cfg.fps;
    f.gt_pose_world_from_ego = ego[t];
    const RigidTransform ego_inv = ego[t].inverse();
    const RigidTransform next_inv =
        t + 1 < cfg.n_frames ? ego[t + 1].inverse() : ego_inv;

    auto emit = [&](const Point3& world_now, const Point3& world_next,
                    uint32_t sem, uint32_t inst, bool mov) {
      const Point3 p = ego_inv.apply(world_now);
      if (cfg.sensor.range_cutoff > 0.0 && p.norm() > cfg.sensor.range_cutoff) return;
      if (cfg.sensor.dropout_prob > 0.0 && u01(rng) < cfg.sensor.dropout_prob) return;
      f.points.push_back(p);
      f.semantic_id.push_back(sem);
      f.instance_id.push_back(inst);
      f.moving.push_back(mov ? 1 : 0);
      // Residual dynamic flow in next-frame coordinates; exact zero when static.
      if (mov) {
        f.gt_forward_flow.push_back(next_inv.rotation * (world_next - world_now));
      } else {
        f.gt_forward_flow.push_back(Vec3::Zero());
      }
    };

    for (std::size_t b = 0; b < seq.bodies.size(); ++b) {
      const RigidBody& body = seq.bodies[b];
      const bool mov = body.moving();
      for (const auto& local : locals[b]) {
        const Point3 now = body_world_position(body, local, t);
        const Point3 next = mov ? body_world_position(body, local, t + 1) : now;
        emit(now, next, body.class_id, body.id, mov);
      }
    }
    for (std::size_t i = 0; i < bg_points.size(); ++i) {
      emit(bg_points[i], bg_points[i], bg_class[i], 0, false);
    }
  }
  return seq;
}

RigidTransform gt_relative_pose(const Sequence& seq, uint32_t i, uint32_t j) {
  if (i >= seq.frames.size() || j >= seq.frames.size()) {
    throw std::out_of_range("gt_relative_pose: frame index out of range");
  }
  return compose(seq.frames[j].gt_pose_world_from_ego.inverse(),
                 seq.frames[i].gt_pose_world_from_ego);
}

std::vector<Vec3> gt_flow(const Sequence& seq, uint32_t i, uint32_t m) {
  if (i + m >= seq.frames.size()) {
    throw std::out_of_range("gt_flow: horizon exceeds sequence");
  }
  const FrameSample& f = seq.frames[i];
  const RigidTransform target_inv =
      seq.frames[i + m].gt_pose_world_from_ego.inverse();
  std::vector<Vec3> flow(f.size(), Vec3::Zero());
  for (std::size_t p = 0; p < f.size(); ++p) {
    if (!f.moving[p]) continue;
    const RigidBody* body = nullptr;
    for (const auto& b : seq.bodies) {
      if (b.id == f.instance_id[p]) {
        body = &b;
        break;
      }
    }
    if (body == nullptr) continue;
    const Point3 world_now = f.gt_pose_world_from_ego.apply(f.points[p]);
    // Rigid step over m frames about the fixed center: the composed window
    // transform of the constant-twist body model.
    const Mat3 r_now = so3_exp(static_cast<double>(i) * body->omega);
    const Mat3 r_later = so3_exp(static_cast<double>(i + m) * body->omega);
    const Point3 local =
        r_now.transpose() * (world_now - body->center - static_cast<double>(i) * body->v);
    const Point3 world_later =
        body->center + r_later * local + static_cast<double>(i + m) * body->v;
    flow[p] = target_inv.rotation * (world_later - world_now);
  }
  return flow;
}

std::vector<uint8_t> gt_moving_mask(const FrameSample& frame) {
  return frame.moving;
}

}  // namespace streamseg::sim

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "streamseg/core/point_cloud.hpp"
#include "streamseg/core/se3.hpp"

namespace streamseg::sim {

struct ClassInfo {
  uint32_t id = 0;
  std::string name;
  bool thing = false;
};

struct ClassTable {
  std::vector<ClassInfo> classes;

  bool is_thing(uint32_t id) const {
    for (const auto& c : classes) {
      if (c.id == id) return c.thing;
    }
    return false;
  }
  /// Largest class id + 1; the logit vector length used by backbones.
  uint32_t logit_count() const {
    uint32_t n = 0;
    for (const auto& c : classes) n = std::max(n, c.id + 1);
    return n;
  }
  static ClassTable default_table();
};

enum class ShapeKind { box, cylinder };

/// Rigid body moving with a constant world twist: rotation about a fixed
/// center plus a constant drift velocity.
struct RigidBody {
  uint32_t id = 0;        // instance id, >= 1
  uint32_t class_id = 0;  // semantic class
  ShapeKind shape = ShapeKind::box;
  uint32_t n_points = 200;
  Vec3 extent = Vec3(1.0, 1.0, 1.0);  // box half-widths or (radius, radius, half-height)
  Point3 center = Point3::Zero();     // rotation center x_c
  Vec3 v = Vec3::Zero();              // m/frame
  Vec3 omega = Vec3::Zero();          // rad/frame

  bool moving() const { return v.norm() > 0.0 || omega.norm() > 0.0; }
};

struct SensorModel {
  double range_cutoff = 0.0;  // meters; <= 0 disables
  double dropout_prob = 0.0;  // per point per frame
};

struct SceneConfig {
  std::vector<RigidBody> bodies;          // explicit bodies; may be empty
  uint32_t n_random_bodies = 0;           // extra randomly sampled bodies
  uint32_t n_background_points = 2000;    // ground plane + static clutter
  TwistVector ego_twist;                  // per frame
  double fps = 10.0;
  uint32_t n_frames = 20;
  ClassTable classes = ClassTable::default_table();
  uint64_t seed = 1;
  SensorModel sensor;

  // Ranges for randomly sampled bodies.
  double random_speed_max = 0.5;       // m/frame
  double random_omega_sigma = 0.12;    // rad/frame, |N(0, sigma)| per axis-magnitude
  double random_omega_fast_prob = 0.0; // probability of a fast rotator
  double random_omega_fast_min = 0.55; // fast rotators draw |omega| from [min, 1]
  double random_moving_fraction = 0.6;
  double placement_radius = 12.0;      // meters from origin
};

/// One simulated sensor frame. Points are in this frame's ego coordinates.
/// `gt_forward_flow` holds the residual dynamic motion to the next frame
/// after ego-pose alignment, expressed in the next frame's ego coordinates:
///   x_{t+1} = gt_relative_pose(t, t+1) * x_t + gt_forward_flow.
/// Static points therefore carry exactly zero flow.
struct FrameSample {
  uint32_t frame_index = 0;
  double timestamp = 0.0;
  std::vector<Point3> points;
  std::vector<uint32_t> semantic_id;
  std::vector<uint32_t> instance_id;
  std::vector<uint8_t> moving;
  RigidTransform gt_pose_world_from_ego;
  std::vector<Vec3> gt_forward_flow;

  std::size_t size() const { return points.size(); }

  PointCloud cloud() const {
    PointCloud pc;
    pc.points = points;
    pc.semantic_id = semantic_id;
    pc.instance_id = instance_id;
    return pc;
  }
};

struct Sequence {
  double fps = 10.0;
  ClassTable classes;
  std::vector<RigidBody> bodies;  // resolved bodies (explicit + sampled)
  std::vector<FrameSample> frames;

  std::size_t size() const { return frames.size(); }
};

Sequence generate_scene(const SceneConfig& cfg);

/// Transform taking frame-i ego coordinates into frame-j ego coordinates.
RigidTransform gt_relative_pose(const Sequence& seq, uint32_t i, uint32_t j);

/// Per-point dynamic flow over m frames for frame i, anchored at frame i's
/// points and expressed in frame (i+m) ego coordinates (see FrameSample).
std::vector<Vec3> gt_flow(const Sequence& seq, uint32_t i, uint32_t m);

std::vector<uint8_t> gt_moving_mask(const FrameSample& frame);

}  // namespace streamseg::sim

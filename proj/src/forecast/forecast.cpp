// SPDX-License-Identifier: Apache-2.0

#include "streamseg/forecast/forecast.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace streamseg::forecast {

// ---------------------------------------------------------------------------
// Pose memory
// ---------------------------------------------------------------------------

void PoseMemory::update(const RigidTransform& p_rel, uint32_t gap_k) {
  if (gap_k < 1) throw std::invalid_argument("PoseMemory::update: gap_k must be >= 1");
  const TwistVector xi = se3_log(p_rel) * (1.0 / static_cast<double>(gap_k));
  if (!initialized_) {
    for (auto& h : heads_) h = xi;
    initialized_ = true;
    return;
  }
  for (auto& h : heads_) {
    h = h * alpha_ + xi * (1.0 - alpha_);
  }
}

RigidTransform PoseMemory::forecast(uint32_t m) const {
  if (m < 1 || m > m_max()) {
    throw std::out_of_range("PoseMemory::forecast: head out of range");
  }
  if (!initialized_) return RigidTransform::identity();
  return se3_exp(heads_[m - 1] * static_cast<double>(m));
}

TwistVector PoseMemory::smoothed(uint32_t head) const {
  if (head < 1 || head > m_max()) {
    throw std::out_of_range("PoseMemory::smoothed: head out of range");
  }
  return heads_[head - 1];
}

// ---------------------------------------------------------------------------
// Flow memory
// ---------------------------------------------------------------------------

void FlowMemory::update(const FlowField& key_rate, const RigidTransform& pose,
                        uint32_t gap_k, uint32_t keyframe_index) {
  // Advect prior state into the new keyframe's coordinates: positions move by
  // pose plus their own motion over the gap, vectors rotate with the pose.
  std::unordered_map<VoxelKey, Entry, VoxelKeyHash> advected;
  std::unordered_map<VoxelKey, uint32_t, VoxelKeyHash> counts;
  const double k = static_cast<double>(gap_k);
  for (const auto& [key, entry] : state_) {
    const Vec3 rate_new = pose.rotation * entry.rate;
    const Point3 moved = pose.apply(voxel_center(key, voxel_size_)) + rate_new * k;
    const VoxelKey new_key = voxel_key_of(moved, voxel_size_);
    auto [it, inserted] = advected.emplace(new_key, Entry{rate_new, entry.last_observed});
    if (!inserted) {
      const uint32_t n = ++counts[new_key];
      it->second.rate += (rate_new - it->second.rate) / static_cast<double>(n + 1);
      it->second.last_observed = std::max(it->second.last_observed, entry.last_observed);
    } else {
      counts[new_key] = 0;
    }
  }

  for (const auto& [key, rate] : key_rate.vectors()) {
    auto it = advected.find(key);
    if (it == advected.end()) {
      advected[key] = Entry{rate, keyframe_index};
    } else {
      it->second.rate = alpha_ * it->second.rate + (1.0 - alpha_) * rate;
      it->second.last_observed = keyframe_index;
    }
  }

  // Age out voxels that stopped being observed.
  state_.clear();
  for (auto& [key, entry] : advected) {
    if (keyframe_index - entry.last_observed > max_age_) continue;
    state_.emplace(key, entry);
  }
}

FlowField FlowMemory::rate_field() const {
  FlowField f(voxel_size_);
  for (const auto& [key, entry] : state_) f.set(key, entry.rate);
  f.finalize();
  return f;
}

FlowField FlowMemory::forecast(uint32_t m) const {
  FlowField f(voxel_size_);
  const double horizon = static_cast<double>(m);
  for (const auto& [key, entry] : state_) {
    const Vec3 disp = entry.rate * horizon;
    const double len = disp.norm();
    if (len < 1e-12) {
      f.accumulate(key, Vec3::Zero());
      continue;
    }
    const Point3 base = voxel_center(key, voxel_size_);
    const int steps = std::max(1, static_cast<int>(std::ceil(len / (0.9 * voxel_size_))));
    for (int j = 0; j <= steps; ++j) {
      const Point3 at = base + disp * (static_cast<double>(j) / steps);
      f.accumulate(voxel_key_of(at, voxel_size_), disp);
    }
  }
  f.finalize();
  return f;
}

// ---------------------------------------------------------------------------
// ICP
// ---------------------------------------------------------------------------

namespace {

struct RigidFit {
  RigidTransform transform;
  bool degenerate = false;
};

/// Kabsch alignment of paired points (least-squares rotation + translation).
RigidFit solve_kabsch(const std::vector<Point3>& src, const std::vector<Point3>& dst) {
  const double n = static_cast<double>(src.size());
  Vec3 src_mean = Vec3::Zero(), dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= n;
  dst_mean /= n;
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cov += (dst[i] - dst_mean) * (src[i] - src_mean).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sing = svd.singularValues();
  RigidFit fit;
  // Rank < 2 leaves the rotation under-determined.
  if (sing(0) < 1e-12 || sing(1) < 1e-9 * sing(0)) {
    fit.degenerate = true;
    fit.transform.translation = dst_mean - src_mean;
    return fit;
  }
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  fit.transform.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  fit.transform.translation = dst_mean - fit.transform.rotation * src_mean;
  return fit;
}

struct IcpOutcome {
  RigidTransform transform;
  double mean_residual = 0.0;
  bool degenerate = false;
};

IcpOutcome icp_core(const std::vector<Point3>& prev, const std::vector<Point3>& cur,
                    const RigidTransform& init, const IcpParams& params) {
  SpatialIndex cur_index(cur);
  RigidTransform t = init;
  IcpOutcome out;
  struct Pair {
    Point3 src;
    Point3 dst;
    double d;
  };
  std::vector<Pair> pairs;
  pairs.reserve(prev.size());
  for (int iter = 0; iter < params.max_iterations; ++iter) {
    pairs.clear();
    for (const auto& p : prev) {
      const Point3 moved = t.apply(p);
      const NnHit hit = cur_index.nn_query(moved);
      pairs.push_back({moved, cur[hit.index], hit.distance});
    }
    std::size_t keep = std::max<std::size_t>(
        3, static_cast<std::size_t>(params.trim_keep * static_cast<double>(pairs.size())));
    keep = std::min(keep, pairs.size());
    std::nth_element(pairs.begin(), pairs.begin() + (keep - 1), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.d < b.d; });
    std::vector<Point3> src(keep), dst(keep);
    double residual = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
      src[i] = pairs[i].src;
      dst[i] = pairs[i].dst;
      residual += pairs[i].d;
    }
    out.mean_residual = residual / static_cast<double>(keep);
    const RigidFit fit = solve_kabsch(src, dst);
    if (fit.degenerate) {
      out.degenerate = true;
      t = compose(fit.transform, t);  // translation-only fallback step
      break;
    }
    t = compose(fit.transform, t);
    const double delta = fit.transform.translation.norm() +
                         so3_log(fit.transform.rotation).norm();
    if (delta < params.tolerance) break;
  }
  out.transform = t;
  return out;
}

}  // namespace

RigidTransform estimate_pose(const PointCloud& prev, const PointCloud& cur,
                             const RigidTransform& init, const IcpParams& params) {
  if (prev.size() < 50 || cur.size() < 50) {
    throw std::invalid_argument("estimate_pose: both clouds need >= 50 points");
  }
  const IcpOutcome out = icp_core(prev.points, cur.points, init, params);
  if (out.degenerate) {
    throw std::runtime_error("estimate_pose: degenerate geometry (rank-deficient covariance)");
  }
  return out.transform;
}

// ---------------------------------------------------------------------------
// Key flow estimation
// ---------------------------------------------------------------------------

namespace {

std::map<uint32_t, std::vector<Point3>> group_by_instance(const PointCloud& pc) {
  std::map<uint32_t, std::vector<Point3>> groups;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const uint32_t inst = i < pc.instance_id.size() ? pc.instance_id[i] : 0;
    if (inst == 0) continue;
    groups[inst].push_back(pc.points[i]);
  }
  return groups;
}

void stamp_field(FlowField& field, VoxelInstanceMap& owner,
                 const std::vector<Point3>& anchors, const RigidTransform& motion,
                 double scale, double voxel_size, uint32_t instance) {
  VoxelBuckets buckets = voxelize(anchors, voxel_size);
  for (const auto& [key, pts] : buckets) {
    const Point3 c = voxel_center(key, voxel_size);
    field.set(key, (motion.apply(c) - c) * scale);
    owner[key] = instance;
  }
}

}  // namespace

KeyFlowResult estimate_key_flow(const PointCloud& prev_key, const PointCloud& cur_key,
                                const RigidTransform& pose, uint32_t gap_k,
                                const KeyFlowParams& params) {
  if (gap_k < 1) throw std::invalid_argument("estimate_key_flow: gap_k must be >= 1");
  KeyFlowResult result;
  result.rate = FlowField(params.voxel_size);
  result.gap_displacement = FlowField(params.voxel_size);

  auto prev_groups = group_by_instance(prev_key);
  auto cur_groups = group_by_instance(cur_key);

  for (const auto& [inst, cur_pts] : cur_groups) {
    auto pit = prev_groups.find(inst);
    if (pit == prev_groups.end()) continue;
    if (cur_pts.size() < params.min_instance_points ||
        pit->second.size() < params.min_instance_points) {
      result.skipped_instances.push_back(inst);
      continue;
    }
    std::vector<Point3> aligned_prev(pit->second.size());
    for (std::size_t i = 0; i < aligned_prev.size(); ++i) {
      aligned_prev[i] = pose.apply(pit->second[i]);
    }
    Vec3 prev_mean = Vec3::Zero(), cur_mean = Vec3::Zero();
    for (const auto& p : aligned_prev) prev_mean += p;
    for (const auto& p : cur_pts) cur_mean += p;
    prev_mean /= static_cast<double>(aligned_prev.size());
    cur_mean /= static_cast<double>(cur_pts.size());

    // Instance rotations between keyframes can be large; plain centroid
    // initialization stalls in local minima. Objects in these scenes rotate
    // mostly about the vertical, so a yaw multi-start covers the basin.
    IcpOutcome fit;
    fit.mean_residual = std::numeric_limits<double>::infinity();
    for (double yaw : {0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9, 1.2, -1.2}) {
      RigidTransform init;
      init.rotation = so3_exp(Vec3(0.0, 0.0, yaw));
      init.translation = cur_mean - init.rotation * prev_mean;
      const IcpOutcome attempt = icp_core(aligned_prev, cur_pts, init, params.icp);
      if (attempt.mean_residual < fit.mean_residual) fit = attempt;
    }

    InstanceMotion motion;
    motion.instance_id = inst;
    motion.motion = fit.transform;
    motion.mean_residual = fit.mean_residual;
    motion.n_prev = static_cast<uint32_t>(aligned_prev.size());
    motion.n_cur = static_cast<uint32_t>(cur_pts.size());
    result.instances.push_back(motion);

    const double inv_k = 1.0 / static_cast<double>(gap_k);
    stamp_field(result.rate, result.rate_instance, cur_pts, fit.transform, inv_k,
                params.voxel_size, inst);
    stamp_field(result.gap_displacement, result.displacement_instance, aligned_prev,
                fit.transform, 1.0, params.voxel_size, inst);
  }
  result.rate.finalize();
  result.gap_displacement.finalize();
  return result;
}

KeyFlowResult gt_key_flow(const sim::Sequence& seq, uint32_t prev_index,
                          uint32_t cur_index, const KeyFlowParams& params) {
  if (prev_index >= seq.frames.size() || cur_index >= seq.frames.size() ||
      prev_index >= cur_index) {
    throw std::out_of_range("gt_key_flow: bad frame indices");
  }
  KeyFlowResult result;
  result.rate = FlowField(params.voxel_size);
  result.gap_displacement = FlowField(params.voxel_size);
  const uint32_t gap_k = cur_index - prev_index;
  const double inv_k = 1.0 / static_cast<double>(gap_k);

  const sim::FrameSample& prev = seq.frames[prev_index];
  const sim::FrameSample& cur = seq.frames[cur_index];
  const RigidTransform pose = sim::gt_relative_pose(seq, prev_index, cur_index);
  const RigidTransform cur_from_world = cur.gt_pose_world_from_ego.inverse();

  for (const auto& body : seq.bodies) {
    if (!body.moving()) continue;
    // Window transform of the constant-twist body, in cur-frame coordinates.
    const Mat3 r_prev = so3_exp(static_cast<double>(prev_index) * body.omega);
    const Mat3 r_cur = so3_exp(static_cast<double>(cur_index) * body.omega);
    const Mat3 r_window = r_cur * r_prev.transpose();
    RigidTransform world_window;
    world_window.rotation = r_window;
    world_window.translation =
        body.center + static_cast<double>(cur_index) * body.v -
        r_window * (body.center + static_cast<double>(prev_index) * body.v);
    const RigidTransform motion =
        compose(compose(cur_from_world, world_window), cur.gt_pose_world_from_ego);

    std::vector<Point3> cur_pts, prev_aligned;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (cur.instance_id[i] == body.id) cur_pts.push_back(cur.points[i]);
    }
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (prev.instance_id[i] == body.id) prev_aligned.push_back(pose.apply(prev.points[i]));
    }
    InstanceMotion im;
    im.instance_id = body.id;
    im.motion = motion;
    im.n_prev = static_cast<uint32_t>(prev_aligned.size());
    im.n_cur = static_cast<uint32_t>(cur_pts.size());
    result.instances.push_back(im);
    if (!cur_pts.empty()) {
      stamp_field(result.rate, result.rate_instance, cur_pts, motion, inv_k,
                  params.voxel_size, body.id);
    }
    if (!prev_aligned.empty()) {
      stamp_field(result.gap_displacement, result.displacement_instance, prev_aligned,
                  motion, 1.0, params.voxel_size, body.id);
    }
  }
  result.rate.finalize();
  result.gap_displacement.finalize();
  return result;
}

// ---------------------------------------------------------------------------
// Moving mask
// ---------------------------------------------------------------------------

FlowField apply_moving_mask(const FlowField& field, const MovingMaskPolicy& policy,
                            const VoxelInstanceMap* voxel_instance) {
  if (policy.kind == MovingMaskPolicy::Kind::none) return field;
  FlowField out(field.voxel_size());
  out.set_query_radius(field.query_radius());
  for (const auto& [key, vec] : field.vectors()) {
    bool keep = false;
    if (policy.kind == MovingMaskPolicy::Kind::speed_threshold) {
      keep = vec.norm() >= policy.speed_threshold;
    } else {
      if (voxel_instance != nullptr) {
        auto it = voxel_instance->find(key);
        if (it != voxel_instance->end()) {
          keep = std::find(policy.moving_instances.begin(), policy.moving_instances.end(),
                           it->second) != policy.moving_instances.end();
        }
      }
    }
    if (keep) out.set(key, vec);
  }
  out.finalize();
  return out;
}

void apply_moving_mask(KeyFlowResult& result, const MovingMaskPolicy& policy) {
  if (policy.kind == MovingMaskPolicy::Kind::none) return;
  // Threshold applies to per-frame speed; the displacement field of the same
  // instance is masked consistently through the instance map.
  std::vector<uint32_t> moving;
  for (const auto& im : result.instances) {
    bool keep;
    if (policy.kind == MovingMaskPolicy::Kind::speed_threshold) {
      // Instance speed proxy: mean of its rate anchors.
      double speed = 0.0;
      uint32_t n = 0;
      for (const auto& [key, inst] : result.rate_instance) {
        if (inst != im.instance_id) continue;
        speed += result.rate.vectors().at(key).norm();
        ++n;
      }
      keep = n > 0 && speed / n >= policy.speed_threshold;
    } else {
      keep = std::find(policy.moving_instances.begin(), policy.moving_instances.end(),
                       im.instance_id) != policy.moving_instances.end();
    }
    if (keep) moving.push_back(im.instance_id);
  }
  MovingMaskPolicy by_instance;
  by_instance.kind = MovingMaskPolicy::Kind::gt_instances;
  by_instance.moving_instances = std::move(moving);
  result.rate = apply_moving_mask(result.rate, by_instance, &result.rate_instance);
  result.gap_displacement =
      apply_moving_mask(result.gap_displacement, by_instance, &result.displacement_instance);
}

}  // namespace streamseg::forecast

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>

namespace streamseg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Point3 = Vec3;

inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

/// Skew-symmetric (cross-product) matrix: skew(w) * u == w x u.
inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  // clang-format off
  s <<     0.0, -w.z(),  w.y(),
        w.z(),     0.0, -w.x(),
       -w.y(),  w.x(),     0.0;
  // clang-format on
  return s;
}

/// se(3) increment: axis-angle rotation rate plus translation rate, per frame.
struct TwistVector {
  Vec3 omega = Vec3::Zero();  // rad/frame
  Vec3 v = Vec3::Zero();      // m/frame

  TwistVector operator*(double s) const { return {omega * s, v * s}; }
  TwistVector operator+(const TwistVector& o) const { return {omega + o.omega, v + o.v}; }
};

/// Element of SE(3): rotation (orthonormal, det +1) and translation in meters.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    RigidTransform r;
    r.rotation = rotation.transpose();
    r.translation = -(r.rotation * translation);
    return r;
  }

  /// Max deviation of R^T R from identity; valid transforms keep this < 1e-9.
  double orthonormality_error() const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  }

  bool valid() const {
    return orthonormality_error() < 1e-9 && rotation.determinant() > 0.0 &&
           is_finite(translation);
  }
};

/// Applies b first, then a.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform r;
  r.rotation = a.rotation * b.rotation;
  r.translation = a.rotation * b.translation + a.translation;
  return r;
}

/// Rodrigues exponential for SO(3).
inline Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    return Mat3::Identity() + skew(omega);
  }
  const Mat3 k = skew(omega / theta);
  return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

inline Vec3 so3_log(const Mat3& r) {
  const double tr = r.trace();
  double cos_theta = (tr - 1.0) * 0.5;
  cos_theta = std::min(1.0, std::max(-1.0, cos_theta));
  const double theta = std::acos(cos_theta);
  if (theta < 1e-12) {
    return Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)) * 0.5;
  }
  if (theta > M_PI - 1e-9) {
    throw std::domain_error("so3_log: rotation angle at or beyond pi");
  }
  return Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)) *
         (theta / (2.0 * std::sin(theta)));
}

/// Left Jacobian of SO(3); maps translation rates into SE(3) translations.
inline Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-9) {
    return Mat3::Identity() + 0.5 * skew(omega);
  }
  const Mat3 k = skew(omega / theta);
  const double a = (1.0 - std::cos(theta)) / theta;
  const double b = (theta - std::sin(theta)) / theta;
  return Mat3::Identity() + a * k + b * k * k;
}

inline Mat3 so3_left_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-9) {
    return Mat3::Identity() - 0.5 * skew(omega);
  }
  const Mat3 k = skew(omega / theta);
  const double half = 0.5 * theta;
  const double cot = std::cos(half) / std::sin(half);
  return Mat3::Identity() - half * skew(omega / theta) +
         (1.0 - half * cot) * k * k;
}

inline RigidTransform se3_exp(const TwistVector& xi) {
  RigidTransform t;
  t.rotation = so3_exp(xi.omega);
  t.translation = so3_left_jacobian(xi.omega) * xi.v;
  return t;
}

/// Inverse of se3_exp. Rejects rotations with angle >= pi.
inline TwistVector se3_log(const RigidTransform& t) {
  TwistVector xi;
  xi.omega = so3_log(t.rotation);
  xi.v = so3_left_jacobian_inverse(xi.omega) * t.translation;
  return xi;
}

}  // namespace streamseg

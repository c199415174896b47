// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Quaternion rotations, SE(3) poses, and the exp/log/adjoint machinery used
// by the continuous-time trajectory. Twists are ordered (omega, v):
// rotational part first, translational part second.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "chs/errors.hpp"

namespace chs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Below this angle (radians) closed forms switch to their Taylor expansions.
inline constexpr double kSmallAngle = 1e-6;
// Log maps refuse rotations with angle >= pi - kPiMargin.
inline constexpr double kPiMargin = 1e-6;

inline Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

// Inner-product adjoint of skew: returns g such that <A, skew(e)> = <g, e>.
// Used to turn matrix-valued rotation gradients into twist gradients.
inline Vec3 unskew_inner(const Mat3& a) {
  return Vec3(a(2, 1) - a(1, 2), a(0, 2) - a(2, 0), a(1, 0) - a(0, 1));
}

// Unit quaternion kept in canonical form (w >= 0, renormalized on every
// construction so drift never exceeds machine precision).
class Rotation {
public:
  Rotation() : q_(1.0, 0.0, 0.0, 0.0) {}

  // Normalizes the input; throws DomainError when the norm is ~0.
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation from_matrix(const Mat3& m);

  const Eigen::Quaterniond& quat() const { return q_; }
  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }

  Mat3 matrix() const { return q_.toRotationMatrix(); }

  Rotation inverse() const {
    Rotation r;
    r.q_ = q_.conjugate();
    r.canonicalize();
    return r;
  }

  Rotation operator*(const Rotation& o) const {
    Rotation r;
    r.q_ = q_ * o.q_;
    r.normalize();
    return r;
  }

  Vec3 operator*(const Vec3& p) const { return q_ * p; }

  // Rotation angle in [0, pi].
  double angle() const { return 2.0 * std::atan2(q_.vec().norm(), q_.w()); }

private:
  void normalize();
  void canonicalize() {
    if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
  }

  Eigen::Quaterniond q_;  // (w >= 0, unit)
};

struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  Vec6 vec() const {
    Vec6 x;
    x << omega, v;
    return x;
  }
  static Twist from_vec(const Vec6& x) { return Twist{x.head<3>(), x.tail<3>()}; }
};

// Rigid transform p -> R*p + t.
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  Pose inverse() const {
    Rotation rinv = rotation.inverse();
    return Pose(rinv, -(rinv * translation));
  }

  Pose operator*(const Pose& o) const {
    return Pose(rotation * o.rotation, translation + rotation * o.translation);
  }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation.matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

Rotation so3_exp(const Vec3& omega);
// Throws AngleNearPi when the rotation angle is >= pi - kPiMargin.
Vec3 so3_log(const Rotation& r);

// Left/right Jacobians of the SO(3) exponential (J_r(w) = J_l(-w)).
Mat3 so3_left_jacobian(const Vec3& omega);
Mat3 so3_right_jacobian(const Vec3& omega);

// How twists are mapped to pose increments.
//   coupled:   full se(3) exponential (translation mixed through the V matrix)
//   decoupled: rotation via SO(3) exp, translation passed through unchanged
enum class Se3Chart { coupled, decoupled };

Pose se3_exp(const Twist& xi, Se3Chart chart = Se3Chart::coupled);
// Throws AngleNearPi near the cut locus.
Twist se3_log(const Pose& p, Se3Chart chart = Se3Chart::coupled);

// Ad_T: maps body twists across T, i.e. T*exp(xi)*T^-1 = exp(Ad_T xi).
Mat6 adjoint(const Pose& p);
// ad_xi = [[skew(w),0],[skew(v),skew(w)]]; satisfies Ad_exp(xi) = expm(ad_xi).
Mat6 se3_ad(const Vec6& xi);

// Right Jacobian J_r of the chart: exp(xi + d) ~= exp(xi) * exp(J_r(xi) d).
// Coupled chart uses the convergent series sum_k (-ad_xi)^k / (k+1)!.
Mat6 right_jacobian(const Vec6& xi, Se3Chart chart = Se3Chart::coupled);
Mat6 right_jacobian_inverse(const Vec6& xi, Se3Chart chart = Se3Chart::coupled);

}  // namespace chs

// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#include "chs/lie.hpp"

#include <cmath>

namespace chs {

namespace {

// (1 - cos t) / t^2 with a series fallback near zero.
double coef_one_minus_cos(double theta) {
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  }
  return (1.0 - std::cos(theta)) / (theta * theta);
}

// (t - sin t) / t^3 with a series fallback near zero.
double coef_theta_minus_sin(double theta) {
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  }
  return (theta - std::sin(theta)) / (theta * theta * theta);
}

}  // namespace

void Rotation::normalize() {
  const double n = q_.norm();
  if (!(n > 1e-12)) throw DomainError("Rotation: quaternion norm is ~0");
  if (std::abs(n - 1.0) > 1e-9) q_.coeffs() /= n;
  canonicalize();
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  Rotation r;
  r.q_ = Eigen::Quaterniond(w, x, y, z);
  r.normalize();  // no-op when already unit to 1e-9, keeping bits stable
  return r;
}

Rotation Rotation::from_matrix(const Mat3& m) {
  Rotation r;
  r.q_ = Eigen::Quaterniond(m);
  r.normalize();
  return r;
}

Rotation so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  // q = (cos(t/2), sin(t/2)/t * omega); sin(t/2)/t -> 1/2 as t -> 0.
  double imag_scale;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    imag_scale = 0.5 - t2 / 48.0 + t2 * t2 / 3840.0;
  } else {
    imag_scale = std::sin(0.5 * theta) / theta;
  }
  const Vec3 im = imag_scale * omega;
  return Rotation::from_quaternion(std::cos(0.5 * theta), im.x(), im.y(), im.z());
}

Vec3 so3_log(const Rotation& r) {
  const double s = r.quat().vec().norm();
  const double w = r.quat().w();  // >= 0 by canonical form
  const double theta = 2.0 * std::atan2(s, w);
  if (theta >= M_PI - kPiMargin)
    throw AngleNearPi("so3_log: rotation angle within 1e-6 of pi");
  // omega = (theta / sin(theta/2)) * q_vec; theta/sin(theta/2) -> 2 as s -> 0.
  double scale;
  if (s < 1e-9) {
    scale = 2.0 / w * (1.0 - s * s / (3.0 * w * w));
  } else {
    scale = theta / s;
  }
  return scale * r.quat().vec();
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  return Mat3::Identity() + coef_one_minus_cos(theta) * w +
         coef_theta_minus_sin(theta) * (w * w);
}

Mat3 so3_right_jacobian(const Vec3& omega) { return so3_left_jacobian(-omega); }

Pose se3_exp(const Twist& xi, Se3Chart chart) {
  const Rotation r = so3_exp(xi.omega);
  if (chart == Se3Chart::decoupled) return Pose(r, xi.v);
  return Pose(r, so3_left_jacobian(xi.omega) * xi.v);
}

Twist se3_log(const Pose& p, Se3Chart chart) {
  Twist xi;
  xi.omega = so3_log(p.rotation);
  if (chart == Se3Chart::decoupled) {
    xi.v = p.translation;
    return xi;
  }
  // Closed-form inverse of the left Jacobian:
  // V^-1 = I - w/2 + (1/t^2 - (1+cos t)/(2 t sin t)) w^2.
  const double theta = xi.omega.norm();
  const Mat3 w = skew(xi.omega);
  double c;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    c = 1.0 / (theta * theta) -
        (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  const Mat3 vinv = Mat3::Identity() - 0.5 * w + c * (w * w);
  xi.v = vinv * p.translation;
  return xi;
}

Mat6 adjoint(const Pose& p) {
  const Mat3 r = p.rotation.matrix();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.bottomRightCorner<3, 3>() = r;
  ad.bottomLeftCorner<3, 3>() = skew(p.translation) * r;
  return ad;
}

Mat6 se3_ad(const Vec6& xi) {
  const Mat3 w = skew(xi.head<3>());
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = w;
  ad.bottomRightCorner<3, 3>() = w;
  ad.bottomLeftCorner<3, 3>() = skew(xi.tail<3>());
  return ad;
}

Mat6 right_jacobian(const Vec6& xi, Se3Chart chart) {
  if (chart == Se3Chart::decoupled) {
    const Vec3 omega = xi.head<3>();
    Mat6 j = Mat6::Zero();
    j.topLeftCorner<3, 3>() = so3_right_jacobian(omega);
    // Group composition rotates the translational increment, so the chart
    // derivative carries the inverse rotation on the translation block.
    j.bottomRightCorner<3, 3>() = so3_exp(omega).matrix().transpose();
    return j;
  }
  // J_r(xi) = sum_k (-ad_xi)^k / (k+1)!; entire series, fast convergence.
  const Mat6 a = -se3_ad(xi);
  Mat6 term = Mat6::Identity();
  Mat6 sum = Mat6::Identity();
  for (int k = 1; k <= 40; ++k) {
    term = (term * a) / static_cast<double>(k + 1);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-17) break;
  }
  return sum;
}

Mat6 right_jacobian_inverse(const Vec6& xi, Se3Chart chart) {
  if (chart == Se3Chart::decoupled) {
    const Vec3 omega = xi.head<3>();
    Mat6 j = Mat6::Zero();
    j.topLeftCorner<3, 3>() = so3_right_jacobian(omega).inverse();
    j.bottomRightCorner<3, 3>() = so3_exp(omega).matrix();
    return j;
  }
  return right_jacobian(xi, chart).partialPivLu().inverse();
}

}  // namespace chs

// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Continuous-time camera trajectory: a cumulative cubic B-spline over SE(3)
// control poses on a uniform knot grid,
//   P(t) = T_{i-1} * prod_{j=0..2} exp(Btilde_{j+1}(u) * Omega_j),
//   Omega_j = log(T_{i-1+j}^-1 * T_{i+j}),
// where i = floor((t - t0) / tau) and u is the fractional segment position.
// Control poses are camera-to-world transforms.
#pragma once

#include <array>
#include <filesystem>
#include <utility>
#include <vector>

#include "chs/lie.hpp"

namespace chs {

struct SplineTrajectory {
  std::vector<Pose> knots;  // >= 4 control poses on the uniform grid
  double t0 = 0.0;          // timestamp of knot 0
  double tau = 1.0;         // knot spacing, > 0
  Se3Chart chart = Se3Chart::coupled;

  // Valid evaluation interval [t0 + tau, t0 + (K-2)*tau).
  std::pair<double, double> domain() const {
    const double k = static_cast<double>(knots.size());
    return {t0 + tau, t0 + (k - 2.0) * tau};
  }
};

// Cumulative basis Btilde(u) = C * (1, u, u^2, u^3)^T for u in [0, 1);
// component 0 is identically 1. Throws DomainError outside [0, 1).
Vec4 cumulative_basis(double u);
// d Btilde / du (not divided by tau).
Vec4 cumulative_basis_deriv(double u);

// Throws OutOfDomain outside the valid interval, DomainError for < 4 knots.
Pose pose_at(const SplineTrajectory& traj, double t);

// Body-frame velocity V(t): P(t+h) ~= P(t) * exp(h * V(t)).
Twist body_velocity_at(const SplineTrajectory& traj, double t);

// Pose plus d(pose)/d(knots) for the four active control poses. All
// derivatives are in right-increment convention: perturbing knot j as
// T_j * exp(eps_j) moves the pose to P * exp(knot_jacobian[j] * eps_j).
struct SplinePoint {
  Pose pose;
  int first_knot = 0;  // index of T_{i-1}, the first of the four active knots
  std::array<Mat6, 4> knot_jacobian;
};
SplinePoint pose_with_jacobians(const SplineTrajectory& traj, double t);

// Fits a trajectory to timestamped poses (strictly increasing timestamps).
// Knot count K = max(4, ceil(knots_per_pose * M) + 3); the knot grid covers
// [t_first - margin, t_last + margin] strictly inside the valid domain.
// Refines by damped Gauss-Newton on log-pose residuals.
struct FitResult {
  SplineTrajectory trajectory;
  double rms_residual = 0.0;  // RMS of the final 6-dof residual norms
  int iterations = 0;
};
FitResult fit_knots(const std::vector<std::pair<double, Pose>>& timed_poses,
                    double knots_per_pose, Se3Chart chart = Se3Chart::coupled,
                    double margin = 0.0, int max_iterations = 50);

// Text formats. Trajectory files carry a "# tau=<tau> t0=<t0>" header line
// followed by one "t q_w q_x q_y q_z t_x t_y t_z" line per knot; timed pose
// files are the same 8-column lines without the header. '#' lines are
// comments; numbers are written with %.17g.
void save_trajectory(const std::filesystem::path& path,
                     const SplineTrajectory& traj);
SplineTrajectory load_trajectory(const std::filesystem::path& path);
void save_timed_poses(const std::filesystem::path& path,
                      const std::vector<std::pair<double, Pose>>& poses);
std::vector<std::pair<double, Pose>> load_timed_poses(
    const std::filesystem::path& path);

}  // namespace chs

// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#include "chs/trajectory.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chs/io.hpp"

namespace chs {

namespace {

// Segment lookup shared by every evaluator.
struct SegmentRef {
  int i = 0;     // base segment index; active knots are i-1 .. i+2
  double u = 0;  // fractional position in [0, 1)
};

SegmentRef locate(const SplineTrajectory& traj, double t) {
  const int k = static_cast<int>(traj.knots.size());
  if (k < 4) throw DomainError("trajectory: needs at least 4 knots");
  if (!(traj.tau > 0.0)) throw DomainError("trajectory: tau must be positive");
  const auto [lo, hi] = traj.domain();
  if (!(t >= lo && t < hi)) {
    std::ostringstream msg;
    msg << "trajectory: t=" << t << " outside [" << lo << ", " << hi << ")";
    throw OutOfDomain(msg.str());
  }
  const double s = (t - traj.t0) / traj.tau;
  int i = static_cast<int>(std::floor(s));
  i = std::clamp(i, 1, k - 3);  // guards fp edge cases at the boundaries
  return {i, s - i};
}

struct SegmentEval {
  SegmentRef ref;
  Vec4 basis;
  std::array<Vec6, 3> omega;   // increments between consecutive active knots
  std::array<Pose, 3> factor;  // A_j = exp(basis[j+1] * omega[j])
  std::array<Pose, 4> suffix;  // suffix[j] = A_j * ... * A_2; suffix[3] = I
  Pose pose;
};

SegmentEval evaluate(const SplineTrajectory& traj, double t) {
  SegmentEval ev;
  ev.ref = locate(traj, t);
  ev.basis = cumulative_basis(ev.ref.u);
  const int base = ev.ref.i - 1;
  for (int j = 0; j < 3; ++j) {
    const Pose d = traj.knots[base + j].inverse() * traj.knots[base + j + 1];
    ev.omega[j] = se3_log(d, traj.chart).vec();
    ev.factor[j] =
        se3_exp(Twist::from_vec(ev.basis[j + 1] * ev.omega[j]), traj.chart);
  }
  ev.suffix[3] = Pose();
  for (int j = 2; j >= 0; --j) ev.suffix[j] = ev.factor[j] * ev.suffix[j + 1];
  ev.pose = traj.knots[base] * ev.suffix[0];
  return ev;
}

}  // namespace

Vec4 cumulative_basis(double u) {
  if (!(u >= 0.0 && u < 1.0))
    throw DomainError("cumulative_basis: u must lie in [0, 1)");
  const double u2 = u * u;
  const double u3 = u2 * u;
  Vec4 b;
  b[0] = 1.0;
  b[1] = (5.0 + 3.0 * u - 3.0 * u2 + u3) / 6.0;
  b[2] = (1.0 + 3.0 * u + 3.0 * u2 - 2.0 * u3) / 6.0;
  b[3] = u3 / 6.0;
  return b;
}

Vec4 cumulative_basis_deriv(double u) {
  if (!(u >= 0.0 && u < 1.0))
    throw DomainError("cumulative_basis_deriv: u must lie in [0, 1)");
  const double u2 = u * u;
  Vec4 b;
  b[0] = 0.0;
  b[1] = (3.0 - 6.0 * u + 3.0 * u2) / 6.0;
  b[2] = (3.0 + 6.0 * u - 6.0 * u2) / 6.0;
  b[3] = 3.0 * u2 / 6.0;
  return b;
}

Pose pose_at(const SplineTrajectory& traj, double t) {
  return evaluate(traj, t).pose;
}

Twist body_velocity_at(const SplineTrajectory& traj, double t) {
  const SegmentEval ev = evaluate(traj, t);
  const Vec4 db = cumulative_basis_deriv(ev.ref.u);
  Vec6 v = Vec6::Zero();
  for (int j = 0; j < 3; ++j) {
    const Vec6 contrib =
        right_jacobian(ev.basis[j + 1] * ev.omega[j], traj.chart) *
        ev.omega[j] * (db[j + 1] / traj.tau);
    v += adjoint(ev.suffix[j + 1].inverse()) * contrib;
  }
  return Twist::from_vec(v);
}

SplinePoint pose_with_jacobians(const SplineTrajectory& traj, double t) {
  const SegmentEval ev = evaluate(traj, t);
  SplinePoint out;
  out.pose = ev.pose;
  out.first_knot = ev.ref.i - 1;

  // E_j maps a right increment of D_j = T_{base+j}^-1 T_{base+j+1} to a right
  // increment of the pose: E_j = Ad_{S_{j+1}^-1} J_r(B_{j+1} W_j) B_{j+1}
  // J_r^-1(W_j). A knot perturbation enters D_{j-1} positively and D_j
  // through -Ad_{D_j^-1}; the first knot also moves the leading factor.
  std::array<Mat6, 3> e;
  std::array<Mat6, 3> ad_dinv;
  const int base = ev.ref.i - 1;
  for (int j = 0; j < 3; ++j) {
    const Pose d = traj.knots[base + j].inverse() * traj.knots[base + j + 1];
    e[j] = adjoint(ev.suffix[j + 1].inverse()) *
           right_jacobian(ev.basis[j + 1] * ev.omega[j], traj.chart) *
           ev.basis[j + 1] * right_jacobian_inverse(ev.omega[j], traj.chart);
    ad_dinv[j] = adjoint(d.inverse());
  }
  out.knot_jacobian[0] = adjoint(ev.suffix[0].inverse()) - e[0] * ad_dinv[0];
  out.knot_jacobian[1] = e[0] - e[1] * ad_dinv[1];
  out.knot_jacobian[2] = e[1] - e[2] * ad_dinv[2];
  out.knot_jacobian[3] = e[2];
  return out;
}

// ------------------------------------------------------------------ fitting

namespace {

// Geodesic interpolation/extrapolation through the observed poses, used to
// seed the control grid before refinement.
Pose interp_pose(const std::vector<std::pair<double, Pose>>& poses, double t,
                 Se3Chart chart) {
  const std::size_t m = poses.size();
  std::size_t hi = 0;
  while (hi < m && poses[hi].first < t) ++hi;
  std::size_t a, b;
  if (hi == 0) {
    a = 0;
    b = 1;
  } else if (hi == m) {
    a = m - 2;
    b = m - 1;
  } else {
    a = hi - 1;
    b = hi;
  }
  const double ta = poses[a].first, tb = poses[b].first;
  const double alpha = (t - ta) / (tb - ta);
  const Twist step = se3_log(poses[a].second.inverse() * poses[b].second, chart);
  return poses[a].second * se3_exp(Twist::from_vec(alpha * step.vec()), chart);
}

double fit_cost(const SplineTrajectory& traj,
                const std::vector<std::pair<double, Pose>>& poses) {
  double cost = 0.0;
  for (const auto& [t, p] : poses) {
    const Vec6 r = se3_log(pose_at(traj, t).inverse() * p).vec();
    cost += r.squaredNorm();
  }
  return cost;
}

}  // namespace

FitResult fit_knots(const std::vector<std::pair<double, Pose>>& timed_poses,
                    double knots_per_pose, Se3Chart chart, double margin,
                    int max_iterations) {
  const int m = static_cast<int>(timed_poses.size());
  if (m < 2) throw DegenerateInput("fit_knots: needs at least 2 poses");
  if (!(knots_per_pose > 0.0))
    throw DegenerateInput("fit_knots: knot ratio must be positive");
  if (!(margin >= 0.0)) throw DegenerateInput("fit_knots: negative margin");
  for (int i = 1; i < m; ++i)
    if (!(timed_poses[i].first > timed_poses[i - 1].first))
      throw DegenerateInput("fit_knots: timestamps must strictly increase");

  SplineTrajectory traj;
  traj.chart = chart;
  const int k = std::max(
      4, static_cast<int>(std::ceil(knots_per_pose * m)) + 3);
  const double t_start = timed_poses.front().first - margin;
  const double t_end = timed_poses.back().first + margin;
  // Inflate slightly so the last observation stays strictly inside the
  // half-open domain.
  traj.tau = (t_end - t_start) * (1.0 + 1e-6) / (k - 3);
  traj.t0 = t_start - traj.tau;
  traj.knots.resize(k);
  for (int j = 0; j < k; ++j)
    traj.knots[j] = interp_pose(timed_poses, traj.t0 + j * traj.tau, chart);

  // Damped Gauss-Newton (Levenberg) on r_i = log(P(t_i)^-1 P_i^obs). The
  // residual Jacobian w.r.t. a pose right-increment is -J_l^-1(r) = -J_r^-1(-r).
  const int n = 6 * k;
  double cost = fit_cost(traj, timed_poses);
  double lambda = 1e-6;
  int iters = 0;
  for (int it = 0; it < max_iterations; ++it) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(m) * 24 * 24);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (const auto& [t, p_obs] : timed_poses) {
      const SplinePoint sp = pose_with_jacobians(traj, t);
      const Vec6 r = se3_log(sp.pose.inverse() * p_obs).vec();
      const Mat6 dr_dpose = -right_jacobian_inverse(-r);
      std::array<Mat6, 4> jac;
      for (int a = 0; a < 4; ++a) jac[a] = dr_dpose * sp.knot_jacobian[a];
      for (int a = 0; a < 4; ++a) {
        const int ca = 6 * (sp.first_knot + a);
        g.segment<6>(ca) += jac[a].transpose() * r;
        for (int b = 0; b < 4; ++b) {
          const int cb = 6 * (sp.first_knot + b);
          const Mat6 h = jac[a].transpose() * jac[b];
          for (int ra = 0; ra < 6; ++ra)
            for (int rb = 0; rb < 6; ++rb)
              trips.emplace_back(ca + ra, cb + rb, h(ra, rb));
        }
      }
    }
    Eigen::SparseMatrix<double> h(n, n);
    h.setFromTriplets(trips.begin(), trips.end());

    bool accepted = false;
    for (int tries = 0; tries < 12 && !accepted; ++tries) {
      Eigen::SparseMatrix<double> hd = h;
      for (int c = 0; c < n; ++c) {
        const double d = std::max(h.coeff(c, c), 1e-8);
        hd.coeffRef(c, c) = h.coeff(c, c) + lambda * d;
      }
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(hd);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd delta = solver.solve(-g);
      SplineTrajectory trial = traj;
      for (int j = 0; j < k; ++j)
        trial.knots[j] =
            traj.knots[j] * se3_exp(Twist::from_vec(delta.segment<6>(6 * j)));
      const double trial_cost = fit_cost(trial, timed_poses);
      if (trial_cost <= cost) {
        const double drop = cost - trial_cost;
        traj = std::move(trial);
        cost = trial_cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        ++iters;
        if (delta.lpNorm<Eigen::Infinity>() < 1e-12 ||
            drop < 1e-14 * std::max(cost, 1.0)) {
          it = max_iterations;  // converged
        }
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  FitResult out;
  out.trajectory = std::move(traj);
  out.rms_residual = std::sqrt(cost / m);
  out.iterations = iters;
  return out;
}

// -------------------------------------------------------------------- files

namespace {

std::string pose_line(double t, const Pose& p) {
  std::ostringstream s;
  s << format_g17(t) << " " << format_g17(p.rotation.w()) << " "
    << format_g17(p.rotation.x()) << " " << format_g17(p.rotation.y()) << " "
    << format_g17(p.rotation.z()) << " " << format_g17(p.translation.x()) << " "
    << format_g17(p.translation.y()) << " " << format_g17(p.translation.z());
  return s.str();
}

bool parse_pose_line(const std::string& line, double* t, Pose* p) {
  std::istringstream s(line);
  double qw, qx, qy, qz, tx, ty, tz;
  if (!(s >> *t >> qw >> qx >> qy >> qz >> tx >> ty >> tz)) return false;
  *p = Pose(Rotation::from_quaternion(qw, qx, qy, qz), Vec3(tx, ty, tz));
  return true;
}

}  // namespace

void save_trajectory(const std::filesystem::path& path,
                     const SplineTrajectory& traj) {
  std::ostringstream out;
  out << "# tau=" << format_g17(traj.tau) << " t0=" << format_g17(traj.t0)
      << "\n";
  for (std::size_t j = 0; j < traj.knots.size(); ++j)
    out << pose_line(traj.t0 + static_cast<double>(j) * traj.tau,
                     traj.knots[j])
        << "\n";
  write_text_file(path, out.str());
}

SplineTrajectory load_trajectory(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  SplineTrajectory traj;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t tau_pos = line.find("tau=");
      std::size_t t0_pos = line.find("t0=");
      if (tau_pos != std::string::npos && t0_pos != std::string::npos) {
        traj.tau = std::stod(line.substr(tau_pos + 4));
        traj.t0 = std::stod(line.substr(t0_pos + 3));
        have_header = true;
      }
      continue;
    }
    double t;
    Pose p;
    if (!parse_pose_line(line, &t, &p))
      throw IoError("load_trajectory: bad line in " + path.string());
    traj.knots.push_back(p);
  }
  if (!have_header)
    throw IoError("load_trajectory: missing tau/t0 header in " + path.string());
  if (traj.knots.size() < 4)
    throw IoError("load_trajectory: fewer than 4 knots in " + path.string());
  if (!(traj.tau > 0.0))
    throw IoError("load_trajectory: non-positive tau in " + path.string());
  return traj;
}

void save_timed_poses(const std::filesystem::path& path,
                      const std::vector<std::pair<double, Pose>>& poses) {
  std::ostringstream out;
  out << "# t q_w q_x q_y q_z t_x t_y t_z\n";
  for (const auto& [t, p] : poses) out << pose_line(t, p) << "\n";
  write_text_file(path, out.str());
}

std::vector<std::pair<double, Pose>> load_timed_poses(
    const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<std::pair<double, Pose>> poses;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    double t;
    Pose p;
    if (!parse_pose_line(line, &t, &p))
      throw IoError("load_timed_poses: bad line in " + path.string());
    poses.emplace_back(t, p);
  }
  return poses;
}

}  // namespace chs

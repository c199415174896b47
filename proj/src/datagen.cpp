// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0

#include "chs/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "json.hpp"

#include "chs/errors.hpp"
#include "chs/io.hpp"

namespace chs {

namespace {

constexpr double kAeTarget = 0.45;
constexpr double kAeGainMin = 0.7;
constexpr double kAeGainMax = 1.4;
constexpr double kOrbitPhase = 0.3;  // start azimuth of the camera orbit

void validate(const SynthSpec& spec) {
  if (spec.width < 8 || spec.height < 8)
    throw DomainError("generate: image sides must be >= 8");
  if (spec.n_frames < 8) throw DomainError("generate: need >= 8 frames");
  if (spec.n_gaussians < 1) throw DomainError("generate: need >= 1 primitive");
  if (!(spec.dt_min > 0.0) || !(spec.dt_max >= spec.dt_min))
    throw DomainError("generate: shutter range must be positive");
  if (!(spec.fps > 0.0)) throw DomainError("generate: fps must be positive");
  if (spec.n_gt < 1) throw DomainError("generate: n_gt must be >= 1");
  if (!(spec.gamma > 0.0)) throw DomainError("generate: gamma must be positive");
  if (spec.shake_amplitude < 0.0 || spec.wb_jitter < 0.0 ||
      spec.pose_noise_rot_deg < 0.0 || spec.pose_noise_trans < 0.0)
    throw DomainError("generate: amplitudes must be non-negative");
}

// Desk-scale content: anisotropic Gaussians in a box in front of the orbit,
// radiance log-uniform across decades with an azimuthal brightness ramp so
// a moving camera sees genuinely different scene luminance.
GaussianScene make_scene(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  GaussianScene scene;
  scene.prims.resize(static_cast<std::size_t>(n));
  for (auto& p : scene.prims) {
    p.mean = Vec3(-0.95 + 1.9 * u(rng), -0.55 + 1.1 * u(rng),
                  -0.95 + 1.9 * u(rng));
    const double azimuth = std::atan2(p.mean.z(), p.mean.x());
    const double decades = -1.35 + 2.7 * u(rng) + 0.5 * std::sin(azimuth);
    for (int c = 0; c < 3; ++c) {
      const double chroma = 0.35 + 0.65 * u(rng);
      p.color_log[c] = decades * std::log(10.0) + std::log(chroma);
    }
    Vec3 axis(g(rng), g(rng), g(rng));
    if (axis.norm() < 1e-9) axis = Vec3::UnitX();
    p.orientation = so3_exp(axis.normalized() * (2.8 * u(rng)));
    for (int a = 0; a < 3; ++a)
      p.log_scale[a] = std::log(0.06 + 0.16 * u(rng));
    p.opacity_raw = 0.5 + 2.0 * u(rng);
  }

  // A few large, very bright "window" blobs outside the content box. They
  // sit ahead of the camera only over part of the orbit, so the visible
  // dynamic range sweeps by multiple stops and auto exposure has to respond.
  const int n_windows = std::clamp(n / 20, 2, 4);
  for (int j = 0; j < n_windows; ++j) {
    auto& p = scene.prims[scene.prims.size() - 1 - static_cast<std::size_t>(j)];
    const double w = kOrbitPhase + M_PI + 0.35 + 0.5 * j;
    p.mean = Vec3(2.05 * std::cos(w), 0.15 * (j - 1), 2.05 * std::sin(w));
    p.orientation = Rotation();
    p.log_scale = Vec3::Constant(std::log(0.45));
    const double lum = std::pow(10.0, 1.6);
    p.color_log = Vec3(std::log(lum * 0.95), std::log(lum * 0.8),
                       std::log(lum * 0.6));
    p.opacity_raw = 2.5;
  }
  return scene;
}

// Camera-to-world rotation with +z looking from `eye` toward `target`.
Rotation look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 f = (target - eye).normalized();
  Vec3 r = up.cross(f);
  if (r.norm() < 1e-9) r = Vec3::UnitX();
  r.normalize();
  const Vec3 d = f.cross(r);
  Mat3 m;
  m.col(0) = r;
  m.col(1) = d;
  m.col(2) = f;
  return Rotation::from_matrix(m);
}

// Knot grid covering [0, t_end] with margin inside the valid interval.
SplineTrajectory make_trajectory(const SynthSpec& spec, double t_end,
                                 std::uint64_t seed) {
  const double tau = 0.25;
  const double margin = 0.1;
  SplineTrajectory traj;
  traj.tau = tau;
  traj.t0 = -2.0 * tau;
  int knots = 4;
  while (traj.t0 + (knots - 2) * tau <= t_end + margin) ++knots;
  ++knots;  // strict-interior slack on the right edge

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double radius = 3.2;
  const double base_height = 0.25;
  const double omega =
      M_PI / (static_cast<double>(spec.n_frames) / spec.fps);  // half orbit
  const double phase0 = kOrbitPhase;

  const Pose shake_base =
      Pose(look_at(Vec3(radius, base_height, 0.0), Vec3::Zero(),
                   Vec3::UnitY()),
           Vec3(radius, base_height, 0.0));
  Twist walk;  // shake kind: random walk in the camera frame

  traj.knots.reserve(static_cast<std::size_t>(knots));
  for (int k = 0; k < knots; ++k) {
    const double t = traj.t0 + k * tau;
    Pose pose;
    switch (spec.trajectory) {
      case TrajectoryKind::orbit: {
        const double a = phase0 + omega * t;
        const Vec3 eye(radius * std::cos(a),
                       base_height + 0.2 * std::sin(0.9 * omega * t),
                       radius * std::sin(a));
        pose = Pose(look_at(eye, Vec3::Zero(), Vec3::UnitY()), eye);
        break;
      }
      case TrajectoryKind::shake:
        pose = shake_base;
        break;
      case TrajectoryKind::screw: {
        const double a = phase0 + omega * t;
        const double lift = 0.18 * t;
        const Vec3 eye(radius * std::cos(a), base_height + lift,
                       radius * std::sin(a));
        pose = Pose(look_at(eye, Vec3(0.0, base_height + lift, 0.0),
                            Vec3::UnitY()),
                    eye);
        break;
      }
    }
    // Hand jitter. The shake kind accumulates a random walk so amplitude 0
    // degenerates to a strictly static trajectory.
    Twist xi{Vec3(u(rng), u(rng), u(rng)) * spec.shake_amplitude,
             Vec3(u(rng), u(rng), u(rng)) * spec.shake_amplitude};
    if (spec.trajectory == TrajectoryKind::shake) {
      walk.omega += xi.omega;
      walk.v += xi.v;
      xi = walk;
    }
    pose = pose * se3_exp(xi, traj.chart);
    traj.knots.push_back(pose);
  }
  return traj;
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.png", i);
  return buf;
}

std::string sharp_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.pfm", i);
  return buf;
}

void make_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string());
}

}  // namespace

const char* trajectory_name(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::orbit: return "orbit";
    case TrajectoryKind::shake: return "shake";
    case TrajectoryKind::screw: return "screw";
  }
  return "orbit";
}

const char* exposure_name(ExposureLaw law) {
  switch (law) {
    case ExposureLaw::constant: return "constant";
    case ExposureLaw::ae_controller: return "ae-controller";
    case ExposureLaw::random_log_uniform: return "random-log-uniform";
  }
  return "constant";
}

TrajectoryKind parse_trajectory(const std::string& name) {
  if (name == "orbit") return TrajectoryKind::orbit;
  if (name == "shake") return TrajectoryKind::shake;
  if (name == "screw") return TrajectoryKind::screw;
  throw ConfigError("unknown trajectory kind '" + name + "'");
}

ExposureLaw parse_exposure_law(const std::string& name) {
  if (name == "constant") return ExposureLaw::constant;
  if (name == "ae-controller") return ExposureLaw::ae_controller;
  if (name == "random-log-uniform") return ExposureLaw::random_log_uniform;
  throw ConfigError("unknown exposure law '" + name + "'");
}

double ae_controller(double prev_brightness, double prev_dt, double dt_min,
                     double dt_max) {
  double gain = kAeTarget / prev_brightness;  // +inf for black frames
  gain = std::clamp(gain, kAeGainMin, kAeGainMax);
  return std::clamp(prev_dt * gain, dt_min, dt_max);
}

void save_points3d(const std::filesystem::path& path,
                   const std::vector<SeedPoint>& points) {
  std::string text = "# x y z r g b\n";
  for (const auto& p : points) {
    text += format_g17(p.position.x()) + " " + format_g17(p.position.y()) +
            " " + format_g17(p.position.z()) + " " + format_g17(p.radiance.x()) +
            " " + format_g17(p.radiance.y()) + " " +
            format_g17(p.radiance.z()) + "\n";
  }
  write_text_file(path, text);
}

std::vector<SeedPoint> load_points3d(const std::filesystem::path& path) {
  std::vector<SeedPoint> points;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    SeedPoint p;
    if (!(row >> p.position.x() >> p.position.y() >> p.position.z() >>
          p.radiance.x() >> p.radiance.y() >> p.radiance.z()))
      throw IoError("points3d: malformed line in " + path.string());
    points.push_back(p);
  }
  return points;
}

SynthResult generate(const SynthSpec& spec,
                     const std::filesystem::path& out_dir, ThreadPool& pool) {
  validate(spec);

  // Fixed draw order keeps the streams independent of each other, so e.g.
  // changing the exposure law leaves the scene and trajectory unchanged.
  std::mt19937_64 master(spec.seed);
  const std::uint64_t scene_seed = master();
  const std::uint64_t traj_seed = master();
  const std::uint64_t wb_seed = master();
  const std::uint64_t exposure_seed = master();
  const std::uint64_t noise_seed = master();
  const std::uint64_t points_seed = master();

  SynthResult result;
  result.scene = make_scene(spec.n_gaussians, scene_seed);

  const double t_end =
      static_cast<double>(spec.n_frames - 1) / spec.fps + spec.dt_max;
  result.trajectory = make_trajectory(spec, t_end, traj_seed);

  result.camera.width = spec.width;
  result.camera.height = spec.height;
  result.camera.fx = static_cast<double>(spec.width);
  result.camera.fy = static_cast<double>(spec.width);
  result.camera.cx = 0.5 * spec.width;
  result.camera.cy = 0.5 * spec.height;

  // Reference tone curve: one network fitted to the gamma law, shared by all
  // channels; per-frame white balance carries the channel differences.
  const ToneMlp tone = fit_gamma_tone(spec.gamma);
  for (auto& t : result.crf.tone) t = tone;
  {
    std::mt19937_64 rng(wb_seed);
    std::uniform_real_distribution<double> u(-spec.wb_jitter, spec.wb_jitter);
    result.crf.log_wb.resize(static_cast<std::size_t>(spec.n_frames));
    for (auto& wb : result.crf.log_wb) wb = Vec3(u(rng), u(rng), u(rng));
  }

  ImagingConfig cfg;
  cfg.n_virtual = spec.n_gt;
  const double dt_mid = std::sqrt(spec.dt_min * spec.dt_max);

  // Calibrate global radiance: scale every primitive's color (which scales
  // the render linearly) so the mid-video frame meters at the AE target
  // under the nominal shutter. Keeps the decade span intact and stops the
  // exposure law from railing against its bounds.
  {
    const double t_probe =
        0.5 * static_cast<double>(spec.n_frames - 1) / spec.fps;
    const Image3 probe =
        render_hdr(result.scene, pose_at(result.trajectory, t_probe),
                   result.camera, cfg.raster, pool);
    CrfModel neutral;
    neutral.tone = result.crf.tone;
    neutral.log_wb.assign(1, Vec3::Zero());
    Image3 scaled(spec.width, spec.height);
    const auto mean_brightness = [&](double log_gain) {
      const double s = std::exp(log_gain) * dt_mid;
      for (std::size_t k = 0; k < probe.data.size(); ++k)
        scaled.data[k] = s * probe.data[k];
      const Image3 ldr = apply_crf(scaled, neutral, 0, pool);
      double m = 0.0;
      for (const double v : ldr.data) m += v;
      return m / static_cast<double>(ldr.data.size());
    };
    double lo = -12.0, hi = 12.0;
    double shift;
    if (mean_brightness(hi) <= kAeTarget) {
      shift = hi;  // saturated coverage: get as close as possible
    } else if (mean_brightness(lo) >= kAeTarget) {
      shift = lo;
    } else {
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_brightness(mid) < kAeTarget ? lo : hi) = mid;
      }
      shift = 0.5 * (lo + hi);
    }
    for (auto& p : result.scene.prims) p.color_log.array() += shift;
  }

  make_dir(out_dir);
  make_dir(out_dir / "frames");
  make_dir(out_dir / "sharp");
  make_dir(out_dir / "sharp_ldr");

  std::mt19937_64 exposure_rng(exposure_seed);
  std::uniform_real_distribution<double> log_dt_u(std::log(spec.dt_min),
                                                  std::log(spec.dt_max));

  double v_min_pos = std::numeric_limits<double>::infinity();
  double v_max = 0.0;
  std::vector<std::vector<double>> exposure_rows;
  std::vector<std::pair<double, Pose>> gt_mid_poses;

  double dt = dt_mid;
  for (int i = 0; i < spec.n_frames; ++i) {
    const double t_b = static_cast<double>(i) / spec.fps;
    switch (spec.exposure) {
      case ExposureLaw::constant:
        dt = dt_mid;
        break;
      case ExposureLaw::random_log_uniform:
        dt = std::exp(log_dt_u(exposure_rng));
        break;
      case ExposureLaw::ae_controller:
        if (i > 0)
          dt = ae_controller(result.frame_brightness.back(), dt, spec.dt_min,
                             spec.dt_max);
        break;
    }
    const FrameExposure frame{t_b, std::log(dt)};
    result.exposures.push_back(frame);
    // Everything downstream uses the model's shutter exp(log dt), which can
    // differ from the raw draw in the last ulp.
    const double dt_model = frame.dt();
    exposure_rows.push_back({static_cast<double>(i), t_b, dt_model});

    // Observed frame. Composing the two stages equals form_frame bitwise;
    // the intermediate exposure image feeds the populated-range bookkeeping.
    const Image3 exposure = synthesize_exposure(
        result.scene, result.trajectory, result.camera, frame, i, cfg, pool);
    const Image3 ldr = apply_crf(exposure, result.crf, i, pool);
    write_png(out_dir / "frames" / frame_name(i), ldr);

    const Vec3 wb = result.crf.log_wb[static_cast<std::size_t>(i)]
                        .array()
                        .exp();
    for (int px = 0; px < spec.width * spec.height; ++px)
      for (int c = 0; c < 3; ++c) {
        const double v = wb[c] * exposure.data[static_cast<std::size_t>(
                                     3 * px + c)];
        if (v > 0.0) v_min_pos = std::min(v_min_pos, v);
        v_max = std::max(v_max, v);
      }

    double mean = 0.0;
    for (const double v : ldr.data) mean += v;
    result.frame_brightness.push_back(mean /
                                      static_cast<double>(ldr.data.size()));

    // Zero-blur references at the mid-exposure timestamp.
    const double t_mid = t_b + 0.5 * dt_model;
    const Pose mid_pose = pose_at(result.trajectory, t_mid);
    gt_mid_poses.emplace_back(t_mid, mid_pose);
    const Image3 sharp = render_hdr(result.scene, mid_pose, result.camera,
                                    cfg.raster, pool);
    write_pfm(out_dir / "sharp" / sharp_name(i), sharp);
    write_png(out_dir / "sharp_ldr" / frame_name(i),
              retint(sharp, result.crf, dt_model, i, pool));
  }

  write_csv(out_dir / "exposures.csv", "index,t_b,dt", exposure_rows);
  save_trajectory(out_dir / "trajectory_gt.txt", result.trajectory);

  // Initialization poses: ground truth at mid-exposure plus twist noise.
  {
    Vec3 lo = gt_mid_poses.front().second.translation;
    Vec3 hi = lo;
    for (const auto& [t, pose] : gt_mid_poses) {
      lo = lo.cwiseMin(pose.translation);
      hi = hi.cwiseMax(pose.translation);
    }
    result.scene_scale = (hi - lo).norm();
    const double rot_sigma = spec.pose_noise_rot_deg * M_PI / 180.0;
    const double trans_sigma = spec.pose_noise_trans * result.scene_scale;
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (const auto& [t, pose] : gt_mid_poses) {
      const Twist xi{rot_sigma * Vec3(g(rng), g(rng), g(rng)),
                     trans_sigma * Vec3(g(rng), g(rng), g(rng))};
      result.poses_noisy.emplace_back(
          t, pose * se3_exp(xi, result.trajectory.chart));
    }
    save_timed_poses(out_dir / "poses_noisy.txt", result.poses_noisy);
  }

  // Seed points: perturbed primitive centers with rough radiance estimates.
  {
    std::mt19937_64 rng(points_seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    std::vector<SeedPoint> points;
    for (const auto& p : result.scene.prims) {
      SeedPoint sp;
      sp.position = p.mean + 0.03 * Vec3(g(rng), g(rng), g(rng));
      sp.radiance = p.color() * std::exp(u(rng));
      points.push_back(sp);
    }
    save_points3d(out_dir / "points3d.txt", points);
  }

  // Tone-curve table over the populated range of pre-tone values.
  {
    const double lo_v = std::max(
        std::isfinite(v_min_pos) ? v_min_pos : result.crf.eps_log,
        result.crf.eps_log);
    const double hi_v = std::max(v_max, lo_v * std::exp(1.0));
    const double lo = std::log(lo_v), hi = std::log(hi_v);
    std::vector<std::vector<double>> rows;
    for (int j = 0; j <= 100; ++j) {
      const double x = lo + (hi - lo) * j / 100.0;
      rows.push_back({x, result.crf.tone[0].value(x),
                      result.crf.tone[1].value(x),
                      result.crf.tone[2].value(x)});
    }
    write_csv(out_dir / "crf_gt.csv", "log_exposure,r,g,b", rows);
  }

  // Camera intrinsics and the resolved spec.
  {
    nlohmann::json meta;
    meta["camera"] = {{"fx", result.camera.fx},   {"fy", result.camera.fy},
                      {"cx", result.camera.cx},   {"cy", result.camera.cy},
                      {"width", result.camera.width},
                      {"height", result.camera.height}};
    meta["spec"] = {{"n_gaussians", spec.n_gaussians},
                    {"width", spec.width},
                    {"height", spec.height},
                    {"n_frames", spec.n_frames},
                    {"trajectory", trajectory_name(spec.trajectory)},
                    {"shake_amplitude", spec.shake_amplitude},
                    {"exposure", exposure_name(spec.exposure)},
                    {"dt_min", spec.dt_min},
                    {"dt_max", spec.dt_max},
                    {"fps", spec.fps},
                    {"gamma", spec.gamma},
                    {"wb_jitter", spec.wb_jitter},
                    {"pose_noise_rot_deg", spec.pose_noise_rot_deg},
                    {"pose_noise_trans", spec.pose_noise_trans},
                    {"n_gt", spec.n_gt},
                    {"seed", spec.seed}};
    meta["scene_scale"] = result.scene_scale;
    meta["eps_log"] = result.crf.eps_log;
    write_text_file(out_dir / "meta.json", meta.dump(2) + "\n");
  }

  save_scene(out_dir / "scene_gt.chs", result.scene);
  return result;
}

}  // namespace chs

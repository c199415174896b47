// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic auto-exposure video generator: builds a seeded HDR Gaussian
// scene, a smooth spline camera trajectory, a gamma-law tone model, and an
// exposure schedule, renders motion-blurred LDR frames with the production
// forward model (large virtual shutter count), and writes the dataset
// directory consumed by training and evaluation.
#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "chs/imaging.hpp"
#include "chs/scene.hpp"
#include "chs/threading.hpp"
#include "chs/trajectory.hpp"

namespace chs {

enum class TrajectoryKind { orbit, shake, screw };
enum class ExposureLaw { constant, ae_controller, random_log_uniform };

// Stable names used in metadata and config files ("orbit", "ae-controller",
// "random-log-uniform", ...). Parsers throw ConfigError on unknown names.
const char* trajectory_name(TrajectoryKind k);
const char* exposure_name(ExposureLaw law);
TrajectoryKind parse_trajectory(const std::string& name);
ExposureLaw parse_exposure_law(const std::string& name);

struct SynthSpec {
  int n_gaussians = 60;
  int width = 64;
  int height = 64;
  int n_frames = 40;
  TrajectoryKind trajectory = TrajectoryKind::orbit;
  double shake_amplitude = 0.02;  // per-knot jitter, radians / scene units
  ExposureLaw exposure = ExposureLaw::ae_controller;
  double dt_min = 0.004;  // shutter bounds, seconds
  double dt_max = 0.08;
  double fps = 10.0;    // frame-start rate
  double gamma = 2.2;   // reference tone-curve exponent
  double wb_jitter = 0.05;  // per-frame log white-balance range (+-)
  double pose_noise_rot_deg = 0.5;  // noisy-pose file: per-axis rotation sigma
  double pose_noise_trans = 0.01;   // translation sigma, fraction of scale
  int n_gt = 64;  // virtual shutter samples per generated frame
  std::uint64_t seed = 1;
};

// Ground truth kept in memory for tests and evaluation.
struct SynthResult {
  GaussianScene scene;
  SplineTrajectory trajectory;
  CrfModel crf;
  ExposureSchedule exposures;
  Camera camera;
  std::vector<std::pair<double, Pose>> poses_noisy;  // mid-exposure stamps
  std::vector<double> frame_brightness;              // mean LDR per frame
  double scene_scale = 0.0;  // diagonal of the camera-position bounding box
};

// Multiplicative auto-exposure control toward mean frame brightness 0.45:
//   next = prev_dt * clamp(0.45 / prev_brightness, 0.7, 1.4),
// clamped to [dt_min, dt_max].
double ae_controller(double prev_brightness, double prev_dt, double dt_min,
                     double dt_max);

// Seed points handed to initialization: approximate positions with a rough
// linear-radiance estimate.
struct SeedPoint {
  Vec3 position = Vec3::Zero();
  Vec3 radiance = Vec3::Ones();
};
// Text format: '#' comments, then "x y z r g b" lines (%.17g).
void save_points3d(const std::filesystem::path& path,
                   const std::vector<SeedPoint>& points);
std::vector<SeedPoint> load_points3d(const std::filesystem::path& path);

// Generates the dataset under `out_dir`:
//   frames/frame_%04d.png     observed motion-blurred LDR frames
//   sharp/frame_%04d.pfm      zero-blur HDR radiance at mid-exposure
//   sharp_ldr/frame_%04d.png  tone-mapped zero-blur reference frames
//   exposures.csv             index,t_b,dt
//   trajectory_gt.txt         control poses of the ground-truth spline
//   poses_noisy.txt           perturbed mid-exposure poses for initialization
//   points3d.txt              seed points with approximate radiance
//   crf_gt.csv                log_exposure,r,g,b tone-curve samples over the
//                             populated exposure range
//   meta.json                 camera intrinsics and the resolved spec
//   scene_gt.chs              the generating scene (debugging aid)
// The same spec (same seed) produces byte-identical directory contents.
// Throws DomainError on invalid spec fields, IoError on write failure.
SynthResult generate(const SynthSpec& spec,
                     const std::filesystem::path& out_dir, ThreadPool& pool);

}  // namespace chs

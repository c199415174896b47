// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include "chs/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "chs/errors.hpp"
#include "chs/io.hpp"
#include "chs/metrics.hpp"
#include "doctest.h"

using namespace chs;
namespace fs = std::filesystem;

namespace {

ThreadPool& pool() {
  static ThreadPool p(2);
  return p;
}

SynthSpec small_spec() {
  SynthSpec s;
  s.n_gaussians = 25;
  s.width = 16;
  s.height = 16;
  s.n_frames = 8;
  s.n_gt = 8;
  s.seed = 7;
  return s;
}

fs::path temp_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / "chs_datagen_tests" / name;
  fs::remove_all(p);
  return p;
}

std::vector<fs::path> relative_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      out.push_back(fs::relative(entry.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

void check_directories_equal(const fs::path& a, const fs::path& b) {
  const auto fa = relative_files(a);
  const auto fb = relative_files(b);
  REQUIRE(fa == fb);
  for (const auto& rel : fa) {
    INFO("file: " << rel.string());
    CHECK(read_file_bytes(a / rel) == read_file_bytes(b / rel));
  }
}

std::string frame_png(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.png", i);
  return buf;
}

std::string frame_pfm(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.pfm", i);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Auto-exposure controller
// ---------------------------------------------------------------------------

TEST_CASE("ae controller holds at the target and clamps its gain") {
  // On-target brightness leaves the shutter unchanged, bitwise.
  CHECK(ae_controller(0.45, 0.02, 1e-4, 1.0) == 0.02);
  // Twice the target wants gain 0.5; the per-step clamp stops at 0.7.
  CHECK(ae_controller(0.9, 0.02, 1e-4, 1.0) == 0.02 * 0.7);
  // Dark (or black) frames push the gain to the 1.4 ceiling.
  CHECK(ae_controller(1e-9, 0.02, 1e-4, 1.0) == 0.02 * 1.4);
  CHECK(ae_controller(0.0, 0.02, 1e-4, 1.0) == 0.02 * 1.4);
  // Results are clamped to the shutter bounds.
  CHECK(ae_controller(0.1, 0.06, 0.008, 0.064) == 0.064);
  CHECK(ae_controller(4.5, 0.009, 0.008, 0.064) == 0.008);
}

// ---------------------------------------------------------------------------
// Generator output
// ---------------------------------------------------------------------------

TEST_CASE("same seed produces byte-identical datasets") {
  const SynthSpec spec = small_spec();
  const fs::path a = temp_dir("det_a");
  const fs::path b = temp_dir("det_b");
  generate(spec, a, pool());
  generate(spec, b, pool());
  check_directories_equal(a, b);
}

TEST_CASE("zero shake and constant exposure degenerate to static frames") {
  SynthSpec spec = small_spec();
  spec.trajectory = TrajectoryKind::shake;
  spec.shake_amplitude = 0.0;
  spec.exposure = ExposureLaw::constant;
  spec.wb_jitter = 0.0;
  spec.n_gt = 1;
  const fs::path dir = temp_dir("static");
  const SynthResult r = generate(spec, dir, pool());

  // All observed frames are the same image.
  const auto first = read_file_bytes(dir / "frames" / frame_png(0));
  for (int i = 1; i < spec.n_frames; ++i)
    CHECK(read_file_bytes(dir / "frames" / frame_png(i)) == first);

  // With no blur the observed frame equals the tone-mapped sharp render.
  CHECK(read_file_bytes(dir / "sharp_ldr" / frame_png(0)) == first);

  // And the forward model reproduces it bitwise.
  ImagingConfig cfg;
  cfg.n_virtual = spec.n_gt;
  const Image3 ldr = form_frame(r.scene, r.trajectory, r.camera, r.crf,
                                r.exposures[0], 0, cfg, pool());
  const fs::path replay = temp_dir("static_replay");
  fs::create_directories(replay);
  write_png(replay / "f.png", ldr);
  CHECK(read_file_bytes(replay / "f.png") == first);
}

TEST_CASE("stored frames are reproduced exactly by the forward model") {
  const SynthSpec spec = small_spec();
  const fs::path dir = temp_dir("selfcheck");
  const SynthResult r = generate(spec, dir, pool());
  ImagingConfig cfg;
  cfg.n_virtual = spec.n_gt;
  const fs::path replay = temp_dir("selfcheck_replay");
  fs::create_directories(replay);
  for (int i = 0; i < spec.n_frames; ++i) {
    const Image3 ldr = form_frame(r.scene, r.trajectory, r.camera, r.crf,
                                  r.exposures[static_cast<std::size_t>(i)], i,
                                  cfg, pool());
    write_png(replay / "f.png", ldr);
    CHECK(read_file_bytes(replay / "f.png") ==
          read_file_bytes(dir / "frames" / frame_png(i)));
    // The decoded 8-bit frame is quantization-close to the float render.
    const double db = psnr(ldr, read_png(dir / "frames" / frame_png(i)));
    CHECK(db > 50.0);
  }
}

TEST_CASE("sharp references hold the mid-exposure radiance as float32") {
  const SynthSpec spec = small_spec();
  const fs::path dir = temp_dir("sharp");
  const SynthResult r = generate(spec, dir, pool());
  for (int i = 0; i < spec.n_frames; i += 3) {
    const FrameExposure& f = r.exposures[static_cast<std::size_t>(i)];
    const Pose mid = pose_at(r.trajectory, f.t_open + 0.5 * f.dt());
    const Image3 hdr =
        render_hdr(r.scene, mid, r.camera, RasterSettings{}, pool());
    const Image3 stored = read_pfm(dir / "sharp" / frame_pfm(i));
    REQUIRE(stored.data.size() == hdr.data.size());
    for (std::size_t k = 0; k < hdr.data.size(); ++k)
      CHECK(static_cast<float>(stored.data[k]) ==
            static_cast<float>(hdr.data[k]));
  }
}

TEST_CASE("csv and text artifacts roundtrip losslessly") {
  const SynthSpec spec = small_spec();
  const fs::path dir = temp_dir("roundtrip");
  const SynthResult r = generate(spec, dir, pool());

  const auto rows = read_csv(dir / "exposures.csv", "index,t_b,dt");
  REQUIRE(rows.size() == r.exposures.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i][0] == static_cast<double>(i));
    CHECK(rows[i][1] == r.exposures[i].t_open);
    CHECK(rows[i][2] == r.exposures[i].dt());
  }

  const SplineTrajectory traj = load_trajectory(dir / "trajectory_gt.txt");
  CHECK(traj.t0 == r.trajectory.t0);
  CHECK(traj.tau == r.trajectory.tau);
  REQUIRE(traj.knots.size() == r.trajectory.knots.size());
  for (std::size_t i = 0; i < traj.knots.size(); ++i) {
    CHECK(traj.knots[i].translation == r.trajectory.knots[i].translation);
    CHECK(traj.knots[i].rotation.quat().coeffs() ==
          r.trajectory.knots[i].rotation.quat().coeffs());
  }

  const auto noisy = load_timed_poses(dir / "poses_noisy.txt");
  REQUIRE(noisy.size() == r.poses_noisy.size());
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    CHECK(noisy[i].first == r.poses_noisy[i].first);
    CHECK(noisy[i].second.translation == r.poses_noisy[i].second.translation);
  }

  // crf_gt.csv samples the generating tone curves on its stated grid.
  const auto crf_rows = read_csv(dir / "crf_gt.csv", "log_exposure,r,g,b");
  REQUIRE(crf_rows.size() == 101);
  for (const auto& row : crf_rows) {
    CHECK(row[1] == r.crf.tone[0].value(row[0]));
    CHECK(row[2] == r.crf.tone[1].value(row[0]));
    CHECK(row[3] == r.crf.tone[2].value(row[0]));
  }
  CHECK(crf_rows.front()[0] >= std::log(r.crf.eps_log) - 1e-12);
  CHECK(crf_rows.back()[0] > crf_rows.front()[0]);
}

TEST_CASE("seed point files roundtrip") {
  std::vector<SeedPoint> points(3);
  points[0] = {Vec3(0.25, -1.5, 3.0), Vec3(0.1, 1.0, 10.0)};
  points[1] = {Vec3(1e-9, 2e17, -0.125), Vec3(0.3, 0.4, 0.5)};
  points[2] = {Vec3(-0.7, 0.1, 0.2), Vec3(2.0, 0.01, 5.5)};
  const fs::path dir = temp_dir("points");
  fs::create_directories(dir);
  save_points3d(dir / "p.txt", points);
  const auto back = load_points3d(dir / "p.txt");
  REQUIRE(back.size() == points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    CHECK(back[i].position == points[i].position);
    CHECK(back[i].radiance == points[i].radiance);
  }
}

TEST_CASE("noisy poses sit near ground truth at mid-exposure stamps") {
  const SynthSpec spec = small_spec();
  const fs::path dir = temp_dir("noise");
  const SynthResult r = generate(spec, dir, pool());
  REQUIRE(r.poses_noisy.size() == static_cast<std::size_t>(spec.n_frames));
  double max_angle = 0.0, max_shift = 0.0;
  for (std::size_t i = 0; i < r.poses_noisy.size(); ++i) {
    const FrameExposure& f = r.exposures[i];
    CHECK(r.poses_noisy[i].first == f.t_open + 0.5 * f.dt());
    const Pose gt = pose_at(r.trajectory, r.poses_noisy[i].first);
    const Pose delta = gt.inverse() * r.poses_noisy[i].second;
    max_angle = std::max(max_angle, so3_log(delta.rotation).norm());
    max_shift = std::max(
        max_shift, (r.poses_noisy[i].second.translation - gt.translation)
                       .norm());
  }
  CHECK(max_angle > 0.0);
  CHECK(max_shift > 0.0);
  // Sigma 0.5 deg per axis / 1% scale per axis, generously bounded at 5x.
  CHECK(max_angle < 5.0 * std::sqrt(3.0) * 0.5 * M_PI / 180.0);
  CHECK(max_shift < 5.0 * std::sqrt(3.0) * 0.01 * r.scene_scale);
}

TEST_CASE("meta file echoes the camera and the resolved spec") {
  const SynthSpec spec = small_spec();
  const fs::path dir = temp_dir("meta");
  const SynthResult r = generate(spec, dir, pool());
  const auto meta = nlohmann::json::parse(read_text_file(dir / "meta.json"));
  CHECK(meta["camera"]["width"] == spec.width);
  CHECK(meta["camera"]["fx"] == r.camera.fx);
  CHECK(meta["camera"]["cy"] == r.camera.cy);
  CHECK(meta["spec"]["seed"] == spec.seed);
  CHECK(meta["spec"]["n_gaussians"] == spec.n_gaussians);
  CHECK(meta["spec"]["trajectory"] == "orbit");
  CHECK(meta["spec"]["exposure"] == "ae-controller");
  CHECK(meta["spec"]["gamma"] == spec.gamma);
  CHECK(meta["scene_scale"] == r.scene_scale);
}

TEST_CASE("scene radiance spans at least three decades") {
  const SynthSpec spec = small_spec();
  const fs::path dir = temp_dir("span");
  const SynthResult r = generate(spec, dir, pool());
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& p : r.scene.prims) {
    const double lum = p.color().mean();
    lo = std::min(lo, lum);
    hi = std::max(hi, lum);
  }
  INFO("radiance span: " << hi / lo);
  CHECK(hi / lo >= 1e3);
}

TEST_CASE("exposure laws draw from independent streams") {
  SynthSpec spec = small_spec();
  const fs::path a = temp_dir("law_const");
  spec.exposure = ExposureLaw::constant;
  const SynthResult rc = generate(spec, a, pool());
  const fs::path b = temp_dir("law_rand");
  spec.exposure = ExposureLaw::random_log_uniform;
  const SynthResult rr = generate(spec, b, pool());

  // Same scene and trajectory either way.
  REQUIRE(rc.scene.prims.size() == rr.scene.prims.size());
  for (std::size_t i = 0; i < rc.scene.prims.size(); ++i)
    CHECK(rc.scene.prims[i].mean == rr.scene.prims[i].mean);
  CHECK(rc.trajectory.knots.size() == rr.trajectory.knots.size());

  // Constant law: one shutter value; random law: varied within bounds.
  const double dt0 = rc.exposures[0].dt();
  CHECK(dt0 == doctest::Approx(std::sqrt(spec.dt_min * spec.dt_max))
                   .epsilon(1e-15));
  for (const auto& f : rc.exposures) CHECK(f.dt() == dt0);
  double lo = 1e9, hi = 0.0;
  for (const auto& f : rr.exposures) {
    CHECK(f.dt() >= spec.dt_min);
    CHECK(f.dt() <= spec.dt_max);
    lo = std::min(lo, f.dt());
    hi = std::max(hi, f.dt());
  }
  CHECK(hi > lo);
}

TEST_CASE("invalid specs are rejected") {
  ThreadPool& p = pool();
  const fs::path dir = temp_dir("invalid");
  SynthSpec s = small_spec();
  s.width = 4;
  CHECK_THROWS_AS(generate(s, dir, p), DomainError);
  s = small_spec();
  s.n_frames = 4;
  CHECK_THROWS_AS(generate(s, dir, p), DomainError);
  s = small_spec();
  s.dt_min = 0.0;
  CHECK_THROWS_AS(generate(s, dir, p), DomainError);
  s = small_spec();
  s.dt_max = 0.5 * s.dt_min;
  CHECK_THROWS_AS(generate(s, dir, p), DomainError);
  s = small_spec();
  s.shake_amplitude = -0.1;
  CHECK_THROWS_AS(generate(s, dir, p), DomainError);
}

// ---------------------------------------------------------------------------
// Auto-exposure behavior on the full-scale scene
// ---------------------------------------------------------------------------

TEST_CASE("auto exposure keeps most frames in the brightness band") {
  SynthSpec spec;  // full default scene, lighter shutter oracle
  spec.n_gt = 16;
  const fs::path dir = temp_dir("ae_band");
  const SynthResult r = generate(spec, dir, pool());

  int in_band = 0;
  for (const double b : r.frame_brightness)
    if (b >= 0.35 && b <= 0.65) ++in_band;
  std::printf("ae band: %d/%d frames in [0.35, 0.65]\n", in_band,
              spec.n_frames);
  CHECK(in_band >= (9 * spec.n_frames + 9) / 10);

  // The scene's bright/dark sweep drives the shutter over >= 4x.
  double lo = 1e9, hi = 0.0;
  for (const auto& f : r.exposures) {
    lo = std::min(lo, f.dt());
    hi = std::max(hi, f.dt());
  }
  std::printf("ae shutter span: %.2fx (%.4gs..%.4gs)\n", hi / lo, lo, hi);
  CHECK(hi / lo >= 4.0);
}

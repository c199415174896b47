// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "chs/imaging.hpp"
#include "oracles.hpp"

using namespace chs;
using namespace chs::testing;

namespace {

ThreadPool& pool() { return ThreadPool::global(); }

Camera small_cam() {
  Camera cam;
  cam.fx = cam.fy = 24.0;
  cam.cx = cam.cy = 4.0;
  cam.width = cam.height = 8;
  return cam;
}

// Discontinuity-free rasterizer settings for finite-difference probing.
RasterSettings smooth_settings() {
  RasterSettings rs;
  rs.cull_eps = 1e-12;
  rs.t_min = 1e-9;
  return rs;
}

GaussianScene two_prims() {
  GaussianScene scene;
  GaussianPrimitive a;
  a.mean = Vec3(0.15, -0.1, 3.0);
  a.orientation = so3_exp(Vec3(0.4, -0.2, 0.6));
  a.log_scale = Vec3(-0.4, -0.9, -0.1);
  a.opacity_raw = 0.8;
  a.color_log = Vec3(0.3, -0.5, 0.1);
  GaussianPrimitive b;
  b.mean = Vec3(-0.3, 0.25, 4.2);
  b.orientation = so3_exp(Vec3(-0.3, 0.5, 0.2));
  b.log_scale = Vec3(-0.2, -0.6, -1.0);
  b.opacity_raw = 0.2;
  b.color_log = Vec3(-0.2, 0.4, -0.8);
  scene.prims = {a, b};
  return scene;
}

// Six knots around identity with gentle per-knot twists; domain [t0+tau,
// t0+4 tau).
SplineTrajectory shake_traj(double scale = 1.0) {
  SplineTrajectory traj;
  traj.t0 = -1.0;
  traj.tau = 1.0;
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Pose p;
  for (int j = 0; j < 6; ++j) {
    traj.knots.push_back(p);
    Twist step;
    step.omega = scale * 0.03 * Vec3(u(rng), u(rng), u(rng));
    step.v = scale * 0.05 * Vec3(u(rng), u(rng), u(rng));
    p = p * se3_exp(step);
  }
  return traj;
}

SplineTrajectory static_traj() {
  SplineTrajectory traj;
  traj.t0 = -1.0;
  traj.tau = 1.0;
  traj.knots.assign(6, Pose());
  return traj;
}

// Gamma-like tone curve fitted once per process.
const ToneMlp& fitted_gamma() {
  static const ToneMlp mlp = [] {
    ToneMlp m;
    std::vector<double> xs, ys;
    for (int i = 0; i < 150; ++i) {
      const double x =
          std::log(1e-4) + (std::log(2.0) - std::log(1e-4)) * i / 149.0;
      xs.push_back(x);
      ys.push_back(std::min(std::exp(x / 2.2), 1.0));
    }
    fit_tone_curve(m, xs, ys);
    return m;
  }();
  return mlp;
}

CrfModel gamma_crf(int n_frames) {
  CrfModel crf;
  for (auto& t : crf.tone) t = fitted_gamma();
  crf.log_wb.assign(n_frames, Vec3::Zero());
  return crf;
}

double weighted_sum(const Image3& img, const Image3& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) s += img.data[i] * w.data[i];
  return s;
}

}  // namespace

TEST_CASE("tone curve zero parameters give a constant half") {
  ToneMlp m;
  for (double x : {-20.0, -3.0, 0.0, 5.0}) CHECK(m.value(x) == 0.5);
}

TEST_CASE("tone curve parameter roundtrip and size check") {
  ToneMlp m;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> p(ToneMlp::kParamCount);
  for (double& v : p) v = u(rng);
  m.set_params(p);
  CHECK(m.params() == p);
  CHECK_THROWS_AS(m.set_params(std::vector<double>(5)), DomainError);
}

TEST_CASE("tone curve derivatives match finite differences") {
  ToneMlp m;
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  std::vector<double> p(ToneMlp::kParamCount);
  for (double& v : p) v = u(rng);
  m.set_params(p);

  for (double x : {-3.0, -0.7, 0.0, 1.3}) {
    double dx = 0.0;
    std::vector<double> dp(ToneMlp::kParamCount, 0.0);
    const double y = m.value_grad(x, &dx, dp.data(), 1.0);
    CHECK(y == m.value(x));
    CHECK(y > 0.0);
    CHECK(y < 1.0);
    const double h = 1e-6;
    const double fd_x = (m.value(x + h) - m.value(x - h)) / (2 * h);
    CHECK(rel_err(fd_x, dx, 1e-9) < 1e-6);
    for (int i = 0; i < ToneMlp::kParamCount; i += 5) {
      ToneMlp mp = m, mm = m;
      mp.data()[i] += h;
      mm.data()[i] -= h;
      const double fd = (mp.value(x) - mm.value(x)) / (2 * h);
      CHECK(rel_err(fd, dp[i], 1e-9) < 1e-5);
    }
  }
}

TEST_CASE("tone curve fit reproduces a gamma 2.2 curve") {
  std::vector<double> xs, ys;
  for (int i = 0; i < 150; ++i) {
    const double x =
        std::log(1e-4) + (std::log(2.0) - std::log(1e-4)) * i / 149.0;
    xs.push_back(x);
    ys.push_back(std::min(std::exp(x / 2.2), 1.0));
  }
  ToneMlp m;
  const double err = fit_tone_curve(m, xs, ys);
  std::printf("gamma fit max error: %.3e\n", err);
  CHECK(err <= 0.01);
  // Monotone over the fitted range.
  double prev = m.value(xs.front());
  for (int i = 1; i < 150; ++i) {
    const double cur = m.value(xs[i]);
    CHECK(cur >= prev - 1e-9);
    prev = cur;
  }
  // Deterministic for a fixed seed.
  ToneMlp m2;
  fit_tone_curve(m2, xs, ys);
  CHECK(m.params() == m2.params());
}

TEST_CASE("apply_crf wires white balance per channel") {
  CrfModel crf = gamma_crf(2);
  crf.log_wb[0] = Vec3(std::log(2.0), std::log(1.0), std::log(0.5));
  Image3 e(1, 1);
  e.data = {0.1, 0.2, 0.3};
  const Image3 out = apply_crf(e, crf, 0, pool());
  // Pre-tone values (0.2, 0.2, 0.15).
  CHECK(out.at(0, 0, 0) == crf.tone[0].value(std::log(2.0 * 0.1)));
  CHECK(out.at(0, 0, 1) == crf.tone[1].value(std::log(1.0 * 0.2)));
  CHECK(out.at(0, 0, 2) == crf.tone[2].value(std::log(0.5 * 0.3)));

  // Zero exposure hits the log floor.
  Image3 z(1, 1);
  const Image3 zout = apply_crf(z, crf, 0, pool());
  for (int c = 0; c < 3; ++c)
    CHECK(zout.data[c] == crf.tone[c].value(std::log(crf.eps_log)));

  // Tied white balance reuses frame 0's gains.
  crf.log_wb[1] = Vec3(0.7, -0.3, 0.4);
  crf.wb_tied = true;
  const Image3 tied = apply_crf(e, crf, 1, pool());
  for (int c = 0; c < 3; ++c) CHECK(tied.data[c] == out.data[c]);

  crf.wb_tied = false;
  CHECK_THROWS_AS(apply_crf(e, crf, 5, pool()), DomainError);
}

TEST_CASE("apply_crf adjoint matches finite differences") {
  CrfModel crf = gamma_crf(1);
  crf.log_wb[0] = Vec3(0.12, -0.08, 0.2);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image3 e(6, 6);
  for (double& v : e.data) v = 2e-3 * std::pow(400.0, u(rng));  // decades
  Image3 up(6, 6);
  std::uniform_real_distribution<double> g(-1.0, 1.0);
  for (double& v : up.data) v = g(rng);

  Image3 d_e(6, 6);
  CrfGrads cg;
  apply_crf_backward(e, crf, 0, up, &d_e, &cg, pool());

  auto loss = [&](const Image3& img, const CrfModel& c) {
    return weighted_sum(apply_crf(img, c, 0, pool()), up);
  };
  const double h = 1e-6;
  for (std::size_t i = 0; i < e.data.size(); i += 7) {
    Image3 ep = e, em = e;
    ep.data[i] += h;
    em.data[i] -= h;
    const double fd = (loss(ep, crf) - loss(em, crf)) / (2 * h);
    CHECK(rel_err(fd, d_e.data[i], 1e-8) < 1e-5);
  }
  for (int c = 0; c < 3; ++c) {
    for (int axis = 0; axis < 3; ++axis) {
      if (axis != c) continue;
      CrfModel cp = crf, cm = crf;
      cp.log_wb[0][axis] += h;
      cm.log_wb[0][axis] -= h;
      const double fd = (loss(e, cp) - loss(e, cm)) / (2 * h);
      CHECK(rel_err(fd, cg.d_log_wb[axis], 1e-8) < 1e-5);
    }
    for (int i = 0; i < ToneMlp::kParamCount; i += 11) {
      CrfModel cp = crf, cm = crf;
      cp.tone[c].data()[i] += h;
      cm.tone[c].data()[i] -= h;
      const double fd = (loss(e, cp) - loss(e, cm)) / (2 * h);
      CHECK(rel_err(fd, cg.d_tone[c][i], 1e-8) < 1e-5);
    }
  }
}

TEST_CASE("synthesize_exposure equals dt times the sharp render when static") {
  const GaussianScene scene = two_prims();
  const SplineTrajectory traj = static_traj();
  const Camera cam = small_cam();
  ImagingConfig cfg;
  cfg.raster = smooth_settings();
  FrameExposure frame{0.4, std::log(0.25)};

  const Image3 sharp = render_hdr(scene, Pose(), cam, cfg.raster, pool());
  cfg.n_virtual = 1;
  const Image3 e1 = synthesize_exposure(scene, traj, cam, frame, 0, cfg, pool());
  for (std::size_t i = 0; i < e1.data.size(); ++i)
    CHECK(e1.data[i] == frame.dt() * sharp.data[i]);

  cfg.n_virtual = 10;
  const Image3 e10 =
      synthesize_exposure(scene, traj, cam, frame, 0, cfg, pool());
  for (std::size_t i = 0; i < e10.data.size(); ++i)
    CHECK(rel_err(e10.data[i], e1.data[i], 1e-12) < 1e-13);
}

TEST_CASE("synthesize_exposure converges with the virtual view count") {
  const GaussianScene scene = two_prims();
  const SplineTrajectory traj = shake_traj(3.0);
  const Camera cam = small_cam();
  ImagingConfig cfg;
  FrameExposure frame{0.3, std::log(0.5)};

  cfg.n_virtual = 1000;
  const Image3 ref = synthesize_exposure(scene, traj, cam, frame, 0, cfg, pool());
  double ref_l1 = 0.0;
  for (double v : ref.data) ref_l1 += std::abs(v);

  auto gap = [&](int n) {
    cfg.n_virtual = n;
    const Image3 e = synthesize_exposure(scene, traj, cam, frame, 0, cfg, pool());
    double d = 0.0;
    for (std::size_t i = 0; i < e.data.size(); ++i)
      d += std::abs(e.data[i] - ref.data[i]);
    return d / ref_l1;
  };
  const double g10 = gap(10);
  const double g40 = gap(40);
  std::printf("virtual-view gap: N=10 %.3e, N=40 %.3e\n", g10, g40);
  CHECK(g10 < 0.02);
  CHECK(g40 < g10);
}

TEST_CASE("synthesize_exposure tags domain errors with the frame") {
  const GaussianScene scene = two_prims();
  const SplineTrajectory traj = static_traj();  // domain [0, 3)
  ImagingConfig cfg;
  FrameExposure frame{2.9, std::log(0.5)};  // samples cross t = 3
  try {
    synthesize_exposure(scene, traj, small_cam(), frame, 7, cfg, pool());
    CHECK(false);
  } catch (const OutOfDomain& err) {
    CHECK(std::string(err.what()).find("frame 7") != std::string::npos);
  }
}

TEST_CASE("radiance and duration trade off through the exposure gauge") {
  const GaussianScene scene = two_prims();
  const Camera cam = small_cam();
  ImagingConfig cfg;
  cfg.raster = smooth_settings();

  GaussianScene scaled = scene;
  for (auto& p : scaled.prims)
    p.color_log += Vec3::Constant(std::log(2.0));
  FrameExposure frame{0.7, std::log(0.3)};
  FrameExposure half{0.7, std::log(0.3) - std::log(2.0)};

  // Static: every sampled pose is unchanged, so the products agree to
  // parameterization rounding.
  const SplineTrajectory st = static_traj();
  cfg.n_virtual = 10;
  const Image3 a = synthesize_exposure(scene, st, cam, frame, 0, cfg, pool());
  const Image3 b = synthesize_exposure(scaled, st, cam, half, 0, cfg, pool());
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(rel_err(a.data[i], b.data[i], 1e-12) < 1e-12);

  // Moving with one left-endpoint sample: the pose is dt-independent.
  const SplineTrajectory mv = shake_traj();
  cfg.n_virtual = 1;
  const Image3 am = synthesize_exposure(scene, mv, cam, frame, 0, cfg, pool());
  const Image3 bm = synthesize_exposure(scaled, mv, cam, half, 0, cfg, pool());
  for (std::size_t i = 0; i < am.data.size(); ++i)
    CHECK(rel_err(am.data[i], bm.data[i], 1e-12) < 1e-12);
}

TEST_CASE("retint matches a one-view static frame and shifts by ln 2") {
  const GaussianScene scene = two_prims();
  const SplineTrajectory traj = static_traj();
  const Camera cam = small_cam();
  ImagingConfig cfg;
  cfg.n_virtual = 1;
  CrfModel crf = gamma_crf(1);
  crf.log_wb[0] = Vec3(0.1, 0.0, -0.1);
  FrameExposure frame{1.2, std::log(0.8)};

  const Image3 formed =
      form_frame(scene, traj, cam, crf, frame, 0, cfg, pool());
  const Image3 hdr = render_hdr(scene, Pose(), cam, cfg.raster, pool());
  const Image3 re = retint(hdr, crf, frame.dt(), 0, pool());
  CHECK(re.data == formed.data);

  // Doubling the duration shifts the tone input by ln 2 where the exposure
  // is far above the log floor.
  const Image3 re2 = retint(hdr, crf, 2.0 * frame.dt(), 0, pool());
  const Vec3 wb = crf.log_wb[0].array().exp();
  int checked = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = wb[c] * hdr.at(x, y, c) * frame.dt();
        if (v < 1e-2) continue;
        const double shifted = crf.tone[c].value(std::log(v) + std::log(2.0));
        CHECK(std::abs(re2.at(x, y, c) - shifted) < 1e-9);
        ++checked;
      }
  CHECK(checked > 20);

  // Mean brightness is non-decreasing in the virtual duration.
  double prev = -1.0;
  for (double dt : {0.01, 0.05, 0.2, 0.8, 3.0}) {
    const double m = image_mean(retint(hdr, crf, dt, 0, pool()));
    CHECK(m >= prev);
    prev = m;
  }
  CHECK_THROWS_AS(retint(hdr, crf, 0.0, 0, pool()), DomainError);
}

TEST_CASE("form_frame composes its two stages exactly") {
  const GaussianScene scene = two_prims();
  const Camera cam = small_cam();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int trial = 0; trial < 3; ++trial) {
    const SplineTrajectory traj = shake_traj(1.0 + trial);
    ImagingConfig cfg;
    cfg.n_virtual = 4;
    CrfModel crf = gamma_crf(2);
    crf.log_wb[1] = Vec3(u(rng), u(rng), u(rng));
    FrameExposure frame{0.5 + 0.3 * trial, std::log(0.2 + 0.1 * trial)};
    const Image3 composed = apply_crf(
        synthesize_exposure(scene, traj, cam, frame, 1, cfg, pool()), crf, 1,
        pool());
    const Image3 formed =
        form_frame(scene, traj, cam, crf, frame, 1, cfg, pool());
    CHECK(formed.data == composed.data);

    const FrameForward fwd =
        form_frame_with_tape(scene, traj, cam, crf, frame, 1, cfg, pool());
    CHECK(fwd.ldr.data == formed.data);
  }
}

TEST_CASE("form_frame of an empty scene is the floor constant") {
  GaussianScene empty;
  const SplineTrajectory traj = static_traj();
  const Camera cam = small_cam();
  ImagingConfig cfg;
  CrfModel crf = gamma_crf(1);
  const Image3 out = form_frame(empty, traj, cam, crf, {1.0, -2.0}, 0, cfg,
                                pool());
  for (int c = 0; c < 3; ++c) {
    const double expect = crf.tone[c].value(std::log(crf.eps_log));
    for (int i = 0; i < cam.width * cam.height; ++i)
      CHECK(out.data[3 * i + c] == expect);
  }
}

TEST_CASE("frame adjoints match finite differences for every group") {
  const GaussianScene scene = two_prims();
  SplineTrajectory traj = shake_traj();
  const Camera cam = small_cam();
  ImagingConfig cfg;
  cfg.n_virtual = 3;
  cfg.raster = smooth_settings();
  CrfModel crf = gamma_crf(1);
  crf.log_wb[0] = Vec3(0.1, -0.05, 0.2);
  const FrameExposure frame{0.8, std::log(0.9)};

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Image3 up(cam.width, cam.height);
  for (double& v : up.data) v = u(rng);

  const FrameForward fwd =
      form_frame_with_tape(scene, traj, cam, crf, frame, 0, cfg, pool());
  ModelGrads grads = make_model_grads(scene, traj);
  form_frame_backward(fwd, scene, cam, crf, frame, 0, cfg, up, &grads, pool());

  auto loss = [&](const GaussianScene& s, const SplineTrajectory& tr,
                  const CrfModel& c, const FrameExposure& f) {
    return weighted_sum(form_frame(s, tr, cam, c, f, 0, cfg, pool()), up);
  };
  const double h = 1e-6;
  // The floor absorbs central-difference rounding noise (~|loss| * 1e-16 / h)
  // on near-zero gradient components.
  auto fd_check = [&](double fd, double an, const char* what) {
    INFO(std::string(what));
    CHECK(rel_err(fd, an, 1e-4) < 5e-5);
  };

  // Primitive parameters.
  for (std::size_t p = 0; p < scene.prims.size(); ++p) {
    for (int a = 0; a < 3; ++a) {
      GaussianScene sp = scene, sm = scene;
      sp.prims[p].mean[a] += h;
      sm.prims[p].mean[a] -= h;
      fd_check((loss(sp, traj, crf, frame) - loss(sm, traj, crf, frame)) /
                   (2 * h),
               grads.prims[p].d_mean[a], "mean");
      sp = scene;
      sm = scene;
      Vec3 axis = Vec3::Zero();
      axis[a] = h;
      sp.prims[p].orientation = scene.prims[p].orientation * so3_exp(axis);
      sm.prims[p].orientation = scene.prims[p].orientation * so3_exp(-axis);
      fd_check((loss(sp, traj, crf, frame) - loss(sm, traj, crf, frame)) /
                   (2 * h),
               grads.prims[p].d_orientation[a], "orientation");
      sp = scene;
      sm = scene;
      sp.prims[p].log_scale[a] += h;
      sm.prims[p].log_scale[a] -= h;
      fd_check((loss(sp, traj, crf, frame) - loss(sm, traj, crf, frame)) /
                   (2 * h),
               grads.prims[p].d_log_scale[a], "log_scale");
      sp = scene;
      sm = scene;
      sp.prims[p].color_log[a] += h;
      sm.prims[p].color_log[a] -= h;
      fd_check((loss(sp, traj, crf, frame) - loss(sm, traj, crf, frame)) /
                   (2 * h),
               grads.prims[p].d_color_log[a], "color_log");
    }
    GaussianScene sp = scene, sm = scene;
    sp.prims[p].opacity_raw += h;
    sm.prims[p].opacity_raw -= h;
    fd_check(
        (loss(sp, traj, crf, frame) - loss(sm, traj, crf, frame)) / (2 * h),
        grads.prims[p].d_opacity_raw, "opacity_raw");
  }

  // Control knots.
  for (std::size_t j = 0; j < traj.knots.size(); ++j)
    for (int a = 0; a < 6; ++a) {
      Vec6 axis = Vec6::Zero();
      axis[a] = h;
      SplineTrajectory tp = traj, tm = traj;
      tp.knots[j] = traj.knots[j] * se3_exp(Twist::from_vec(axis), traj.chart);
      tm.knots[j] = traj.knots[j] * se3_exp(Twist::from_vec(-axis), traj.chart);
      fd_check((loss(scene, tp, crf, frame) - loss(scene, tm, crf, frame)) /
                   (2 * h),
               grads.knots[j][a], "knot");
    }

  // Exposure duration: brightness plus blur-window stretch.
  {
    FrameExposure fp = frame, fm = frame;
    fp.log_dt += h;
    fm.log_dt -= h;
    fd_check((loss(scene, traj, crf, fp) - loss(scene, traj, crf, fm)) /
                 (2 * h),
             grads.log_dt, "log_dt");
  }

  // Tone curves and white balance.
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < ToneMlp::kParamCount; i += 13) {
      CrfModel cp = crf, cm = crf;
      cp.tone[c].data()[i] += h;
      cm.tone[c].data()[i] -= h;
      fd_check((loss(scene, traj, cp, frame) - loss(scene, traj, cm, frame)) /
                   (2 * h),
               grads.tone[c][i], "tone");
    }
    CrfModel cp = crf, cm = crf;
    cp.log_wb[0][c] += h;
    cm.log_wb[0][c] -= h;
    fd_check((loss(scene, traj, cp, frame) - loss(scene, traj, cm, frame)) /
                 (2 * h),
             grads.log_wb[c], "log_wb");
  }
}

TEST_CASE("frame forward is pool-size invariant and backward repeatable") {
  const GaussianScene scene = two_prims();
  const SplineTrajectory traj = shake_traj();
  const Camera cam = small_cam();
  ImagingConfig cfg;
  cfg.n_virtual = 4;
  CrfModel crf = gamma_crf(1);
  const FrameExposure frame{0.8, std::log(0.7)};
  Image3 up(cam.width, cam.height, 0.3);

  ThreadPool p1(1), p3(3);
  const Image3 f1 = form_frame(scene, traj, cam, crf, frame, 0, cfg, p1);
  const Image3 f3 = form_frame(scene, traj, cam, crf, frame, 0, cfg, p3);
  CHECK(f1.data == f3.data);

  auto run_backward = [&](ThreadPool& pl) {
    const FrameForward fwd =
        form_frame_with_tape(scene, traj, cam, crf, frame, 0, cfg, pl);
    ModelGrads g = make_model_grads(scene, traj);
    form_frame_backward(fwd, scene, cam, crf, frame, 0, cfg, up, &g, pl);
    return g;
  };
  const ModelGrads a = run_backward(p3);
  const ModelGrads b = run_backward(p3);
  CHECK(a.log_dt == b.log_dt);
  for (std::size_t j = 0; j < a.knots.size(); ++j)
    CHECK(a.knots[j] == b.knots[j]);
  for (int c = 0; c < 3; ++c) CHECK(a.tone[c] == b.tone[c]);
  CHECK(a.log_wb == b.log_wb);
  for (std::size_t p = 0; p < a.prims.size(); ++p) {
    CHECK(a.prims[p].d_mean == b.prims[p].d_mean);
    CHECK(a.prims[p].d_opacity_raw == b.prims[p].d_opacity_raw);
  }
}

TEST_CASE("crf and exposure serialization roundtrips bitwise") {
  CrfModel crf = gamma_crf(3);
  crf.log_wb[1] = Vec3(0.2, -0.1, 0.05);
  crf.log_wb[2] = Vec3(-0.3, 0.4, 0.0);
  crf.wb_tied = true;
  crf.eps_log = 2e-6;
  ByteWriter w;
  write_crf(w, crf);
  ExposureSchedule sched{{0.1, -2.3}, {0.2, -2.1}, {0.35, -1.9}};
  write_exposures(w, sched);

  ByteReader r(w.buffer());
  const CrfModel back = read_crf(r);
  const ExposureSchedule sback = read_exposures(r);
  CHECK(r.at_end());
  for (int c = 0; c < 3; ++c) CHECK(back.tone[c].params() == crf.tone[c].params());
  CHECK(back.log_wb.size() == crf.log_wb.size());
  for (std::size_t i = 0; i < crf.log_wb.size(); ++i)
    CHECK(back.log_wb[i] == crf.log_wb[i]);
  CHECK(back.wb_tied == crf.wb_tied);
  CHECK(back.eps_log == crf.eps_log);
  CHECK(sback.size() == sched.size());
  for (std::size_t i = 0; i < sched.size(); ++i) {
    CHECK(sback[i].t_open == sched[i].t_open);
    CHECK(sback[i].log_dt == sched[i].log_dt);
  }
}

// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#include "chs/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace chs {

namespace {

// Overflow-safe softplus / sigmoid.
double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Flat parameter layout offsets.
constexpr int kH = ToneMlp::kHidden;
constexpr int kW1 = 0;
constexpr int kB1 = kW1 + kH;
constexpr int kW2 = kB1 + kH;
constexpr int kB2 = kW2 + kH * kH;
constexpr int kW3 = kB2 + kH;
constexpr int kB3 = kW3 + kH;
static_assert(kB3 + 1 == ToneMlp::kParamCount);

}  // namespace

double ToneMlp::value(double x) const {
  const double* p = params_.data();
  double h1[kH], h2[kH];
  for (int i = 0; i < kH; ++i) h1[i] = softplus(p[kW1 + i] * x + p[kB1 + i]);
  for (int i = 0; i < kH; ++i) {
    double s = p[kB2 + i];
    const double* row = p + kW2 + i * kH;
    for (int j = 0; j < kH; ++j) s += row[j] * h1[j];
    h2[i] = softplus(s);
  }
  double z = p[kB3];
  for (int i = 0; i < kH; ++i) z += p[kW3 + i] * h2[i];
  return sigmoid(z);
}

double ToneMlp::value_grad(double x, double* d_x, double* d_params,
                           double g_scale) const {
  const double* p = params_.data();
  double h1p[kH], h1[kH], h2p[kH], h2[kH];
  for (int i = 0; i < kH; ++i) {
    h1p[i] = p[kW1 + i] * x + p[kB1 + i];
    h1[i] = softplus(h1p[i]);
  }
  for (int i = 0; i < kH; ++i) {
    double s = p[kB2 + i];
    const double* row = p + kW2 + i * kH;
    for (int j = 0; j < kH; ++j) s += row[j] * h1[j];
    h2p[i] = s;
    h2[i] = softplus(s);
  }
  double z = p[kB3];
  for (int i = 0; i < kH; ++i) z += p[kW3 + i] * h2[i];
  const double y = sigmoid(z);
  if (d_x == nullptr && d_params == nullptr) return y;

  const double gz = y * (1.0 - y);  // dy/dz
  double g2[kH], gh1[kH];
  for (int i = 0; i < kH; ++i) g2[i] = gz * p[kW3 + i] * sigmoid(h2p[i]);
  for (int j = 0; j < kH; ++j) {
    double s = 0.0;
    for (int i = 0; i < kH; ++i) s += g2[i] * p[kW2 + i * kH + j];
    gh1[j] = s * sigmoid(h1p[j]);  // dy/dh1p[j]
  }
  if (d_x != nullptr) {
    double s = 0.0;
    for (int j = 0; j < kH; ++j) s += gh1[j] * p[kW1 + j];
    *d_x = s;
  }
  if (d_params != nullptr) {
    d_params[kB3] += g_scale * gz;
    for (int i = 0; i < kH; ++i) {
      d_params[kW3 + i] += g_scale * gz * h2[i];
      const double gi = g_scale * g2[i];
      d_params[kB2 + i] += gi;
      double* row = d_params + kW2 + i * kH;
      for (int j = 0; j < kH; ++j) row[j] += gi * h1[j];
    }
    for (int j = 0; j < kH; ++j) {
      const double gj = g_scale * gh1[j];
      d_params[kB1 + j] += gj;
      d_params[kW1 + j] += gj * x;
    }
  }
  return y;
}

void ToneMlp::set_params(const std::vector<double>& p) {
  if (static_cast<int>(p.size()) != kParamCount)
    throw DomainError("tone curve expects " + std::to_string(kParamCount) +
                      " parameters, got " + std::to_string(p.size()));
  std::copy(p.begin(), p.end(), params_.begin());
}

namespace {

// One damped Gauss-Newton (Levenberg-Marquardt) run from a seeded random
// start on standardized inputs. Returns the max abs residual reached.
double tone_lm_run(ToneMlp& mlp, const std::vector<double>& xn,
                   const std::vector<double>& yt, int max_iterations,
                   std::uint64_t seed) {
  const int n = static_cast<int>(xn.size());
  constexpr int np = ToneMlp::kParamCount;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  for (int i = 0; i < np; ++i) mlp.data()[i] = unif(rng);

  Eigen::MatrixXd jac(n, np);
  Eigen::VectorXd res(n);
  std::vector<double> row(np);
  auto residuals = [&](const ToneMlp& m, Eigen::VectorXd& out) {
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      out[i] = m.value(xn[i]) - yt[i];
      ss += out[i] * out[i];
    }
    return ss;
  };
  double ss = residuals(mlp, res);
  double lambda = 1e-3;
  for (int it = 0; it < max_iterations; ++it) {
    if (res.cwiseAbs().maxCoeff() < 1e-3) break;  // well past any use
    for (int i = 0; i < n; ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      mlp.value_grad(xn[i], nullptr, row.data(), 1.0);
      for (int j = 0; j < np; ++j) jac(i, j) = row[j];
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * res;
    Eigen::MatrixXd h = jtj;
    for (int j = 0; j < np; ++j)
      h(j, j) += lambda * std::max(jtj(j, j), 1e-8);
    const Eigen::VectorXd step = h.ldlt().solve(-g);
    ToneMlp trial = mlp;
    for (int j = 0; j < np; ++j) trial.data()[j] += step[j];
    Eigen::VectorXd rt(n);
    const double st = residuals(trial, rt);
    if (st < ss) {
      mlp = trial;
      res.swap(rt);
      ss = st;
      lambda = std::max(lambda / 3.0, 1e-12);
    } else {
      lambda *= 10.0;
      if (lambda > 1e8) break;  // stalled
    }
  }
  return res.cwiseAbs().maxCoeff();
}

}  // namespace

double fit_tone_curve(ToneMlp& mlp, const std::vector<double>& x,
                      const std::vector<double>& y, int max_iterations,
                      std::uint64_t seed) {
  if (x.size() != y.size() || x.size() < 2)
    throw DomainError("tone curve fit needs >= 2 matched samples");
  const int n = static_cast<int>(x.size());

  // Standardize inputs so the optimization is insensitive to the exposure
  // range; the affine map is folded into the first layer afterwards.
  double xm = 0.0;
  for (double v : x) xm += v;
  xm /= n;
  double var = 0.0;
  for (double v : x) var += (v - xm) * (v - xm);
  const double xs = std::max(std::sqrt(var / n), 1e-9);
  std::vector<double> xn(n), yt(n);
  for (int i = 0; i < n; ++i) {
    xn[i] = (x[i] - xm) / xs;
    yt[i] = std::clamp(y[i], 1e-4, 1.0 - 1e-4);  // sigmoid range is open
  }

  // Random starts occasionally land in a poor basin; retry from fresh
  // (deterministic) seeds and keep the best run.
  ToneMlp best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < 3; ++attempt) {
    ToneMlp trial;
    const double err =
        tone_lm_run(trial, xn, yt, max_iterations, seed + 1000003u * attempt);
    if (err < best_err) {
      best_err = err;
      best = trial;
    }
    if (best_err < 5e-3) break;
  }
  mlp = best;

  // Fold x -> (x - xm) / xs into layer 1.
  for (int j = 0; j < kH; ++j) {
    const double w = mlp.data()[kW1 + j];
    mlp.data()[kW1 + j] = w / xs;
    mlp.data()[kB1 + j] -= w * xm / xs;
  }

  double max_err = 0.0;
  for (int i = 0; i < n; ++i)
    max_err = std::max(max_err, std::abs(mlp.value(x[i]) - y[i]));
  return max_err;
}

ToneMlp fit_gamma_tone(double gamma) {
  if (!(gamma > 0.0)) throw DomainError("gamma must be positive");
  std::vector<double> xs, ys;
  for (int i = 0; i < 150; ++i) {
    const double x =
        std::log(1e-4) + (std::log(2.0) - std::log(1e-4)) * i / 149.0;
    xs.push_back(x);
    ys.push_back(std::min(std::exp(x / gamma), 1.0));
  }
  ToneMlp tone;
  fit_tone_curve(tone, xs, ys);
  return tone;
}

// ----------------------------------------------------------------- CRF apply

namespace {

void check_wb(const CrfModel& crf, int frame_index) {
  const int wbi = crf.wb_index(frame_index);
  if (wbi < 0 || wbi >= static_cast<int>(crf.log_wb.size()))
    throw DomainError("white balance index " + std::to_string(wbi) +
                      " outside the schedule (" +
                      std::to_string(crf.log_wb.size()) + " frames)");
}

}  // namespace

Image3 apply_crf(const Image3& exposure, const CrfModel& crf, int frame_index,
                 ThreadPool& pool) {
  check_wb(crf, frame_index);
  const Vec3 wb = crf.log_wb[crf.wb_index(frame_index)].array().exp();
  const double leps = std::log(crf.eps_log);
  Image3 out(exposure.width, exposure.height);
  const std::int64_t npx =
      static_cast<std::int64_t>(exposure.width) * exposure.height;
  pool.run_chunks(npx, [&](int, std::int64_t b, std::int64_t e) {
    for (std::int64_t p = b; p < e; ++p)
      for (int c = 0; c < 3; ++c) {
        const double v = wb[c] * exposure.data[3 * p + c];
        const double xin = v > crf.eps_log ? std::log(v) : leps;
        out.data[3 * p + c] = crf.tone[c].value(xin);
      }
  });
  return out;
}

void apply_crf_backward(const Image3& exposure, const CrfModel& crf,
                        int frame_index, const Image3& d_ldr,
                        Image3* d_exposure, CrfGrads* d_crf, ThreadPool& pool) {
  require_same_shape(exposure, d_ldr, "apply_crf_backward");
  require_same_shape(exposure, *d_exposure, "apply_crf_backward");
  check_wb(crf, frame_index);
  for (auto& t : d_crf->d_tone)
    if (t.empty())
      t.assign(ToneMlp::kParamCount, 0.0);
    else if (t.size() != static_cast<std::size_t>(ToneMlp::kParamCount))
      throw DomainError("tone gradient buffer has the wrong size");

  const Vec3 wb = crf.log_wb[crf.wb_index(frame_index)].array().exp();
  const double leps = std::log(crf.eps_log);
  const std::int64_t npx =
      static_cast<std::int64_t>(exposure.width) * exposure.height;

  struct Partial {
    std::array<std::vector<double>, 3> tone;
    Vec3 log_wb = Vec3::Zero();
  };
  std::vector<Partial> partial(pool.size());
  for (auto& pp : partial)
    for (auto& t : pp.tone) t.assign(ToneMlp::kParamCount, 0.0);

  pool.run_chunks(npx, [&](int chunk, std::int64_t b, std::int64_t e) {
    Partial& pg = partial[chunk];
    for (std::int64_t p = b; p < e; ++p)
      for (int c = 0; c < 3; ++c) {
        const double g = d_ldr.data[3 * p + c];
        if (g == 0.0) continue;
        const double v = wb[c] * exposure.data[3 * p + c];
        const double xin = v > crf.eps_log ? std::log(v) : leps;
        double dx = 0.0;
        crf.tone[c].value_grad(xin, &dx, pg.tone[c].data(), g);
        if (v > crf.eps_log) {
          d_exposure->data[3 * p + c] += g * dx * wb[c] / v;
          pg.log_wb[c] += g * dx;
        }
      }
  });
  for (const Partial& pg : partial) {
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < ToneMlp::kParamCount; ++i)
        d_crf->d_tone[c][i] += pg.tone[c][i];
    d_crf->d_log_wb += pg.log_wb;
  }
}

// ------------------------------------------------------------ blur synthesis

Image3 render_hdr(const GaussianScene& scene, const Pose& cam_to_world,
                  const Camera& cam, const RasterSettings& rs,
                  ThreadPool& pool) {
  return render(scene, cam_to_world.inverse(), cam, rs, pool);
}

namespace {

double virtual_time(const FrameExposure& frame, const ImagingConfig& cfg,
                    double dt, int k) {
  const double off = cfg.midpoint ? 0.5 : 0.0;
  return frame.t_open + dt * ((k + off) / cfg.n_virtual);
}

[[noreturn]] void rethrow_with_frame(const OutOfDomain& err, int frame_index,
                                     double t) {
  throw OutOfDomain("frame " + std::to_string(frame_index) + " (sample t=" +
                    format_g17(t) + "): " + err.what());
}

}  // namespace

Image3 synthesize_exposure(const GaussianScene& scene,
                           const SplineTrajectory& traj, const Camera& cam,
                           const FrameExposure& frame, int frame_index,
                           const ImagingConfig& cfg, ThreadPool& pool) {
  if (cfg.n_virtual < 1) throw DomainError("n_virtual must be >= 1");
  const double dt = frame.dt();
  Image3 sum(cam.width, cam.height);
  for (int k = 0; k < cfg.n_virtual; ++k) {
    const double tk = virtual_time(frame, cfg, dt, k);
    Pose pose;
    try {
      pose = pose_at(traj, tk);
    } catch (const OutOfDomain& err) {
      rethrow_with_frame(err, frame_index, tk);
    }
    const Image3 h = render(scene, pose.inverse(), cam, cfg.raster, pool);
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += h.data[i];
  }
  const double dn = cfg.n_virtual;
  Image3 out(cam.width, cam.height);
  for (std::size_t i = 0; i < sum.data.size(); ++i)
    out.data[i] = dt * (sum.data[i] / dn);
  return out;
}

Image3 form_frame(const GaussianScene& scene, const SplineTrajectory& traj,
                  const Camera& cam, const CrfModel& crf,
                  const FrameExposure& frame, int frame_index,
                  const ImagingConfig& cfg, ThreadPool& pool) {
  return apply_crf(
      synthesize_exposure(scene, traj, cam, frame, frame_index, cfg, pool),
      crf, frame_index, pool);
}

Image3 retint(const Image3& hdr, const CrfModel& crf, double dt_virtual,
              int frame_index, ThreadPool& pool) {
  if (!(dt_virtual > 0.0))
    throw DomainError("retint duration must be positive");
  Image3 e = hdr;
  for (double& v : e.data) v *= dt_virtual;
  return apply_crf(e, crf, frame_index, pool);
}

// ------------------------------------------------------ differentiable path

ModelGrads make_model_grads(const GaussianScene& scene,
                            const SplineTrajectory& traj) {
  ModelGrads g;
  g.prims.assign(scene.prims.size(), PrimitiveGrad{});
  g.knots.assign(traj.knots.size(), Vec6::Zero());
  for (auto& t : g.tone) t.assign(ToneMlp::kParamCount, 0.0);
  return g;
}

FrameForward form_frame_with_tape(const GaussianScene& scene,
                                  const SplineTrajectory& traj,
                                  const Camera& cam, const CrfModel& crf,
                                  const FrameExposure& frame, int frame_index,
                                  const ImagingConfig& cfg, ThreadPool& pool) {
  if (cfg.n_virtual < 1) throw DomainError("n_virtual must be >= 1");
  const double dt = frame.dt();
  FrameForward fwd;
  Image3 sum(cam.width, cam.height);
  for (int k = 0; k < cfg.n_virtual; ++k) {
    VirtualView vv;
    vv.t = virtual_time(frame, cfg, dt, k);
    try {
      vv.point = pose_with_jacobians(traj, vv.t);
      vv.velocity = body_velocity_at(traj, vv.t);
    } catch (const OutOfDomain& err) {
      rethrow_with_frame(err, frame_index, vv.t);
    }
    vv.view = vv.point.pose.inverse();
    vv.hdr = render_with_tape(scene, vv.view, cam, cfg.raster, pool, &vv.tape);
    for (std::size_t i = 0; i < sum.data.size(); ++i)
      sum.data[i] += vv.hdr.data[i];
    fwd.views.push_back(std::move(vv));
  }
  const double dn = cfg.n_virtual;
  fwd.hdr_mean = Image3(cam.width, cam.height);
  fwd.exposure = Image3(cam.width, cam.height);
  for (std::size_t i = 0; i < sum.data.size(); ++i) {
    fwd.hdr_mean.data[i] = sum.data[i] / dn;
    fwd.exposure.data[i] = dt * fwd.hdr_mean.data[i];
  }
  fwd.ldr = apply_crf(fwd.exposure, crf, frame_index, pool);
  return fwd;
}

namespace {

void accumulate(PrimitiveGrad& dst, const PrimitiveGrad& src) {
  dst.d_mean += src.d_mean;
  dst.d_orientation += src.d_orientation;
  dst.d_log_scale += src.d_log_scale;
  dst.d_opacity_raw += src.d_opacity_raw;
  dst.d_color_log += src.d_color_log;
}

}  // namespace

void form_frame_backward(const FrameForward& fwd, const GaussianScene& scene,
                         const Camera& cam, const CrfModel& crf,
                         const FrameExposure& frame, int frame_index,
                         const ImagingConfig& cfg, const Image3& d_ldr,
                         ModelGrads* grads, ThreadPool& pool) {
  const int n = static_cast<int>(fwd.views.size());
  if (n < 1) throw DomainError("frame forward record holds no views");
  if (grads->prims.size() != scene.prims.size())
    throw DomainError("gradient buffer does not match the scene");
  const double dt = frame.dt();
  const double off = cfg.midpoint ? 0.5 : 0.0;

  Image3 d_exposure(fwd.exposure.width, fwd.exposure.height);
  CrfGrads cg;
  apply_crf_backward(fwd.exposure, crf, frame_index, d_ldr, &d_exposure, &cg,
                     pool);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < ToneMlp::kParamCount; ++i)
      grads->tone[c][i] += cg.d_tone[c][i];
  grads->log_wb += cg.d_log_wb;

  // d(exposure)/d(dt) splits into the explicit brightness factor and the
  // stretch of the sampled timestamps t_k = t_open + dt*(k+off)/n.
  double d_dt = 0.0;
  for (std::size_t i = 0; i < d_exposure.data.size(); ++i)
    d_dt += d_exposure.data[i] * fwd.hdr_mean.data[i];

  Image3 g_h = d_exposure;
  const double w = dt / n;
  for (double& v : g_h.data) v *= w;

  for (int k = 0; k < n; ++k) {
    const VirtualView& vv = fwd.views[k];
    const RenderBackward rb =
        render_backward(scene, vv.view, cam, cfg.raster, vv.tape, g_h, pool);
    for (std::size_t p = 0; p < rb.prims.size(); ++p)
      accumulate(grads->prims[p], rb.prims[p]);
    // view = pose^-1, so a right increment on the camera-to-world pose is
    // a right increment -Ad(pose) e on the view transform.
    const Vec6 g_pose = -(adjoint(vv.point.pose).transpose() * rb.d_view);
    for (int j = 0; j < 4; ++j)
      grads->knots[vv.point.first_knot + j] +=
          vv.point.knot_jacobian[j].transpose() * g_pose;
    d_dt += g_pose.dot(vv.velocity.vec()) * ((k + off) / n);
  }
  grads->log_dt += dt * d_dt;
}

// ------------------------------------------------------------ serialization

void write_tone_mlp(ByteWriter& w, const ToneMlp& m) { w.f64_vec(m.params()); }

ToneMlp read_tone_mlp(ByteReader& r) {
  ToneMlp m;
  m.set_params(r.f64_vec());
  return m;
}

void write_crf(ByteWriter& w, const CrfModel& crf) {
  for (const ToneMlp& t : crf.tone) write_tone_mlp(w, t);
  w.u64(crf.log_wb.size());
  for (const Vec3& g : crf.log_wb)
    for (int c = 0; c < 3; ++c) w.f64(g[c]);
  w.u8(crf.wb_tied ? 1 : 0);
  w.f64(crf.eps_log);
}

CrfModel read_crf(ByteReader& r) {
  CrfModel crf;
  for (ToneMlp& t : crf.tone) t = read_tone_mlp(r);
  crf.log_wb.resize(r.u64());
  for (Vec3& g : crf.log_wb)
    for (int c = 0; c < 3; ++c) g[c] = r.f64();
  crf.wb_tied = r.u8() != 0;
  crf.eps_log = r.f64();
  return crf;
}

void write_exposures(ByteWriter& w, const ExposureSchedule& s) {
  w.u64(s.size());
  for (const FrameExposure& f : s) {
    w.f64(f.t_open);
    w.f64(f.log_dt);
  }
}

ExposureSchedule read_exposures(ByteReader& r) {
  ExposureSchedule s(r.u64());
  for (FrameExposure& f : s) {
    f.t_open = r.f64();
    f.log_dt = r.f64();
  }
  return s;
}

}  // namespace chs

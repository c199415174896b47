// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop implementation. Determinism contract: with a fixed dataset,
// config, and thread count, every update is bit-reproducible; checkpoints
// capture the full state (parameters, Adam moments, RNG, epoch schedule) so
// a restored run continues exactly where the original would have gone.
#include "chs/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "chs/errors.hpp"
#include "chs/io.hpp"
#include "chs/metrics.hpp"

namespace chs {

namespace fs = std::filesystem;

namespace {

std::string frame_name(int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.%s", index, ext);
  return buf;
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw IoError("invalid serialized RNG state");
  return rng;
}

}  // namespace

// ------------------------------------------------------------------ dataset

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file(dir / "meta.json"));
    const auto& cam = meta.at("camera");
    ds.camera.fx = cam.at("fx").get<double>();
    ds.camera.fy = cam.at("fy").get<double>();
    ds.camera.cx = cam.at("cx").get<double>();
    ds.camera.cy = cam.at("cy").get<double>();
    ds.camera.width = cam.at("width").get<int>();
    ds.camera.height = cam.at("height").get<int>();
    ds.scene_scale = meta.value("scene_scale", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("meta.json: " + std::string(e.what()));
  }
  if (ds.camera.width <= 0 || ds.camera.height <= 0 || ds.camera.fx <= 0.0 ||
      ds.camera.fy <= 0.0)
    throw IoError("meta.json: invalid camera intrinsics");

  const auto rows = read_csv(dir / "exposures.csv", "index,t_b,dt");
  for (const auto& row : rows) {
    if (row.size() != 3) throw IoError("exposures.csv: expected 3 columns");
    if (!(row[2] > 0.0)) throw IoError("exposures.csv: non-positive duration");
    ds.exposures.push_back(FrameExposure{row[1], std::log(row[2])});
  }

  const int n = static_cast<int>(ds.exposures.size());
  for (int i = 0; i < n; ++i) {
    Image3 img = read_png(dir / "frames" / frame_name(i, "png"));
    if (img.width != ds.camera.width || img.height != ds.camera.height)
      throw IoError("frame " + std::to_string(i) +
                    " does not match the camera size");
    ds.frames.push_back(std::move(img));
  }

  ds.poses_noisy = load_timed_poses(dir / "poses_noisy.txt");

  if (fs::exists(dir / "points3d.txt"))
    ds.points = load_points3d(dir / "points3d.txt");
  if (fs::exists(dir / "sharp_ldr"))
    for (int i = 0; i < n; ++i)
      ds.sharp_ldr.push_back(read_png(dir / "sharp_ldr" / frame_name(i, "png")));

  return ds;
}

// ------------------------------------------------------------------- init

namespace {

void validate_config(const TrainingConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (cfg.iterations < 0) fail("iterations must be >= 0");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) fail("beta1 must be in [0, 1)");
  if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) fail("beta2 must be in [0, 1)");
  if (!(cfg.adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(cfg.clip_norm >= 0.0)) fail("clip_norm must be >= 0");
  if (cfg.prune_interval < 0) fail("prune_interval must be >= 0");
  if (!(cfg.prune_opacity >= 0.0 && cfg.prune_opacity < 1.0))
    fail("prune_opacity must be in [0, 1)");
  if (cfg.metrics_interval < 1) fail("metrics_interval must be >= 1");
  if (cfg.n_virtual < 1) fail("n_virtual must be >= 1");
  if (!(cfg.knots_per_pose > 0.0)) fail("knots_per_pose must be positive");
  if (!(cfg.init_gamma > 0.0)) fail("init_gamma must be positive");
  if (!(cfg.init_fit_threshold > 0.0)) fail("init_fit_threshold must be positive");
  if (!(cfg.dt_init_lo > 0.0 && cfg.dt_init_hi >= cfg.dt_init_lo))
    fail("shutter init range must satisfy 0 < lo <= hi");
  if (!(cfg.dt_clamp_lo > 0.0 && cfg.dt_clamp_hi >= cfg.dt_clamp_lo))
    fail("shutter clamp range must satisfy 0 < lo <= hi");
  if (cfg.n_random_points < 1) fail("n_random_points must be >= 1");
  const double lrs[] = {cfg.lr_mean,   cfg.lr_log_scale, cfg.lr_orientation,
                        cfg.lr_opacity, cfg.lr_color,    cfg.lr_knots,
                        cfg.lr_log_dt, cfg.lr_tone,      cfg.lr_wb};
  for (double lr : lrs)
    if (!(lr >= 0.0)) fail("learning rates must be >= 0");
  if (!(cfg.mean_lr_decay > 0.0 && cfg.mean_lr_decay <= 1.0))
    fail("mean_lr_decay must be in (0, 1]");
}

// Half the median gap between consecutive frame opens: a scale-free nominal
// shutter duration used for the random init range and structural bounds.
double nominal_shutter(const ExposureSchedule& exposures) {
  if (exposures.size() < 2) return exposures.front().dt();
  std::vector<double> gaps;
  for (std::size_t i = 1; i < exposures.size(); ++i)
    gaps.push_back(exposures[i].t_open - exposures[i - 1].t_open);
  std::sort(gaps.begin(), gaps.end());
  return 0.5 * gaps[gaps.size() / 2];
}

void zero_slot(AdamSlot& slot, std::size_t n) {
  slot.m.assign(n, 0.0);
  slot.v.assign(n, 0.0);
}

}  // namespace

TrainingState init_state(const Dataset& dataset, const TrainingConfig& cfg) {
  validate_config(cfg);
  const int n_frames = static_cast<int>(dataset.frames.size());
  if (n_frames == 0) throw ConfigError("dataset has no frames");
  if (dataset.exposures.size() != dataset.frames.size())
    throw ConfigError("frame/exposure count mismatch");
  if (dataset.poses_noisy.size() < 2)
    throw ConfigError("need at least 2 initialization poses");

  TrainingState st;
  st.camera = dataset.camera;
  std::mt19937_64 master(cfg.seed);
  const std::uint64_t scene_seed = master();
  const std::uint64_t exposure_seed = master();
  const std::uint64_t shuffle_seed = master();

  // Shutter durations: structural bounds around the nominal guess, then
  // either the dataset schedule or a log-uniform draw per frame.
  const double guess = nominal_shutter(dataset.exposures);
  if (!(guess > 0.0)) throw ConfigError("frame times are not increasing");
  st.log_dt_lo = std::log(cfg.dt_clamp_lo * guess);
  st.log_dt_hi = std::log(cfg.dt_clamp_hi * guess);
  st.exposures = dataset.exposures;
  if (cfg.exposure_init == ExposureInit::random) {
    std::mt19937_64 rng(exposure_seed);
    std::uniform_real_distribution<double> u(std::log(cfg.dt_init_lo),
                                             std::log(cfg.dt_init_hi));
    for (auto& f : st.exposures)
      f.log_dt =
          std::clamp(std::log(guess) + u(rng), st.log_dt_lo, st.log_dt_hi);
  }

  // Trajectory: spline fitted to the provided poses, with enough margin for
  // every exposure window at the largest admissible duration.
  const double t_first = dataset.poses_noisy.front().first;
  const double t_last = dataset.poses_noisy.back().first;
  const double dt_cap = std::exp(st.log_dt_hi);
  double margin = 0.0;
  for (const auto& f : dataset.exposures) {
    margin = std::max(margin, t_first - f.t_open);
    margin = std::max(margin, f.t_open + dt_cap - t_last);
  }
  margin += 0.5 * guess;
  const FitResult fit = fit_knots(dataset.poses_noisy, cfg.knots_per_pose,
                                  Se3Chart::coupled, margin);
  st.trajectory = fit.trajectory;
  st.init_fit_rms = fit.rms_residual;
  if (!(st.init_fit_rms <= cfg.init_fit_threshold))
    throw ConfigError("trajectory fit RMS " + format_g17(st.init_fit_rms) +
                      " exceeds threshold " +
                      format_g17(cfg.init_fit_threshold));
  const auto dom = st.trajectory.domain();
  for (const auto& f : dataset.exposures)
    if (f.t_open < dom.first || f.t_open + dt_cap >= dom.second)
      throw ConfigError("exposure window escapes the trajectory domain");

  // Camera response: gamma-law tone curves, identity white balance.
  const ToneMlp tone = fit_gamma_tone(cfg.init_gamma);
  for (auto& t : st.crf.tone) t = tone;
  st.crf.log_wb.assign(static_cast<std::size_t>(n_frames), Vec3::Zero());
  st.crf.wb_tied = false;

  // Scene: one isotropic primitive per seed point, sized by the nearest
  // neighbour; without seed points, random points in the first camera's
  // frustum at mid depths.
  {
    std::mt19937_64 rng(scene_seed);
    std::vector<SeedPoint> pts = dataset.points;
    if (pts.empty()) {
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      const Pose& cam0 = dataset.poses_noisy.front().second;
      const Camera& cam = dataset.camera;
      for (int i = 0; i < cfg.n_random_points; ++i) {
        const double z = 1.5 + 2.5 * u01(rng);
        const double px = (u01(rng) * cam.width - cam.cx) / cam.fx * z;
        const double py = (u01(rng) * cam.height - cam.cy) / cam.fy * z;
        SeedPoint p;
        p.position = cam0 * Vec3(px, py, z);
        p.radiance = Vec3::Constant(0.3);
        pts.push_back(p);
      }
    }
    Vec3 lo = pts.front().position, hi = pts.front().position;
    for (const auto& p : pts) {
      lo = lo.cwiseMin(p.position);
      hi = hi.cwiseMax(p.position);
    }
    const double extent = std::max((hi - lo).norm(), 1e-6);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double nn = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < pts.size(); ++j)
        if (j != i)
          nn = std::min(nn, (pts[j].position - pts[i].position).norm());
      if (!std::isfinite(nn)) nn = 0.1 * extent;
      const double sigma = std::clamp(nn, 0.01 * extent, 0.2 * extent);
      GaussianPrimitive prim;
      prim.mean = pts[i].position;
      prim.log_scale = Vec3::Constant(std::log(sigma));
      prim.opacity_raw = 0.0;
      for (int a = 0; a < 3; ++a)
        prim.color_log[a] = std::log(std::max(pts[i].radiance[a], 1e-6));
      st.scene.prims.push_back(prim);
    }
  }

  const std::size_t n_prims = st.scene.prims.size();
  const std::size_t n_knots = st.trajectory.knots.size();
  zero_slot(st.m_mean, 3 * n_prims);
  zero_slot(st.m_orientation, 3 * n_prims);
  zero_slot(st.m_log_scale, 3 * n_prims);
  zero_slot(st.m_opacity, n_prims);
  zero_slot(st.m_color, 3 * n_prims);
  zero_slot(st.m_knots, 6 * n_knots);
  zero_slot(st.m_log_dt, static_cast<std::size_t>(n_frames));
  for (auto& slot : st.m_tone) zero_slot(slot, ToneMlp::kParamCount);
  zero_slot(st.m_wb, 3 * static_cast<std::size_t>(n_frames));

  st.epoch_order.resize(static_cast<std::size_t>(n_frames));
  std::iota(st.epoch_order.begin(), st.epoch_order.end(), 0u);
  st.epoch_pos = 0;
  st.rng_state = rng_to_string(std::mt19937_64(shuffle_seed));
  return st;
}

// ------------------------------------------------------------------- step

namespace {

struct AdamCtx {
  double beta1, beta2, bias1, bias2, eps;
};

// Standard Adam with bias correction; returns the parameter delta.
double adam_update(AdamSlot& slot, std::size_t i, double g, double lr,
                   const AdamCtx& ctx) {
  slot.m[i] = ctx.beta1 * slot.m[i] + (1.0 - ctx.beta1) * g;
  slot.v[i] = ctx.beta2 * slot.v[i] + (1.0 - ctx.beta2) * (g * g);
  return -lr * (slot.m[i] / ctx.bias1) /
         (std::sqrt(slot.v[i] / ctx.bias2) + ctx.eps);
}

}  // namespace

TotalLoss step(TrainingState& state, const Dataset& dataset,
               const TrainingConfig& cfg, int frame_index, ThreadPool& pool) {
  const int n_frames = static_cast<int>(dataset.frames.size());
  if (frame_index < 0 || frame_index >= n_frames)
    throw DomainError("frame index " + std::to_string(frame_index) +
                      " outside the dataset");

  ImagingConfig icfg;
  icfg.n_virtual = cfg.blur_model ? cfg.n_virtual : 1;

  const FrameExposure fe = state.exposures[static_cast<std::size_t>(frame_index)];
  const FrameForward fwd =
      form_frame_with_tape(state.scene, state.trajectory, dataset.camera,
                           state.crf, fe, frame_index, icfg, pool);

  Image3 d_ldr(dataset.camera.width, dataset.camera.height, 0.0);
  const TotalLoss losses = total_loss(
      fwd.ldr, dataset.frames[static_cast<std::size_t>(frame_index)], cfg.loss,
      &d_ldr);
  if (!std::isfinite(losses.total))
    throw NonFiniteLoss("frame " + std::to_string(frame_index) +
                        ": non-finite loss");

  ModelGrads grads = make_model_grads(state.scene, state.trajectory);
  form_frame_backward(fwd, state.scene, dataset.camera, state.crf, fe,
                      frame_index, icfg, d_ldr, &grads, pool);

  // Groups that update this step: scene subgroups gate on their rate alone,
  // the others also honour the ablation toggles.
  const bool do_mean = cfg.lr_mean > 0.0;
  const bool do_orientation = cfg.lr_orientation > 0.0;
  const bool do_scale = cfg.lr_log_scale > 0.0;
  const bool do_opacity = cfg.lr_opacity > 0.0;
  const bool do_color = cfg.lr_color > 0.0;
  const bool do_knots = cfg.optimize_trajectory && cfg.lr_knots > 0.0;
  const bool do_dt = cfg.optimize_exposure && cfg.lr_log_dt > 0.0;
  const bool do_tone = cfg.optimize_crf && cfg.lr_tone > 0.0;
  const bool do_wb = cfg.optimize_crf && cfg.lr_wb > 0.0;

  // Global norm over the enabled groups only.
  double norm2 = 0.0;
  for (const auto& g : grads.prims) {
    if (do_mean) norm2 += g.d_mean.squaredNorm();
    if (do_orientation) norm2 += g.d_orientation.squaredNorm();
    if (do_scale) norm2 += g.d_log_scale.squaredNorm();
    if (do_opacity) norm2 += g.d_opacity_raw * g.d_opacity_raw;
    if (do_color) norm2 += g.d_color_log.squaredNorm();
  }
  if (do_knots)
    for (const auto& g : grads.knots) norm2 += g.squaredNorm();
  if (do_dt) norm2 += grads.log_dt * grads.log_dt;
  if (do_tone)
    for (const auto& channel : grads.tone)
      for (double g : channel) norm2 += g * g;
  if (do_wb) norm2 += grads.log_wb.squaredNorm();
  const double norm = std::sqrt(norm2);
  if (!std::isfinite(norm))
    throw NonFiniteLoss("frame " + std::to_string(frame_index) +
                        ": non-finite gradient");
  const double clip =
      (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm
                                                    : 1.0;

  const long long t = state.iteration + 1;
  const AdamCtx ctx{cfg.beta1, cfg.beta2,
                    1.0 - std::pow(cfg.beta1, static_cast<double>(t)),
                    1.0 - std::pow(cfg.beta2, static_cast<double>(t)),
                    cfg.adam_eps};
  const double progress =
      cfg.iterations > 1
          ? std::min(1.0, static_cast<double>(state.iteration) /
                              static_cast<double>(cfg.iterations - 1))
          : 0.0;
  const double lr_mean_now = cfg.lr_mean * std::pow(cfg.mean_lr_decay, progress);

  for (std::size_t i = 0; i < state.scene.prims.size(); ++i) {
    GaussianPrimitive& p = state.scene.prims[i];
    const PrimitiveGrad& g = grads.prims[i];
    if (do_mean)
      for (int a = 0; a < 3; ++a)
        p.mean[a] += adam_update(state.m_mean, 3 * i + a, g.d_mean[a] * clip,
                                 lr_mean_now, ctx);
    if (do_orientation) {
      Vec3 u;
      for (int a = 0; a < 3; ++a)
        u[a] = adam_update(state.m_orientation, 3 * i + a,
                           g.d_orientation[a] * clip, cfg.lr_orientation, ctx);
      p.orientation = p.orientation * so3_exp(u);
    }
    if (do_scale)
      for (int a = 0; a < 3; ++a)
        p.log_scale[a] +=
            adam_update(state.m_log_scale, 3 * i + a, g.d_log_scale[a] * clip,
                        cfg.lr_log_scale, ctx);
    if (do_opacity)
      p.opacity_raw += adam_update(state.m_opacity, i, g.d_opacity_raw * clip,
                                   cfg.lr_opacity, ctx);
    if (do_color)
      for (int a = 0; a < 3; ++a)
        p.color_log[a] += adam_update(state.m_color, 3 * i + a,
                                      g.d_color_log[a] * clip, cfg.lr_color,
                                      ctx);
  }

  if (do_knots)
    for (std::size_t j = 0; j < state.trajectory.knots.size(); ++j) {
      Vec6 u;
      for (int a = 0; a < 6; ++a)
        u[a] = adam_update(state.m_knots, 6 * j + a, grads.knots[j][a] * clip,
                           cfg.lr_knots, ctx);
      state.trajectory.knots[j] =
          state.trajectory.knots[j] *
          se3_exp(Twist::from_vec(u), state.trajectory.chart);
    }

  if (do_dt) {
    FrameExposure& f = state.exposures[static_cast<std::size_t>(frame_index)];
    f.log_dt += adam_update(state.m_log_dt,
                            static_cast<std::size_t>(frame_index),
                            grads.log_dt * clip, cfg.lr_log_dt, ctx);
    f.log_dt = std::clamp(f.log_dt, state.log_dt_lo, state.log_dt_hi);
  }

  if (do_tone)
    for (int c = 0; c < 3; ++c) {
      std::vector<double> params = state.crf.tone[c].params();
      for (std::size_t k = 0; k < params.size(); ++k)
        params[k] += adam_update(state.m_tone[static_cast<std::size_t>(c)], k,
                                 grads.tone[static_cast<std::size_t>(c)][k] *
                                     clip,
                                 cfg.lr_tone, ctx);
      state.crf.tone[c].set_params(params);
    }

  if (do_wb) {
    const int wbi = state.crf.wb_index(frame_index);
    for (int a = 0; a < 3; ++a)
      state.crf.log_wb[static_cast<std::size_t>(wbi)][a] +=
          adam_update(state.m_wb, 3 * static_cast<std::size_t>(wbi) + a,
                      grads.log_wb[a] * clip, cfg.lr_wb, ctx);
  }

  // Per-frame white balance and exposure share a luminance degree of
  // freedom: scaling the gains and dividing the exposure time leaves the
  // tonemapped brightness unchanged, so brightness alone cannot assign
  // scale to either. Re-anchor after each update by moving the common
  // (mean-log) component of this frame's gains into its exposure time;
  // the gains keep only chroma and the data can then pin the exposure.
  if (do_dt && do_wb && !state.crf.wb_tied) {
    Vec3& wb = state.crf.log_wb[static_cast<std::size_t>(
        state.crf.wb_index(frame_index))];
    const double common = (wb[0] + wb[1] + wb[2]) / 3.0;
    if (common != 0.0) {
      wb[0] -= common;
      wb[1] -= common;
      wb[2] -= common;
      FrameExposure& f =
          state.exposures[static_cast<std::size_t>(frame_index)];
      f.log_dt = std::clamp(f.log_dt + common, state.log_dt_lo,
                            state.log_dt_hi);
    }
  }

  state.iteration += 1;
  return losses;
}

// ------------------------------------------------------------------- prune

void prune(TrainingState& state, const TrainingConfig& cfg) {
  const std::size_t n = state.scene.prims.size();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (state.scene.prims[i].opacity() >= cfg.prune_opacity) keep.push_back(i);
  if (keep.size() == n) return;

  std::vector<GaussianPrimitive> prims;
  prims.reserve(keep.size());
  for (std::size_t i : keep) prims.push_back(state.scene.prims[i]);
  state.scene.prims = std::move(prims);

  auto compact = [&keep](AdamSlot& slot, std::size_t width) {
    std::vector<double> m, v;
    m.reserve(keep.size() * width);
    v.reserve(keep.size() * width);
    for (std::size_t i : keep)
      for (std::size_t a = 0; a < width; ++a) {
        m.push_back(slot.m[i * width + a]);
        v.push_back(slot.v[i * width + a]);
      }
    slot.m = std::move(m);
    slot.v = std::move(v);
  };
  compact(state.m_mean, 3);
  compact(state.m_orientation, 3);
  compact(state.m_log_scale, 3);
  compact(state.m_opacity, 1);
  compact(state.m_color, 3);
}

// ------------------------------------------------------------------- train

TrainingState train_from(TrainingState state, const Dataset& dataset,
                         const TrainingConfig& cfg, ThreadPool& pool,
                         const fs::path& metrics_path,
                         long long stop_iteration) {
  validate_config(cfg);
  const int n_frames = static_cast<int>(dataset.frames.size());
  if (n_frames == 0) throw ConfigError("dataset has no frames");
  if (state.epoch_order.size() != dataset.frames.size())
    throw ConfigError("state and dataset disagree on the frame count");
  const long long stop =
      stop_iteration >= 0
          ? std::min<long long>(stop_iteration, cfg.iterations)
          : cfg.iterations;

  std::mt19937_64 rng = rng_from_string(state.rng_state);

  std::ofstream metrics;
  if (!metrics_path.empty()) {
    metrics.open(metrics_path,
                 state.iteration == 0 ? std::ios::trunc : std::ios::app);
    if (!metrics)
      throw IoError("cannot open metrics file " + metrics_path.string());
    if (state.iteration == 0) {
      nlohmann::json j;
      j["iteration"] = 0;
      j["fit_rms"] = state.init_fit_rms;
      metrics << j.dump() << '\n';
    }
  }

  double acc_total = 0.0, acc_rec = 0.0, acc_exp = 0.0;
  long long acc_n = 0;

  while (state.iteration < stop) {
    if (state.epoch_pos == 0)
      std::shuffle(state.epoch_order.begin(), state.epoch_order.end(), rng);
    const int frame = static_cast<int>(state.epoch_order[state.epoch_pos]);
    const TotalLoss losses = step(state, dataset, cfg, frame, pool);
    state.epoch_pos = (state.epoch_pos + 1) %
                      static_cast<std::uint64_t>(n_frames);
    acc_total += losses.total;
    acc_rec += losses.reconstruction;
    acc_exp += losses.exposure;
    ++acc_n;

    if (cfg.prune_interval > 0 && state.iteration % cfg.prune_interval == 0 &&
        state.iteration < cfg.iterations)
      prune(state, cfg);

    const bool at_interval = state.iteration % cfg.metrics_interval == 0;
    if ((at_interval || state.iteration == stop) && metrics.is_open() &&
        acc_n > 0) {
      nlohmann::json j;
      j["iteration"] = state.iteration;
      j["loss"] = acc_total / static_cast<double>(acc_n);
      j["loss_reconstruction"] = acc_rec / static_cast<double>(acc_n);
      j["loss_exposure"] = acc_exp / static_cast<double>(acc_n);
      j["n_prims"] = state.scene.prims.size();
      std::vector<double> dts;
      for (const auto& f : state.exposures) dts.push_back(f.dt());
      j["dt"] = dts;
      if (!dataset.sharp_ldr.empty()) {
        const auto [p, s] = evaluate_sharp(state, dataset, pool);
        j["psnr_sharp"] = p;
        j["ssim_sharp"] = s;
      }
      metrics << j.dump() << '\n';
      acc_total = acc_rec = acc_exp = 0.0;
      acc_n = 0;
    }
  }

  state.rng_state = rng_to_string(rng);
  return state;
}

TrainingState train(const Dataset& dataset, const TrainingConfig& cfg,
                    ThreadPool& pool, const fs::path& metrics_path) {
  return train_from(init_state(dataset, cfg), dataset, cfg, pool,
                    metrics_path);
}

// ------------------------------------------------------------------- eval

std::pair<double, double> evaluate_sharp(const TrainingState& state,
                                         const Dataset& dataset,
                                         ThreadPool& pool) {
  if (dataset.sharp_ldr.empty())
    throw DegenerateInput("dataset has no sharp references");
  if (dataset.sharp_ldr.size() != state.exposures.size())
    throw DegenerateInput("sharp reference count mismatch");
  const RasterSettings rs;
  double sum_psnr = 0.0, sum_ssim = 0.0;
  for (std::size_t i = 0; i < state.exposures.size(); ++i) {
    const double dt = state.exposures[i].dt();
    const double t_mid = state.exposures[i].t_open + 0.5 * dt;
    const Pose pose = pose_at(state.trajectory, t_mid);
    const Image3 hdr = render_hdr(state.scene, pose, dataset.camera, rs, pool);
    const Image3 ldr =
        retint(hdr, state.crf, dt, static_cast<int>(i), pool);
    sum_psnr += psnr(ldr, dataset.sharp_ldr[i]);
    sum_ssim += ssim(ldr, dataset.sharp_ldr[i]);
  }
  const double n = static_cast<double>(state.exposures.size());
  return {sum_psnr / n, sum_ssim / n};
}

// ------------------------------------------------------------- checkpoints

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_pose(ByteWriter& w, const Pose& p) {
  const Eigen::Quaterniond& q = p.rotation.quat();
  w.f64(q.w());
  w.f64(q.x());
  w.f64(q.y());
  w.f64(q.z());
  for (int a = 0; a < 3; ++a) w.f64(p.translation[a]);
}

Pose read_pose(ByteReader& r) {
  const double qw = r.f64(), qx = r.f64(), qy = r.f64(), qz = r.f64();
  Vec3 t;
  for (int a = 0; a < 3; ++a) t[a] = r.f64();
  return Pose(Rotation::from_quaternion(qw, qx, qy, qz), t);
}

void write_slot(ByteWriter& w, const AdamSlot& slot) {
  w.f64_vec(slot.m);
  w.f64_vec(slot.v);
}

AdamSlot read_slot(ByteReader& r) {
  AdamSlot slot;
  slot.m = r.f64_vec();
  slot.v = r.f64_vec();
  return slot;
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainingState& state) {
  ChunkFileWriter file(kCheckpointVersion);

  ByteWriter meta;
  meta.i64(state.iteration);
  meta.str(state.rng_state);
  meta.u64(state.epoch_pos);
  meta.u64(state.epoch_order.size());
  for (std::uint32_t v : state.epoch_order) meta.u32(v);
  meta.f64(state.log_dt_lo);
  meta.f64(state.log_dt_hi);
  meta.f64(state.init_fit_rms);
  file.add("meta", meta);

  ByteWriter scene;
  scene.u64(state.scene.prims.size());
  for (const auto& p : state.scene.prims) {
    for (int a = 0; a < 3; ++a) scene.f64(p.mean[a]);
    const Eigen::Quaterniond& q = p.orientation.quat();
    scene.f64(q.w());
    scene.f64(q.x());
    scene.f64(q.y());
    scene.f64(q.z());
    for (int a = 0; a < 3; ++a) scene.f64(p.log_scale[a]);
    scene.f64(p.opacity_raw);
    for (int a = 0; a < 3; ++a) scene.f64(p.color_log[a]);
  }
  file.add("scene", scene);

  ByteWriter traj;
  traj.f64(state.trajectory.t0);
  traj.f64(state.trajectory.tau);
  traj.u8(state.trajectory.chart == Se3Chart::coupled ? 0 : 1);
  traj.u64(state.trajectory.knots.size());
  for (const auto& k : state.trajectory.knots) write_pose(traj, k);
  file.add("trajectory", traj);

  ByteWriter camera;
  camera.f64(state.camera.fx);
  camera.f64(state.camera.fy);
  camera.f64(state.camera.cx);
  camera.f64(state.camera.cy);
  camera.u32(static_cast<std::uint32_t>(state.camera.width));
  camera.u32(static_cast<std::uint32_t>(state.camera.height));
  file.add("camera", camera);

  ByteWriter crf;
  write_crf(crf, state.crf);
  file.add("crf", crf);

  ByteWriter exposures;
  write_exposures(exposures, state.exposures);
  file.add("exposures", exposures);

  ByteWriter adam;
  write_slot(adam, state.m_mean);
  write_slot(adam, state.m_orientation);
  write_slot(adam, state.m_log_scale);
  write_slot(adam, state.m_opacity);
  write_slot(adam, state.m_color);
  write_slot(adam, state.m_knots);
  write_slot(adam, state.m_log_dt);
  for (const auto& slot : state.m_tone) write_slot(adam, slot);
  write_slot(adam, state.m_wb);
  file.add("adam", adam);

  file.save(path);
}

TrainingState load_checkpoint(const fs::path& path) {
  ChunkFileReader file(path);
  if (file.version() != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " +
                  std::to_string(file.version()));
  TrainingState st;

  ByteReader meta(file.payload("meta"));
  st.iteration = meta.i64();
  st.rng_state = meta.str();
  st.epoch_pos = meta.u64();
  st.epoch_order.resize(meta.u64());
  for (auto& v : st.epoch_order) v = meta.u32();
  st.log_dt_lo = meta.f64();
  st.log_dt_hi = meta.f64();
  st.init_fit_rms = meta.f64();

  ByteReader scene(file.payload("scene"));
  st.scene.prims.resize(scene.u64());
  for (auto& p : st.scene.prims) {
    for (int a = 0; a < 3; ++a) p.mean[a] = scene.f64();
    const double qw = scene.f64(), qx = scene.f64(), qy = scene.f64(),
                 qz = scene.f64();
    p.orientation = Rotation::from_quaternion(qw, qx, qy, qz);
    for (int a = 0; a < 3; ++a) p.log_scale[a] = scene.f64();
    p.opacity_raw = scene.f64();
    for (int a = 0; a < 3; ++a) p.color_log[a] = scene.f64();
  }

  ByteReader traj(file.payload("trajectory"));
  st.trajectory.t0 = traj.f64();
  st.trajectory.tau = traj.f64();
  st.trajectory.chart = traj.u8() == 0 ? Se3Chart::coupled : Se3Chart::decoupled;
  st.trajectory.knots.resize(traj.u64());
  for (auto& k : st.trajectory.knots) k = read_pose(traj);

  ByteReader camera(file.payload("camera"));
  st.camera.fx = camera.f64();
  st.camera.fy = camera.f64();
  st.camera.cx = camera.f64();
  st.camera.cy = camera.f64();
  st.camera.width = static_cast<int>(camera.u32());
  st.camera.height = static_cast<int>(camera.u32());

  ByteReader crf(file.payload("crf"));
  st.crf = read_crf(crf);

  ByteReader exposures(file.payload("exposures"));
  st.exposures = read_exposures(exposures);

  ByteReader adam(file.payload("adam"));
  st.m_mean = read_slot(adam);
  st.m_orientation = read_slot(adam);
  st.m_log_scale = read_slot(adam);
  st.m_opacity = read_slot(adam);
  st.m_color = read_slot(adam);
  st.m_knots = read_slot(adam);
  st.m_log_dt = read_slot(adam);
  for (auto& slot : st.m_tone) slot = read_slot(adam);
  st.m_wb = read_slot(adam);
  if (!adam.at_end()) throw IoError("trailing bytes in checkpoint");

  return st;
}

}  // namespace chs

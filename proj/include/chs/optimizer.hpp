// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Joint training loop: Adam over five parameter groups (Gaussian primitives,
// trajectory control poses, per-frame log shutter durations, tone networks,
// per-frame white balance), one frame per step in shuffled epochs, with
// global-norm gradient clipping, optional opacity pruning, JSON-lines
// metrics, and bit-reproducible checkpoints.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "chs/datagen.hpp"
#include "chs/imaging.hpp"
#include "chs/losses.hpp"
#include "chs/scene.hpp"
#include "chs/threading.hpp"
#include "chs/trajectory.hpp"

namespace chs {

// ------------------------------------------------------------------ dataset

struct Dataset {
  Camera camera;
  std::vector<Image3> frames;    // observed LDR frames
  ExposureSchedule exposures;    // reference schedule from exposures.csv
  std::vector<std::pair<double, Pose>> poses_noisy;
  std::vector<SeedPoint> points;     // may be empty
  std::vector<Image3> sharp_ldr;     // zero-blur references when available
  double scene_scale = 0.0;
};

// Reads camera intrinsics from meta.json, frames listed by exposures.csv,
// initialization poses and seed points, and sharp_ldr references when the
// directory provides them. Throws IoError on malformed inputs.
Dataset load_dataset(const std::filesystem::path& dir);

// ------------------------------------------------------------ configuration

// How per-frame shutter durations start: drawn log-uniformly around the
// nominal guess, or copied from the dataset schedule.
enum class ExposureInit { random, gt };

struct TrainingConfig {
  int iterations = 4000;

  // Per-group learning rates. The primitive-position rate decays
  // exponentially to mean_lr_decay of its initial value over the run.
  double lr_mean = 1.6e-4;
  double lr_log_scale = 5e-3;
  double lr_orientation = 1e-3;
  double lr_opacity = 5e-2;
  double lr_color = 2.5e-3;
  double lr_knots = 1e-3;
  double lr_log_dt = 1e-3;
  double lr_tone = 1e-3;
  double lr_wb = 1e-3;
  double mean_lr_decay = 0.01;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-15;
  double clip_norm = 10.0;  // global gradient norm across enabled groups

  int prune_interval = 500;      // 0 disables opacity pruning
  double prune_opacity = 0.005;  // prune primitives below this opacity
  int metrics_interval = 100;

  // Ablation toggles. Disabled groups keep their initial parameters
  // bit-unchanged; blur_model = false forces one virtual shutter sample.
  bool optimize_exposure = true;
  bool optimize_crf = true;
  bool optimize_trajectory = true;
  bool blur_model = true;
  int n_virtual = 10;

  // Initialization.
  ExposureInit exposure_init = ExposureInit::random;
  double knots_per_pose = 3.0;     // control poses per initialization pose
  double init_gamma = 2.0;         // starting tone-curve exponent
  double init_fit_threshold = 0.5; // max RMS of the trajectory fit
  double dt_init_lo = 0.3;   // random shutter init, x the nominal guess
  double dt_init_hi = 3.0;
  double dt_clamp_lo = 0.05; // structural shutter bounds, x the guess
  double dt_clamp_hi = 5.0;
  int n_random_points = 60;  // fallback when the dataset has no seed points

  LossWeights loss;
  std::uint64_t seed = 1;
};

// ------------------------------------------------------------------- state

struct AdamSlot {
  std::vector<double> m, v;
};

struct TrainingState {
  GaussianScene scene;
  SplineTrajectory trajectory;
  CrfModel crf;
  ExposureSchedule exposures;  // t_open fixed; log_dt learned
  Camera camera;               // copied from the dataset; checkpoints are
                               // self-contained for rendering
  long long iteration = 0;

  AdamSlot m_mean, m_orientation, m_log_scale, m_opacity, m_color;
  AdamSlot m_knots;                  // 6 per control pose
  AdamSlot m_log_dt;                 // 1 per frame
  std::array<AdamSlot, 3> m_tone;    // tone parameters per channel
  AdamSlot m_wb;                     // 3 per frame

  std::string rng_state;             // serialized mt19937_64
  std::vector<std::uint32_t> epoch_order;
  std::uint64_t epoch_pos = 0;

  double log_dt_lo = 0.0, log_dt_hi = 0.0;  // structural shutter bounds
  double init_fit_rms = 0.0;                // trajectory fit residual
};

// Builds the starting state: trajectory fitted to the provided poses with a
// margin covering every possible exposure window, primitives from the seed
// points (or random in front of the cameras), tone curves pre-fitted to the
// init_gamma law, white balance at identity, and shutter durations copied
// from the dataset (gt mode) or drawn log-uniformly around the nominal
// guess of half the median frame spacing (optimize_exposure mode).
// Throws ConfigError when the fit fails its threshold or a frame's exposure
// window cannot fit inside the trajectory domain.
TrainingState init_state(const Dataset& dataset, const TrainingConfig& cfg);

// One Adam update from a single frame. Returns the loss breakdown for the
// frame. Throws NonFiniteLoss (with the frame index) on non-finite values.
TotalLoss step(TrainingState& state, const Dataset& dataset,
               const TrainingConfig& cfg, int frame_index, ThreadPool& pool);

// Removes primitives whose opacity is below cfg.prune_opacity, dropping
// their Adam moments with them. Called by train_from every prune_interval
// iterations.
void prune(TrainingState& state, const TrainingConfig& cfg);

// Runs shuffled-epoch training from `state` until cfg.iterations (or
// stop_iteration when 0 <= stop_iteration < cfg.iterations, e.g. to pause
// for a checkpoint), appending JSON-lines metrics (every metrics_interval
// iterations and at the end) to `metrics_path` unless it is empty. Returns
// the final state.
TrainingState train_from(TrainingState state, const Dataset& dataset,
                         const TrainingConfig& cfg, ThreadPool& pool,
                         const std::filesystem::path& metrics_path = {},
                         long long stop_iteration = -1);

// init_state + train_from.
TrainingState train(const Dataset& dataset, const TrainingConfig& cfg,
                    ThreadPool& pool,
                    const std::filesystem::path& metrics_path = {});

// Mean PSNR / SSIM of the model's zero-blur renders (current trajectory,
// shutter, and tone model at each frame's mid-exposure time) against the
// dataset's sharp_ldr references. Requires those references.
std::pair<double, double> evaluate_sharp(const TrainingState& state,
                                         const Dataset& dataset,
                                         ThreadPool& pool);

// Bit-reproducible checkpoint: restoring and continuing training matches an
// uninterrupted run exactly (same config, dataset, and thread count).
void save_checkpoint(const std::filesystem::path& path,
                     const TrainingState& state);
TrainingState load_checkpoint(const std::filesystem::path& path);

}  // namespace chs

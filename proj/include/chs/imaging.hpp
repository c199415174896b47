// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Physical image formation: exposure-window blur synthesis along the camera
// trajectory followed by a learned camera response. One recorded frame is
//   exposure = dt * mean_k H(pose(t_k)),   t_k = t_open + dt * (k + off) / N
//   ldr(c)   = tone_c( ln(max(wb_c * exposure_c, eps_log)) )
// with H a sharp HDR radiance render, dt = exp(log_dt) the shutter time,
// wb per-frame white-balance gains, and tone_c a per-channel MLP curve.
// Every stage has an adjoint; gradients reach the scene, the trajectory
// knots, log_dt, the tone curves, and the white balance.
//
// The global radiometric gauge is visible here: scaling all radiance by a
// constant and all durations by its inverse leaves every exposure image
// unchanged (exactly so for a static pose; the sampled timestamps shift
// otherwise).
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "chs/io.hpp"
#include "chs/scene.hpp"
#include "chs/trajectory.hpp"

namespace chs {

// One frame's shutter interval [t_open, t_open + exp(log_dt)]. Durations are
// stored in log space so positivity is structural under additive updates.
struct FrameExposure {
  double t_open = 0.0;
  double log_dt = 0.0;
  double dt() const { return std::exp(log_dt); }
};

using ExposureSchedule = std::vector<FrameExposure>;

// Per-channel tone curve: scalar log-exposure -> (0,1). Two softplus hidden
// layers of 16 units and a sigmoid output. Parameters are stored flat in the
// order w1[16], b1[16], w2[16x16 row-major], b2[16], w3[16], b3.
class ToneMlp {
public:
  static constexpr int kHidden = 16;
  static constexpr int kParamCount =
      kHidden + kHidden + kHidden * kHidden + kHidden + kHidden + 1;  // 321

  ToneMlp() { params_.fill(0.0); }  // constant 0.5 curve

  double value(double x) const;

  // value(x) plus derivatives: writes d(value)/dx to *d_x when given, and
  // accumulates g_scale * d(value)/d(param_i) into d_params[i] when given.
  double value_grad(double x, double* d_x, double* d_params = nullptr,
                    double g_scale = 1.0) const;

  std::vector<double> params() const {
    return {params_.begin(), params_.end()};
  }
  // Throws DomainError on a size mismatch.
  void set_params(const std::vector<double>& p);

  double* data() { return params_.data(); }
  const double* data() const { return params_.data(); }

private:
  std::array<double, kParamCount> params_;
};

// Least-squares fit of a tone curve to samples (x = log exposure, y target
// in (0,1)) by damped Gauss-Newton with a few deterministic restarts.
// Inputs are standardized internally and the affine transform is folded
// back into the first layer, so the fitted network consumes raw
// log-exposure. Targets are clamped away from {0,1}. Returns the max abs
// error over the samples after fitting.
double fit_tone_curve(ToneMlp& mlp, const std::vector<double>& x,
                      const std::vector<double>& y, int max_iterations = 150,
                      std::uint64_t seed = 1);

// Tone curve fitted to the clipped gamma law min(exp(x / gamma), 1) over
// 150 log-exposure samples in [ln 1e-4, ln 2]. Deterministic in gamma.
ToneMlp fit_gamma_tone(double gamma);

// Camera response: per-channel tone curves plus per-frame white balance.
struct CrfModel {
  std::array<ToneMlp, 3> tone;  // r, g, b
  std::vector<Vec3> log_wb;     // one log-gain triplet per frame
  bool wb_tied = false;         // every frame uses log_wb[0]
  double eps_log = 1e-6;        // exposure floor inside the logarithm

  int wb_index(int frame_index) const { return wb_tied ? 0 : frame_index; }
};

struct ImagingConfig {
  int n_virtual = 10;     // sharp views averaged across one exposure
  bool midpoint = false;  // sample subinterval midpoints, not left endpoints
  RasterSettings raster;
};

// Sharp HDR radiance render at a camera-to-world pose.
Image3 render_hdr(const GaussianScene& scene, const Pose& cam_to_world,
                  const Camera& cam, const RasterSettings& rs,
                  ThreadPool& pool);

// Exposure image dt * mean_k H(pose(t_k)). Trajectory domain violations
// surface as OutOfDomain tagged with frame_index.
Image3 synthesize_exposure(const GaussianScene& scene,
                           const SplineTrajectory& traj, const Camera& cam,
                           const FrameExposure& frame, int frame_index,
                           const ImagingConfig& cfg, ThreadPool& pool);

// LDR frame from an exposure image: out_c = tone_c(ln(max(wb_c*e, eps))).
Image3 apply_crf(const Image3& exposure, const CrfModel& crf, int frame_index,
                 ThreadPool& pool);

struct CrfGrads {
  std::array<std::vector<double>, 3> d_tone;  // kParamCount each
  Vec3 d_log_wb = Vec3::Zero();               // for the frame's wb slot
};

// Pulls dL/dldr back through apply_crf: adds into *d_exposure (same shape,
// zero-init by caller) and into d_crf.
void apply_crf_backward(const Image3& exposure, const CrfModel& crf,
                        int frame_index, const Image3& d_ldr,
                        Image3* d_exposure, CrfGrads* d_crf, ThreadPool& pool);

// Full formation: apply_crf(synthesize_exposure(...)).
Image3 form_frame(const GaussianScene& scene, const SplineTrajectory& traj,
                  const Camera& cam, const CrfModel& crf,
                  const FrameExposure& frame, int frame_index,
                  const ImagingConfig& cfg, ThreadPool& pool);

// Re-exposes a sharp HDR radiance image at a chosen duration and tone-maps
// it with the given frame's white balance: ldr of (hdr * dt_virtual).
Image3 retint(const Image3& hdr, const CrfModel& crf, double dt_virtual,
              int frame_index, ThreadPool& pool);

// ------------------------------------------------------ differentiable path

// Everything recorded during one frame's forward pass that the backward
// pass replays.
struct VirtualView {
  double t = 0.0;    // sample timestamp inside the shutter interval
  SplinePoint point; // camera-to-world pose and its knot Jacobians at t
  Pose view;         // point.pose.inverse(), as used by the rasterizer
  Twist velocity;    // body velocity at t
  Image3 hdr;        // sharp radiance render
  RenderTape tape;
};

struct FrameForward {
  std::vector<VirtualView> views;
  Image3 hdr_mean;  // mean of views[.].hdr
  Image3 exposure;  // dt * hdr_mean
  Image3 ldr;
};

// Gradients for every model parameter group touched by one frame.
struct ModelGrads {
  std::vector<PrimitiveGrad> prims;          // per scene primitive
  std::vector<Vec6> knots;                   // per trajectory control pose
  double log_dt = 0.0;                       // this frame's duration
  std::array<std::vector<double>, 3> tone;   // per-channel curve parameters
  Vec3 log_wb = Vec3::Zero();                // this frame's wb slot
};

// Zero gradients shaped for the given scene and trajectory.
ModelGrads make_model_grads(const GaussianScene& scene,
                            const SplineTrajectory& traj);

FrameForward form_frame_with_tape(const GaussianScene& scene,
                                  const SplineTrajectory& traj,
                                  const Camera& cam, const CrfModel& crf,
                                  const FrameExposure& frame, int frame_index,
                                  const ImagingConfig& cfg, ThreadPool& pool);

// Accumulates d(sum d_ldr . ldr)/d(params) into *grads. The duration
// gradient carries both the brightness term (exposure scales with dt) and
// the blur-window term (the sampled timestamps stretch with dt).
void form_frame_backward(const FrameForward& fwd, const GaussianScene& scene,
                         const Camera& cam, const CrfModel& crf,
                         const FrameExposure& frame, int frame_index,
                         const ImagingConfig& cfg, const Image3& d_ldr,
                         ModelGrads* grads, ThreadPool& pool);

// ------------------------------------------------------------ serialization

void write_tone_mlp(ByteWriter& w, const ToneMlp& m);
ToneMlp read_tone_mlp(ByteReader& r);
void write_crf(ByteWriter& w, const CrfModel& crf);
CrfModel read_crf(ByteReader& r);
void write_exposures(ByteWriter& w, const ExposureSchedule& s);
ExposureSchedule read_exposures(ByteReader& r);

}  // namespace chs

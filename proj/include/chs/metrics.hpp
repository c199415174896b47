// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics: image quality (PSNR/SSIM), absolute trajectory error
// after similarity alignment, rank agreement between exposure sequences,
// and tone-curve distance after removing the exposure-scale gauge.
#pragma once

#include <array>
#include <utility>
#include <vector>

#include "chs/image.hpp"
#include "chs/imaging.hpp"
#include "chs/lie.hpp"

namespace chs {

// Peak signal-to-noise ratio in dB over [0,1] images (peak = 1); +infinity
// when the images are identical.
double psnr(const Image3& a, const Image3& b);

// Mean SSIM; the same evaluator the training loss uses.
double ssim(const Image3& a, const Image3& b);

struct AteReport {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> residuals;      // per matched frame
  Mat4 alignment = Mat4::Identity();  // similarity: estimated -> reference
  double scale = 1.0;                 // scale factor inside `alignment`
  int matched = 0;
};

// Absolute trajectory error between camera-to-world pose tracks: positions
// are matched by nearest timestamp (within half the median reference
// spacing), aligned by the closed-form similarity fit, and the residual
// norms are reported. Monocular reconstruction carries a global similarity
// gauge, so alignment includes scale. Throws InsufficientOverlap when fewer
// than 3 pairs match.
AteReport ate(const std::vector<std::pair<double, Pose>>& estimated,
              const std::vector<std::pair<double, Pose>>& reference);

struct CorrelationReport {
  double pearson_log = 0.0;  // primary: the exposure gauge is multiplicative
  double pearson_linear = 0.0;
  double spearman = 0.0;       // average ranks for ties
  double kendall_tau_b = 0.0;  // tie-corrected
};
// Any statistic is NaN when its input is degenerate (constant sequence).

// Agreement between two positive sequences (e.g. estimated vs. true shutter
// durations). Throws DegenerateInput on size mismatch or < 2 entries,
// DomainError on non-positive values.
CorrelationReport exposure_correlation(const std::vector<double>& estimated,
                                       const std::vector<double>& gt);

// Mean absolute gap between the model's tone curves and reference samples
// (log_exposure with per-channel target values), averaged over channels.
// Before comparing, each channel's curve is shifted along the log-exposure
// axis so its mean value matches the reference mean: a per-channel input
// shift is exactly the white-balance/exposure-scale gauge the data cannot
// pin down.
double crf_curve_error(const CrfModel& crf,
                       const std::vector<double>& log_exposure,
                       const std::array<std::vector<double>, 3>& target);

}  // namespace chs

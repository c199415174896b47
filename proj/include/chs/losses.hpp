// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training losses. Reconstruction mixes mean absolute error with structural
// dissimilarity,
//   L_rec = (1 - lambda) * L1 + lambda * D-SSIM,   D-SSIM = (1 - SSIM)/2,
// and the exposure term applies the same L1 + D-SSIM pair to mean-normalized
// copies of both images, which makes it invariant to global intensity scale:
//   L_total = L_rec + lambda_exposure * L_exp.
// SSIM uses an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
// per-channel maps averaged over pixels and channels, and symmetric
// (edge-repeating) reflection at borders.
#pragma once

#include "chs/image.hpp"

namespace chs {

struct LossWeights {
  double lambda_dssim = 0.2;     // blend inside the reconstruction term
  double lambda_exposure = 0.25; // weight of the exposure term
};

// Mean absolute difference. When d_a is given, adds g_scale * dL/da into it
// (d_a must already be shaped like a; sign(0) contributes 0).
double l1_loss(const Image3& a, const Image3& b, Image3* d_a = nullptr,
               double g_scale = 1.0);

// Mean SSIM over pixels and channels; optionally accumulates
// g_scale * d(mean SSIM)/da into d_a. Needs min(width, height) >= 6.
double ssim_mean(const Image3& a, const Image3& b, Image3* d_a = nullptr,
                 double g_scale = 1.0);

inline double d_ssim(const Image3& a, const Image3& b, Image3* d_a = nullptr,
                     double g_scale = 1.0) {
  // d(D-SSIM)/da = -1/2 d(SSIM)/da.
  return 0.5 * (1.0 - ssim_mean(a, b, d_a, -0.5 * g_scale));
}

// (1 - lambda) * L1 + lambda * D-SSIM with gradients into d_a.
double reconstruction_loss(const Image3& a, const Image3& b,
                           const LossWeights& w, Image3* d_a = nullptr,
                           double g_scale = 1.0);

// L1 + D-SSIM on mean-normalized images (a / mean(a) vs b / mean(b)).
// Throws DegenerateInput when either mean is too close to zero.
double exposure_loss(const Image3& a, const Image3& b, Image3* d_a = nullptr,
                     double g_scale = 1.0);

struct TotalLoss {
  double total = 0.0;
  double reconstruction = 0.0;
  double exposure = 0.0;
};

// Full objective with gradients w.r.t. the rendered image.
TotalLoss total_loss(const Image3& rendered, const Image3& observed,
                     const LossWeights& w, Image3* d_rendered = nullptr);

}  // namespace chs

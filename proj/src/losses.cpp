// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#include "chs/losses.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace chs {

namespace {

constexpr int kWin = 11;
constexpr int kRad = kWin / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin>& gaussian_window() {
  static const std::array<double, kWin> w = [] {
    std::array<double, kWin> k{};
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
      const double d = i - kRad;
      k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return w;
}

// Symmetric (edge-repeating) reflection: ... 2 1 0 | 0 1 2 ... n-1 | n-1 ...
inline int reflect(int i, int n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - 1 - i;
  return i;
}

using Plane = std::vector<double>;  // row-major w*h scalars

// Separable windowed blur with reflection.
Plane blur(const Plane& in, int w, int h) {
  const auto& k = gaussian_window();
  Plane tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int t = -kRad; t <= kRad; ++t)
        s += k[t + kRad] * in[y * w + reflect(x + t, w)];
      tmp[y * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int t = -kRad; t <= kRad; ++t)
        s += k[t + kRad] * tmp[reflect(y + t, h) * w + x];
      out[y * w + x] = s;
    }
  return out;
}

// Exact adjoint of blur(): scatter with the same reflection map, passes in
// reverse order (vertical first, then horizontal).
Plane blur_adjoint(const Plane& g, int w, int h) {
  const auto& k = gaussian_window();
  Plane tmp(g.size(), 0.0), out(g.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = g[y * w + x];
      if (v == 0.0) continue;
      for (int t = -kRad; t <= kRad; ++t)
        tmp[reflect(y + t, h) * w + x] += k[t + kRad] * v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = tmp[y * w + x];
      if (v == 0.0) continue;
      for (int t = -kRad; t <= kRad; ++t)
        out[y * w + reflect(x + t, w)] += k[t + kRad] * v;
    }
  return out;
}

Plane channel_plane(const Image3& img, int c) {
  Plane p(static_cast<std::size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) p[y * img.width + x] = img.at(x, y, c);
  return p;
}

}  // namespace

double l1_loss(const Image3& a, const Image3& b, Image3* d_a, double g_scale) {
  require_same_shape(a, b, "l1_loss");
  const double inv_n = 1.0 / static_cast<double>(a.data.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sum += std::abs(d);
    if (d_a && d != 0.0)
      d_a->data[i] += g_scale * (d > 0.0 ? inv_n : -inv_n);
  }
  return sum * inv_n;
}

double ssim_mean(const Image3& a, const Image3& b, Image3* d_a,
                 double g_scale) {
  require_same_shape(a, b, "ssim_mean");
  const int w = a.width, h = a.height;
  if (w < kRad + 1 || h < kRad + 1)
    throw DomainError("ssim_mean: image too small for the 11x11 window");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const double count = 3.0 * static_cast<double>(n);
  const double inv_count = 1.0 / count;

  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const Plane x = channel_plane(a, c);
    const Plane y = channel_plane(b, c);
    Plane xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const Plane mx = blur(x, w, h);
    const Plane my = blur(y, w, h);
    const Plane sxx = blur(xx, w, h);
    const Plane syy = blur(yy, w, h);
    const Plane sxy = blur(xy, w, h);

    Plane g_mx, g_sxx, g_sxy;
    if (d_a) {
      g_mx.assign(n, 0.0);
      g_sxx.assign(n, 0.0);
      g_sxy.assign(n, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double mux = mx[i], muy = my[i];
      const double vx = sxx[i] - mux * mux;
      const double vy = syy[i] - muy * muy;
      const double cov = sxy[i] - mux * muy;
      const double a1 = 2.0 * mux * muy + kC1;
      const double a2 = 2.0 * cov + kC2;
      const double b1 = mux * mux + muy * muy + kC1;
      const double b2 = vx + vy + kC2;
      const double denom = b1 * b2;
      const double s = (a1 * a2) / denom;
      total += s;
      if (d_a) {
        const double g = g_scale * inv_count;
        const double d_a1 = g * a2 / denom;
        const double d_a2 = g * a1 / denom;
        const double d_b1 = -g * s / b1;
        const double d_b2 = -g * s / b2;
        // Variance/covariance entries split into raw moments and means.
        const double d_vx = d_b2;
        const double d_cov = 2.0 * d_a2;
        g_sxx[i] = d_vx;
        g_sxy[i] = d_cov;
        g_mx[i] = 2.0 * muy * d_a1 + 2.0 * mux * d_b1  // a1, b1 direct
                  - 2.0 * mux * d_vx                   // vx = sxx - mux^2
                  - muy * d_cov;                       // cov = sxy - mux muy
      }
    }
    if (d_a) {
      const Plane ga_mx = blur_adjoint(g_mx, w, h);
      const Plane ga_sxx = blur_adjoint(g_sxx, w, h);
      const Plane ga_sxy = blur_adjoint(g_sxy, w, h);
      for (int yy_i = 0; yy_i < h; ++yy_i)
        for (int xx_i = 0; xx_i < w; ++xx_i) {
          const std::size_t i = static_cast<std::size_t>(yy_i) * w + xx_i;
          d_a->at(xx_i, yy_i, c) +=
              ga_mx[i] + 2.0 * x[i] * ga_sxx[i] + y[i] * ga_sxy[i];
        }
    }
  }
  // total / count (not total * inv_count): keeps ssim(a, a) == 1.0 exactly.
  return total / count;
}

double reconstruction_loss(const Image3& a, const Image3& b,
                           const LossWeights& w, Image3* d_a, double g_scale) {
  const double l1 = l1_loss(a, b, d_a, g_scale * (1.0 - w.lambda_dssim));
  const double ds = d_ssim(a, b, d_a, g_scale * w.lambda_dssim);
  return (1.0 - w.lambda_dssim) * l1 + w.lambda_dssim * ds;
}

double exposure_loss(const Image3& a, const Image3& b, Image3* d_a,
                     double g_scale) {
  require_same_shape(a, b, "exposure_loss");
  const double ma = image_mean(a);
  const double mb = image_mean(b);
  if (!(std::abs(ma) > 1e-12) || !(std::abs(mb) > 1e-12))
    throw DegenerateInput("exposure_loss: image mean is ~0");
  Image3 an(a.width, a.height), bn(b.width, b.height);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    an.data[i] = a.data[i] / ma;
    bn.data[i] = b.data[i] / mb;
  }
  Image3 d_an;
  Image3* d_an_ptr = nullptr;
  if (d_a) {
    d_an = Image3(a.width, a.height);
    d_an_ptr = &d_an;
  }
  const double l1 = l1_loss(an, bn, d_an_ptr, g_scale);
  const double ds = d_ssim(an, bn, d_an_ptr, g_scale);
  if (d_a) {
    // a_n = a / mean(a): quotient rule with the shared scalar mean.
    double dot = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
      dot += d_an.data[i] * a.data[i];
    const double shift = dot / (static_cast<double>(a.data.size()) * ma * ma);
    for (std::size_t i = 0; i < a.data.size(); ++i)
      d_a->data[i] += d_an.data[i] / ma - shift;
  }
  return l1 + ds;
}

TotalLoss total_loss(const Image3& rendered, const Image3& observed,
                     const LossWeights& w, Image3* d_rendered) {
  TotalLoss out;
  out.reconstruction = reconstruction_loss(rendered, observed, w, d_rendered);
  out.exposure =
      exposure_loss(rendered, observed, d_rendered, w.lambda_exposure);
  out.total = out.reconstruction + w.lambda_exposure * out.exposure;
  return out;
}

}  // namespace chs

// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0

#include "chs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "chs/errors.hpp"
#include "chs/losses.hpp"

namespace chs {

// ---------------------------------------------------------------------------
// Image quality
// ---------------------------------------------------------------------------

double psnr(const Image3& a, const Image3& b) {
  require_same_shape(a, b, "psnr");
  const std::size_t n = a.data.size();
  if (n == 0) throw DegenerateInput("psnr: empty image");
  double se = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(n);
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image3& a, const Image3& b) { return ssim_mean(a, b); }

// ---------------------------------------------------------------------------
// Absolute trajectory error
// ---------------------------------------------------------------------------

AteReport ate(const std::vector<std::pair<double, Pose>>& estimated,
              const std::vector<std::pair<double, Pose>>& reference) {
  if (reference.size() < 2)
    throw InsufficientOverlap("ate: reference track needs at least 2 poses");

  // Matching tolerance: half the median spacing of the reference timestamps.
  std::vector<double> ref_times(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i)
    ref_times[i] = reference[i].first;
  std::vector<double> sorted_times = ref_times;
  std::sort(sorted_times.begin(), sorted_times.end());
  std::vector<double> gaps(sorted_times.size() - 1);
  for (std::size_t i = 0; i + 1 < sorted_times.size(); ++i)
    gaps[i] = sorted_times[i + 1] - sorted_times[i];
  std::sort(gaps.begin(), gaps.end());
  const double tolerance = 0.5 * gaps[gaps.size() / 2];

  // Nearest-timestamp pairing (camera positions; poses are camera-to-world,
  // so the position is the translation component).
  std::vector<Vec3> src;  // estimated
  std::vector<Vec3> dst;  // reference
  for (const auto& [t, pose] : estimated) {
    std::size_t best = 0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < reference.size(); ++j) {
      const double gap = std::abs(ref_times[j] - t);
      if (gap < best_gap) {
        best_gap = gap;
        best = j;
      }
    }
    if (best_gap <= tolerance) {
      src.push_back(pose.translation);
      dst.push_back(reference[best].second.translation);
    }
  }
  const int matched = static_cast<int>(src.size());
  if (matched < 3)
    throw InsufficientOverlap("ate: only " + std::to_string(matched) +
                              " matched pose pairs (need 3)");

  Eigen::Matrix3Xd src_m(3, matched);
  Eigen::Matrix3Xd dst_m(3, matched);
  for (int i = 0; i < matched; ++i) {
    src_m.col(i) = src[static_cast<std::size_t>(i)];
    dst_m.col(i) = dst[static_cast<std::size_t>(i)];
  }

  AteReport report;
  report.matched = matched;
  report.alignment = Eigen::umeyama(src_m, dst_m, /*with_scaling=*/true);
  report.scale = std::cbrt(report.alignment.block<3, 3>(0, 0).determinant());

  report.residuals.resize(static_cast<std::size_t>(matched));
  double sum = 0.0;
  for (int i = 0; i < matched; ++i) {
    const Vec3 mapped = report.alignment.block<3, 3>(0, 0) * src_m.col(i) +
                        report.alignment.block<3, 1>(0, 3);
    const double r = (dst_m.col(i) - mapped).norm();
    report.residuals[static_cast<std::size_t>(i)] = r;
    sum += r;
  }
  report.mean = sum / matched;
  double var = 0.0;
  for (const double r : report.residuals) {
    const double d = r - report.mean;
    var += d * d;
  }
  report.stddev = std::sqrt(var / matched);
  return report;
}

// ---------------------------------------------------------------------------
// Exposure-sequence agreement
// ---------------------------------------------------------------------------

namespace {

// Pearson correlation; NaN when either sequence has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

// Ranks with ties assigned the average rank of their run (1-based).
std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Tie-corrected Kendall rank correlation,
//   tau_b = (C - D) / sqrt((n0 - t_x)(n0 - t_y)),
// with n0 all pairs, t_x / t_y pairs tied in each input, C/D the
// concordant/discordant pairs untied in both. NaN when a factor is zero.
double kendall_tau_b(const std::vector<double>& x,
                     const std::vector<double>& y) {
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0) ++ties_x;
      if (dy == 0.0) ++ties_y;
      if (dx == 0.0 || dy == 0.0) continue;
      if ((dx > 0.0) == (dy > 0.0))
        ++concordant;
      else
        ++discordant;
    }
  }
  const auto n0 = static_cast<long long>(n * (n - 1) / 2);
  const double fx = static_cast<double>(n0 - ties_x);
  const double fy = static_cast<double>(n0 - ties_y);
  if (fx <= 0.0 || fy <= 0.0)
    return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(concordant - discordant) / std::sqrt(fx * fy);
}

}  // namespace

CorrelationReport exposure_correlation(const std::vector<double>& estimated,
                                       const std::vector<double>& gt) {
  if (estimated.size() != gt.size())
    throw DegenerateInput("exposure_correlation: size mismatch");
  if (estimated.size() < 2)
    throw DegenerateInput("exposure_correlation: need at least 2 entries");
  for (const double v : estimated)
    if (!(v > 0.0))
      throw DomainError("exposure_correlation: non-positive estimate");
  for (const double v : gt)
    if (!(v > 0.0))
      throw DomainError("exposure_correlation: non-positive reference");

  std::vector<double> log_e(estimated.size()), log_g(gt.size());
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    log_e[i] = std::log(estimated[i]);
    log_g[i] = std::log(gt[i]);
  }

  CorrelationReport report;
  report.pearson_log = pearson(log_e, log_g);
  report.pearson_linear = pearson(estimated, gt);
  report.spearman = pearson(average_ranks(estimated), average_ranks(gt));
  report.kendall_tau_b = kendall_tau_b(estimated, gt);
  return report;
}

// ---------------------------------------------------------------------------
// Tone-curve distance
// ---------------------------------------------------------------------------

namespace {

double tone_mean(const ToneMlp& tone, const std::vector<double>& x,
                 double shift) {
  double sum = 0.0;
  for (const double xi : x) sum += tone.value(xi + shift);
  return sum / static_cast<double>(x.size());
}

// Shift along the log-exposure axis that matches the curve's mean value to
// `target_mean` (bisection; tone curves are monotone in their input, so the
// mean is monotone in the shift).
double align_shift(const ToneMlp& tone, const std::vector<double>& x,
                   double target_mean) {
  double lo = -30.0, hi = 30.0;
  double f_lo = tone_mean(tone, x, lo) - target_mean;
  double f_hi = tone_mean(tone, x, hi) - target_mean;
  if ((f_lo > 0.0) == (f_hi > 0.0))
    return std::abs(f_lo) < std::abs(f_hi) ? lo : hi;
  if (f_lo > 0.0) std::swap(lo, hi);  // keep f(lo) <= 0 <= f(hi)
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (tone_mean(tone, x, mid) - target_mean <= 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double crf_curve_error(const CrfModel& crf,
                       const std::vector<double>& log_exposure,
                       const std::array<std::vector<double>, 3>& target) {
  const std::size_t n = log_exposure.size();
  if (n == 0) throw DegenerateInput("crf_curve_error: empty sample table");
  for (const auto& channel : target)
    if (channel.size() != n)
      throw DegenerateInput("crf_curve_error: channel size mismatch");

  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const auto& y = target[static_cast<std::size_t>(c)];
    const double target_mean =
        std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    const ToneMlp& tone = crf.tone[static_cast<std::size_t>(c)];
    const double shift = align_shift(tone, log_exposure, target_mean);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      err += std::abs(tone.value(log_exposure[i] + shift) - y[i]);
    total += err / static_cast<double>(n);
  }
  return total / 3.0;
}

}  // namespace chs

// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#include "chs/image.hpp"

#include <cmath>
#include <string>

namespace chs {

double image_mean(const Image3& img) {
  if (img.data.empty()) throw DomainError("image_mean: empty image");
  double sum = 0.0;
  for (double v : img.data) sum += v;
  return sum / static_cast<double>(img.data.size());
}

bool image_finite(const Image3& img) {
  for (double v : img.data)
    if (!std::isfinite(v)) return false;
  return true;
}

void require_same_shape(const Image3& a, const Image3& b, const char* where) {
  if (a.width <= 0 || a.height <= 0 || !a.same_shape(b))
    throw DomainError(std::string(where) + ": image shapes differ or are empty");
}

}  // namespace chs

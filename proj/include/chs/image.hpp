// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "chs/errors.hpp"

namespace chs {

// Planar-free RGB image: doubles, row-major, interleaved channels, row 0 at
// the top. Used for both linear HDR radiance and [0,1] tone-mapped values.
struct Image3 {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // size = width * height * 3

  Image3() = default;
  Image3(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {
    if (w <= 0 || h <= 0) throw DomainError("Image3: non-positive size");
  }

  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Image3& o) const {
    return width == o.width && height == o.height;
  }
};

// Mean over all pixels and channels.
double image_mean(const Image3& img);

// True when every sample is finite.
bool image_finite(const Image3& img);

// Throws DomainError unless both images share one (positive) shape.
void require_same_shape(const Image3& a, const Image3& b, const char* where);

}  // namespace chs

// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// HDR 3D Gaussian scene and the CPU rasterizer. A primitive is an
// anisotropic Gaussian with covariance R * diag(exp(2 s)) * R^T, sigmoid
// opacity, and positive (exp-parameterized) linear radiance. Rendering
// projects each Gaussian through the EWA approximation
//   cov2d = J * W * cov3d * W^T * J^T + floor * I
// and alpha-blends front to back per pixel:
//   C = sum_i c_i a_i prod_{j<i} (1 - a_j),  a_i = opacity_i * exp(-sigma_i),
// with sigma_i the Mahalanobis half-distance in screen space. Images are
// composited over black; there is no background term.
#pragma once

#include <filesystem>
#include <vector>

#include "chs/image.hpp"
#include "chs/lie.hpp"
#include "chs/threading.hpp"

namespace chs {

struct GaussianPrimitive {
  Vec3 mean = Vec3::Zero();
  Rotation orientation;
  Vec3 log_scale = Vec3::Zero();     // per-axis log standard deviation
  double opacity_raw = 0.0;          // sigmoid(opacity_raw) in (0,1)
  Vec3 color_log = Vec3::Zero();     // exp(color_log) = linear HDR radiance

  double opacity() const { return 1.0 / (1.0 + std::exp(-opacity_raw)); }
  Vec3 color() const { return color_log.array().exp(); }
  Mat3 covariance() const {
    const Mat3 r = orientation.matrix();
    const Vec3 s2 = (2.0 * log_scale).array().exp();
    return r * s2.asDiagonal() * r.transpose();
  }
};

struct GaussianScene {
  std::vector<GaussianPrimitive> prims;
};

// Pinhole intrinsics; pixel (ix, iy) samples at (ix + 0.5, iy + 0.5).
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
};

struct RasterSettings {
  double near_plane = 0.01;   // primitives with camera z <= this are culled
  double cov_floor = 0.3;     // px^2 added to both cov2d diagonal entries
  double alpha_clamp = 0.999; // per-sample alpha ceiling
  double t_min = 1e-4;        // stop blending once transmittance drops below
  double cull_eps = 1e-5;     // drop samples with exp(-sigma) below this
};

// Screen-space footprint of one primitive under a view (world-to-camera)
// pose. cov2d includes the diagonal floor.
struct Projected {
  Vec2 mean2d;
  Mat2 cov2d;
  double depth = 0.0;  // camera-space z
};

// Throws BehindCamera when the center lands at z <= near_plane.
Projected project(const GaussianPrimitive& prim, const Pose& view,
                  const Camera& cam, const RasterSettings& rs);

// Renders linear HDR radiance. `view` maps world to camera coordinates.
Image3 render(const GaussianScene& scene, const Pose& view, const Camera& cam,
              const RasterSettings& rs, ThreadPool& pool);

// Forward pass that also records, per pixel, which primitives contributed
// and their Gaussian weights, so the backward pass can replay the exact
// blending arithmetic without re-rendering.
struct RenderTape {
  struct ScreenPrim {
    int prim = 0;  // index into scene.prims
    Vec2 mu;
    double ia = 0, ib = 0, ic = 0;  // inverse cov2d entries [[ia,ib],[ib,ic]]
    double ex = 0, ey = 0;          // bbox half extents at the cull radius
    Vec3 color;
    double opacity = 0;
  };
  struct Contrib {
    int screen_index;  // index into `screen`
    double weight;     // exp(-sigma) at the pixel center
  };
  struct Row {
    std::vector<int> counts;      // contributors per pixel in this row
    std::vector<Contrib> items;   // concatenated in x order
  };
  std::vector<ScreenPrim> screen;  // depth-sorted included primitives
  std::vector<Row> rows;
  int width = 0, height = 0;
};

Image3 render_with_tape(const GaussianScene& scene, const Pose& view,
                        const Camera& cam, const RasterSettings& rs,
                        ThreadPool& pool, RenderTape* tape);

// Gradients for one primitive, in the native parameterization. The
// orientation entry is a right-increment twist: R <- R * exp(skew(e)).
struct PrimitiveGrad {
  Vec3 d_mean = Vec3::Zero();
  Vec3 d_orientation = Vec3::Zero();
  Vec3 d_log_scale = Vec3::Zero();
  double d_opacity_raw = 0.0;
  Vec3 d_color_log = Vec3::Zero();
};

struct RenderBackward {
  std::vector<PrimitiveGrad> prims;  // one per scene primitive
  Vec6 d_view = Vec6::Zero();        // right-increment twist on `view`
};

// Pulls dL/dimage back to the scene parameters and the view pose. `upstream`
// must match the rendered size; the tape must come from the same
// (scene, view, camera, settings).
RenderBackward render_backward(const GaussianScene& scene, const Pose& view,
                               const Camera& cam, const RasterSettings& rs,
                               const RenderTape& tape, const Image3& upstream,
                               ThreadPool& pool);

// Scene container I/O (CHS1 sections: counts plus one flat array per field).
void save_scene(const std::filesystem::path& path, const GaussianScene& scene);
GaussianScene load_scene(const std::filesystem::path& path);

}  // namespace chs

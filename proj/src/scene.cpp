// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#include "chs/scene.hpp"

#include <algorithm>
#include <cmath>

#include "chs/io.hpp"

namespace chs {

namespace {

// sigma cutoff implied by the weight threshold: exp(-sigma) >= cull_eps.
double sigma_cutoff(const RasterSettings& rs) { return -std::log(rs.cull_eps); }

struct ProjectionCore {
  Vec3 p_cam;
  Eigen::Matrix<double, 2, 3> jac;  // d(mean2d)/d(p_cam)
  Vec2 mean2d;
  Mat2 cov2d;  // with floor
  Eigen::Matrix<double, 2, 3> b;    // J * W
};

// Shared forward projection math; returns false when behind the near plane.
bool project_core(const GaussianPrimitive& prim, const Pose& view,
                  const Camera& cam, const RasterSettings& rs,
                  ProjectionCore* out) {
  out->p_cam = view * prim.mean;
  const double z = out->p_cam.z();
  if (z <= rs.near_plane) return false;
  const double x = out->p_cam.x(), y = out->p_cam.y();
  out->mean2d = Vec2(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy);
  out->jac << cam.fx / z, 0.0, -cam.fx * x / (z * z),
              0.0, cam.fy / z, -cam.fy * y / (z * z);
  out->b = out->jac * view.rotation.matrix();
  out->cov2d = out->b * prim.covariance() * out->b.transpose();
  out->cov2d(0, 0) += rs.cov_floor;
  out->cov2d(1, 1) += rs.cov_floor;
  return true;
}

struct CamPrim {
  int prim;
  double depth;
  Vec2 mu;
  double ia, ib, ic;  // inverse cov2d
  double ex, ey;      // half extents of the cull bbox (pixel units)
  Vec3 color;
  double opacity;
};

// Projects, culls, and depth-sorts the scene for one view.
std::vector<CamPrim> build_camprims(const GaussianScene& scene,
                                    const Pose& view, const Camera& cam,
                                    const RasterSettings& rs) {
  const double s_cut = sigma_cutoff(rs);
  std::vector<CamPrim> out;
  out.reserve(scene.prims.size());
  for (int i = 0; i < static_cast<int>(scene.prims.size()); ++i) {
    ProjectionCore core;
    if (!project_core(scene.prims[i], view, cam, rs, &core)) continue;
    const double a = core.cov2d(0, 0), b = core.cov2d(0, 1),
                 c = core.cov2d(1, 1);
    const double det = a * c - b * b;
    if (!(det > 0.0)) continue;  // floor makes this unreachable in practice
    CamPrim cp;
    cp.prim = i;
    cp.depth = core.p_cam.z();
    cp.mu = core.mean2d;
    cp.ia = c / det;
    cp.ib = -b / det;
    cp.ic = a / det;
    // Axis-aligned bounds of the ellipse sigma == s_cut.
    cp.ex = std::sqrt(2.0 * s_cut * a);
    cp.ey = std::sqrt(2.0 * s_cut * c);
    if (cp.mu.x() + cp.ex < 0.0 || cp.mu.x() - cp.ex > cam.width ||
        cp.mu.y() + cp.ey < 0.0 || cp.mu.y() - cp.ey > cam.height)
      continue;
    cp.color = scene.prims[i].color();
    cp.opacity = scene.prims[i].opacity();
    out.push_back(cp);
  }
  std::sort(out.begin(), out.end(), [](const CamPrim& l, const CamPrim& r) {
    return l.depth != r.depth ? l.depth < r.depth : l.prim < r.prim;
  });
  return out;
}

}  // namespace

Projected project(const GaussianPrimitive& prim, const Pose& view,
                  const Camera& cam, const RasterSettings& rs) {
  ProjectionCore core;
  if (!project_core(prim, view, cam, rs, &core))
    throw BehindCamera("project: primitive at or behind the near plane");
  return Projected{core.mean2d, core.cov2d, core.p_cam.z()};
}

Image3 render_with_tape(const GaussianScene& scene, const Pose& view,
                        const Camera& cam, const RasterSettings& rs,
                        ThreadPool& pool, RenderTape* tape) {
  if (cam.width <= 0 || cam.height <= 0)
    throw DomainError("render: camera size not set");
  const std::vector<CamPrim> prims = build_camprims(scene, view, cam, rs);
  Image3 img(cam.width, cam.height);
  if (tape) {
    tape->width = cam.width;
    tape->height = cam.height;
    tape->screen.clear();
    tape->screen.reserve(prims.size());
    for (const CamPrim& cp : prims)
      tape->screen.push_back({cp.prim, cp.mu, cp.ia, cp.ib, cp.ic, cp.ex,
                              cp.ey, cp.color, cp.opacity});
    tape->rows.assign(cam.height, {});
  }
  const double s_cut = sigma_cutoff(rs);

  pool.run_chunks(cam.height, [&](int, std::int64_t y0, std::int64_t y1) {
    for (std::int64_t y = y0; y < y1; ++y) {
      RenderTape::Row* row = tape ? &tape->rows[y] : nullptr;
      if (row) row->counts.assign(cam.width, 0);
      const double py = y + 0.5;
      for (int x = 0; x < cam.width; ++x) {
        const double px = x + 0.5;
        double t = 1.0;
        double r = 0.0, g = 0.0, b = 0.0;
        int count = 0;
        for (std::size_t k = 0; k < prims.size(); ++k) {
          const CamPrim& cp = prims[k];
          const double dx = px - cp.mu.x();
          const double dy = py - cp.mu.y();
          if (dx > cp.ex || dx < -cp.ex || dy > cp.ey || dy < -cp.ey) continue;
          const double sigma =
              0.5 * (cp.ia * dx * dx + cp.ic * dy * dy) + cp.ib * dx * dy;
          if (sigma > s_cut || sigma < 0.0) continue;
          const double w = std::exp(-sigma);
          if (w < rs.cull_eps) continue;
          const double alpha = std::min(cp.opacity * w, rs.alpha_clamp);
          r += cp.color.x() * alpha * t;
          g += cp.color.y() * alpha * t;
          b += cp.color.z() * alpha * t;
          if (row) {
            row->items.push_back({static_cast<int>(k), w});
            ++count;
          }
          t *= 1.0 - alpha;
          if (t < rs.t_min) break;
        }
        img.at(x, y, 0) = r;
        img.at(x, y, 1) = g;
        img.at(x, y, 2) = b;
        if (row) row->counts[x] = count;
      }
    }
  });
  return img;
}

Image3 render(const GaussianScene& scene, const Pose& view, const Camera& cam,
              const RasterSettings& rs, ThreadPool& pool) {
  return render_with_tape(scene, view, cam, rs, pool, nullptr);
}

namespace {

// Per-primitive screen-space gradient slots accumulated over pixels.
struct ScreenGrad {
  Vec2 d_mu = Vec2::Zero();
  double d_ia = 0, d_ib = 0, d_ic = 0;  // w.r.t. inverse cov2d entries
  Vec3 d_color = Vec3::Zero();
  double d_opacity = 0;
};

}  // namespace

RenderBackward render_backward(const GaussianScene& scene, const Pose& view,
                               const Camera& cam, const RasterSettings& rs,
                               const RenderTape& tape, const Image3& upstream,
                               ThreadPool& pool) {
  if (upstream.width != tape.width || upstream.height != tape.height)
    throw DomainError("render_backward: upstream size mismatch");
  const std::size_t n_screen = tape.screen.size();
  const int n_threads = pool.size();
  // Per-thread accumulators merged in thread order => summation order over
  // pixels equals the sequential row order for any thread count.
  std::vector<std::vector<ScreenGrad>> partial(
      n_threads, std::vector<ScreenGrad>(n_screen));

  pool.run_chunks(tape.height, [&](int tid, std::int64_t y0, std::int64_t y1) {
    std::vector<ScreenGrad>& acc = partial[tid];
    std::vector<double> stack_t;  // transmittance before each contributor
    std::vector<double> stack_a;  // clamped alpha of each contributor
    for (std::int64_t y = y0; y < y1; ++y) {
      const RenderTape::Row& row = tape.rows[y];
      std::size_t offset = 0;
      const double py = y + 0.5;
      for (int x = 0; x < tape.width; ++x) {
        const int count = row.counts[x];
        if (count == 0) continue;
        const double px = x + 0.5;
        const Vec3 gpix(upstream.at(x, y, 0), upstream.at(x, y, 1),
                        upstream.at(x, y, 2));
        // Replay the forward blend to recover T_i, then sweep backwards
        // keeping suffix sums S_ch = sum_{j>i} c_j a_j T_j.
        stack_t.assign(count, 0.0);
        stack_a.assign(count, 0.0);
        double t = 1.0;
        for (int i = 0; i < count; ++i) {
          const RenderTape::Contrib& it = row.items[offset + i];
          const RenderTape::ScreenPrim& sp = tape.screen[it.screen_index];
          stack_t[i] = t;
          stack_a[i] = std::min(sp.opacity * it.weight, rs.alpha_clamp);
          t *= 1.0 - stack_a[i];
        }
        Vec3 suffix = Vec3::Zero();
        for (int i = count - 1; i >= 0; --i) {
          const RenderTape::Contrib& it = row.items[offset + i];
          const RenderTape::ScreenPrim& sp = tape.screen[it.screen_index];
          ScreenGrad& sg = acc[it.screen_index];
          const double ti = stack_t[i];
          const double alpha = stack_a[i];
          const double aw = alpha * ti;
          sg.d_color += gpix * aw;
          const Vec3 contrib = sp.color * aw;
          // dC/da_i = c_i T_i - (suffix of later contributions)/(1 - a_i).
          const double d_alpha =
              gpix.dot(sp.color * ti - suffix / (1.0 - alpha));
          suffix += contrib;
          if (alpha >= rs.alpha_clamp) continue;  // clamped: zero slope
          const double w = it.weight;
          const double d_w = d_alpha * sp.opacity;
          sg.d_opacity += d_alpha * w;
          // w = exp(-sigma); sigma = (ia dx^2 + ic dy^2)/2 + ib dx dy.
          const double d_sigma = -d_w * w;
          const double dx = px - sp.mu.x();
          const double dy = py - sp.mu.y();
          sg.d_ia += d_sigma * 0.5 * dx * dx;
          sg.d_ib += d_sigma * dx * dy;
          sg.d_ic += d_sigma * 0.5 * dy * dy;
          // d sigma / d mu = -(M delta).
          sg.d_mu.x() += -d_sigma * (sp.ia * dx + sp.ib * dy);
          sg.d_mu.y() += -d_sigma * (sp.ib * dx + sp.ic * dy);
        }
        offset += count;
      }
    }
  });

  // Merge thread partials in thread order.
  std::vector<ScreenGrad> merged(n_screen);
  for (int tidx = 0; tidx < n_threads; ++tidx)
    for (std::size_t k = 0; k < n_screen; ++k) {
      const ScreenGrad& p = partial[tidx][k];
      merged[k].d_mu += p.d_mu;
      merged[k].d_ia += p.d_ia;
      merged[k].d_ib += p.d_ib;
      merged[k].d_ic += p.d_ic;
      merged[k].d_color += p.d_color;
      merged[k].d_opacity += p.d_opacity;
    }

  // Chain each included primitive's screen gradients back to its 3D
  // parameters and the view pose.
  RenderBackward out;
  out.prims.assign(scene.prims.size(), PrimitiveGrad{});
  const Mat3 w_rot = view.rotation.matrix();
  for (std::size_t k = 0; k < n_screen; ++k) {
    const RenderTape::ScreenPrim& sp = tape.screen[k];
    const ScreenGrad& sg = merged[k];
    const GaussianPrimitive& prim = scene.prims[sp.prim];
    PrimitiveGrad& pg = out.prims[sp.prim];

    // Color and opacity chains.
    pg.d_color_log += sg.d_color.cwiseProduct(sp.color);
    pg.d_opacity_raw += sg.d_opacity * sp.opacity * (1.0 - sp.opacity);

    ProjectionCore core;
    if (!project_core(prim, view, cam, rs, &core)) continue;  // unreachable

    // d(inverse cov) -> d(cov2d): dM = -M dCov M.
    Mat2 minv;
    minv << sp.ia, sp.ib, sp.ib, sp.ic;
    Mat2 gm;
    gm << sg.d_ia, 0.5 * sg.d_ib, 0.5 * sg.d_ib, sg.d_ic;
    const Mat2 g_cov = -minv * gm * minv;

    // cov2d = B cov3d B^T + floor I.
    const Mat3 cov3d = prim.covariance();
    const Eigen::Matrix<double, 2, 3>& b = core.b;
    const Mat3 g_cov3d = b.transpose() * g_cov * b;
    const Eigen::Matrix<double, 2, 3> g_b =
        (g_cov + g_cov.transpose()) * b * cov3d;

    // cov3d = R diag(exp(2 s)) R^T.
    const Mat3 r = prim.orientation.matrix();
    const Vec3 s2 = (2.0 * prim.log_scale).array().exp();
    const Mat3 g_r = (g_cov3d + g_cov3d.transpose()) * r * s2.asDiagonal();
    pg.d_orientation += unskew_inner(r.transpose() * g_r);
    const Mat3 rtgr = r.transpose() * g_cov3d * r;
    for (int ax = 0; ax < 3; ++ax)
      pg.d_log_scale[ax] += 2.0 * s2[ax] * rtgr(ax, ax);

    // B = J W: split into the projection Jacobian and the view rotation.
    const Eigen::Matrix<double, 2, 3> g_j = g_b * w_rot.transpose();
    const Mat3 g_wrot_cov = core.jac.transpose() * g_b;

    // Gradient w.r.t. the camera-space center, from J and from mean2d.
    const double z = core.p_cam.z();
    const double xc = core.p_cam.x(), yc = core.p_cam.y();
    const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
    Vec3 g_pcam = Vec3::Zero();
    g_pcam.x() += -cam.fx * iz2 * g_j(0, 2);
    g_pcam.y() += -cam.fy * iz2 * g_j(1, 2);
    g_pcam.z() += -cam.fx * iz2 * g_j(0, 0) - cam.fy * iz2 * g_j(1, 1) +
                  2.0 * cam.fx * xc * iz3 * g_j(0, 2) +
                  2.0 * cam.fy * yc * iz3 * g_j(1, 2);
    g_pcam.x() += cam.fx * iz * sg.d_mu.x();
    g_pcam.y() += cam.fy * iz * sg.d_mu.y();
    g_pcam.z() +=
        -cam.fx * xc * iz2 * sg.d_mu.x() - cam.fy * yc * iz2 * sg.d_mu.y();

    // p_cam = W p_world + t_view.
    const Vec3 wt_gp = w_rot.transpose() * g_pcam;
    pg.d_mean += wt_gp;

    // View right-increment: p_cam shifts by W (omega x p_world + v), and the
    // rotation inside B also turns: dW = W skew(omega).
    out.d_view.head<3>() += prim.mean.cross(wt_gp);
    out.d_view.head<3>() += unskew_inner(w_rot.transpose() * g_wrot_cov);
    out.d_view.tail<3>() += wt_gp;
  }
  return out;
}

// ------------------------------------------------------------------- files

void save_scene(const std::filesystem::path& path, const GaussianScene& scene) {
  const std::size_t n = scene.prims.size();
  ChunkFileWriter file(1);
  ByteWriter meta;
  meta.u64(n);
  file.add("meta", meta);

  ByteWriter means, quats, scales, opac, colors;
  for (const auto& p : scene.prims) {
    for (int i = 0; i < 3; ++i) means.f64(p.mean[i]);
    quats.f64(p.orientation.w());
    quats.f64(p.orientation.x());
    quats.f64(p.orientation.y());
    quats.f64(p.orientation.z());
    for (int i = 0; i < 3; ++i) scales.f64(p.log_scale[i]);
    opac.f64(p.opacity_raw);
    for (int i = 0; i < 3; ++i) colors.f64(p.color_log[i]);
  }
  file.add("means", means);
  file.add("orientations", quats);
  file.add("log_scales", scales);
  file.add("opacity_raw", opac);
  file.add("color_log", colors);
  file.save(path);
}

GaussianScene load_scene(const std::filesystem::path& path) {
  ChunkFileReader file(path);
  ByteReader meta(file.payload("meta"));
  const std::uint64_t n = meta.u64();
  ByteReader means(file.payload("means"));
  ByteReader quats(file.payload("orientations"));
  ByteReader scales(file.payload("log_scales"));
  ByteReader opac(file.payload("opacity_raw"));
  ByteReader colors(file.payload("color_log"));
  GaussianScene scene;
  scene.prims.resize(n);
  for (auto& p : scene.prims) {
    for (int i = 0; i < 3; ++i) p.mean[i] = means.f64();
    const double qw = quats.f64(), qx = quats.f64(), qy = quats.f64(),
                 qz = quats.f64();
    p.orientation = Rotation::from_quaternion(qw, qx, qy, qz);
    for (int i = 0; i < 3; ++i) p.log_scale[i] = scales.f64();
    p.opacity_raw = opac.f64();
    for (int i = 0; i < 3; ++i) p.color_log[i] = colors.f64();
  }
  return scene;
}

}  // namespace chs

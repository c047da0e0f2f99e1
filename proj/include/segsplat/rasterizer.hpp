#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "segsplat/camera.hpp"
#include "segsplat/core.hpp"
#include "segsplat/gaussian.hpp"
#include "segsplat/image.hpp"

namespace segsplat {

struct RenderOptions {
  double low_pass = 0.3;              // px^2 added to the projected covariance diagonal
  double near_plane = 0.2;
  double max_alpha = 0.99;
  double min_alpha = 1e-8;            // contributions below this are skipped
  double transmittance_cutoff = 1e-5; // compositing stops once T falls below this
  int tile_size = 16;
};

/// A Gaussian projected to the image plane.
template <typename Scalar>
struct Splat2D {
  Vec2<Scalar> mean2d = Vec2<Scalar>::Zero();
  Mat2<Scalar> cov2d = Mat2<Scalar>::Identity();
  Mat2<Scalar> conic = Mat2<Scalar>::Identity();
  Scalar depth = 0;
  Vec3<Scalar> color = Vec3<Scalar>::Zero();
  Scalar opacity = 0;
  std::uint32_t source = 0;
  // Pixel bounding box of the alpha >= min_alpha footprint (inclusive).
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
};

template <typename Scalar>
struct RenderResult {
  Image<Scalar> image;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> alpha;          // accumulated opacity, 1 - T
  Eigen::Array<Scalar, Eigen::Dynamic, 1> transmittance;  // final T per pixel
  Eigen::Array<int, Eigen::Dynamic, 1> traversed;         // tile-list prefix processed per pixel
  int tile_size = 16;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::vector<std::uint32_t>> tile_lists;  // indices into the splat array, front to back
};

/// Gradient of the loss with respect to one splat's image-space quantities.
template <typename Scalar>
struct SplatGrads {
  Vec2<Scalar> mean2d = Vec2<Scalar>::Zero();
  Mat2<Scalar> conic = Mat2<Scalar>::Zero();  // full-matrix gradient
  Scalar opacity = 0;
  Vec3<Scalar> color = Vec3<Scalar>::Zero();
};

namespace detail {

template <typename Scalar>
struct PixelSample {
  Scalar alpha;
  Scalar gauss;
  Scalar dx;
  Scalar dy;
  bool clamped;
};

// Alpha of splat `s` at pixel (px, py); false when the contribution is skipped.
template <typename Scalar>
inline bool sample_splat(const Splat2D<Scalar>& s, Scalar px, Scalar py, const RenderOptions& opt,
                         PixelSample<Scalar>& out) {
  const Scalar dx = px - s.mean2d.x();
  const Scalar dy = py - s.mean2d.y();
  const Scalar power =
      Scalar(-0.5) * (s.conic(0, 0) * dx * dx + s.conic(1, 1) * dy * dy) - s.conic(0, 1) * dx * dy;
  if (power > Scalar(0)) return false;
  const Scalar gauss = std::exp(power);
  const Scalar raw = s.opacity * gauss;
  if (raw < Scalar(opt.min_alpha)) return false;
  out.clamped = raw > Scalar(opt.max_alpha);
  out.alpha = out.clamped ? Scalar(opt.max_alpha) : raw;
  out.gauss = gauss;
  out.dx = dx;
  out.dy = dy;
  return true;
}

template <typename Scalar>
Mat23<Scalar> projection_jacobian(const Camera<Scalar>& cam, const Vec3<Scalar>& t) {
  const Scalar iz = Scalar(1) / t.z();
  Mat23<Scalar> j;
  j << cam.fx * iz, 0, -cam.fx * t.x() * iz * iz,  //
      0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
  return j;
}

}  // namespace detail

/// Projects the Gaussians listed in `subset` into `cam`, culling those behind
/// the near plane or outside the image. Output is sorted front to back, ties
/// broken by source index.
template <typename Scalar>
std::vector<Splat2D<Scalar>> project(const GaussianCloud<Scalar>& cloud, std::span<const std::uint32_t> subset,
                                     const Camera<Scalar>& cam, const RenderOptions& opt = {}) {
  std::vector<Splat2D<Scalar>> splats;
  splats.reserve(subset.size());
  const Scalar log_min_alpha = std::log(Scalar(opt.min_alpha));
  for (const std::uint32_t i : subset) {
    const Vec3<Scalar> t = cam.to_camera(cloud.means[i]);
    if (t.z() <= Scalar(opt.near_plane)) continue;
    const Scalar opacity = sigmoid(cloud.opacity_logits[i]);
    if (opacity <= Scalar(opt.min_alpha)) continue;

    const Mat3<Scalar> sigma = covariance<Scalar>(cloud.rotations[i], cloud.log_scales[i]);
    const Mat23<Scalar> jw = detail::projection_jacobian(cam, t) * cam.rotation;
    Mat2<Scalar> cov2d = jw * sigma * jw.transpose();
    cov2d(0, 1) = cov2d(1, 0) = Scalar(0.5) * (cov2d(0, 1) + cov2d(1, 0));
    cov2d(0, 0) += Scalar(opt.low_pass);
    cov2d(1, 1) += Scalar(opt.low_pass);
    const Scalar det = cov2d.determinant();
    if (!(det > Scalar(0))) continue;

    Splat2D<Scalar> s;
    s.mean2d = cam.project(t);
    s.cov2d = cov2d;
    s.conic << cov2d(1, 1) / det, -cov2d(0, 1) / det, -cov2d(1, 0) / det, cov2d(0, 0) / det;
    s.depth = t.z();
    s.color = cloud.colors[i];
    s.opacity = opacity;
    s.source = i;

    // alpha >= min_alpha inside the ellipse d^T conic d <= 2 ln(opacity / min_alpha)
    const Scalar level = Scalar(2) * (std::log(opacity) - log_min_alpha);
    const Scalar rx = std::sqrt(level * cov2d(0, 0));
    const Scalar ry = std::sqrt(level * cov2d(1, 1));
    s.x0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - rx)));
    s.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(s.mean2d.x() + rx)));
    s.y0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - ry)));
    s.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(s.mean2d.y() + ry)));
    if (s.x0 > s.x1 || s.y0 > s.y1) continue;
    splats.push_back(s);
  }
  std::stable_sort(splats.begin(), splats.end(), [](const Splat2D<Scalar>& a, const Splat2D<Scalar>& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.source < b.source;
  });
  return splats;
}

template <typename Scalar>
std::vector<Splat2D<Scalar>> project(const GaussianCloud<Scalar>& cloud, const Camera<Scalar>& cam,
                                     const RenderOptions& opt = {}) {
  std::vector<std::uint32_t> all(cloud.size());
  std::iota(all.begin(), all.end(), 0u);
  return project(cloud, std::span<const std::uint32_t>(all), cam, opt);
}

/// Tiled front-to-back alpha compositing over a black background.
template <typename Scalar>
RenderResult<Scalar> render(std::span<const Splat2D<Scalar>> splats, int width, int height,
                            const RenderOptions& opt = {}) {
  RenderResult<Scalar> out;
  out.image = Image<Scalar>(width, height);
  const Eigen::Index n = out.image.pixel_count();
  out.alpha.setZero(n);
  out.transmittance.setOnes(n);
  out.traversed.setZero(n);
  out.tile_size = opt.tile_size;
  out.tiles_x = (width + opt.tile_size - 1) / opt.tile_size;
  out.tiles_y = (height + opt.tile_size - 1) / opt.tile_size;
  out.tile_lists.assign(static_cast<std::size_t>(out.tiles_x) * out.tiles_y, {});

  for (std::uint32_t k = 0; k < splats.size(); ++k) {
    const auto& s = splats[k];
    for (int ty = s.y0 / opt.tile_size; ty <= s.y1 / opt.tile_size; ++ty)
      for (int tx = s.x0 / opt.tile_size; tx <= s.x1 / opt.tile_size; ++tx)
        out.tile_lists[static_cast<std::size_t>(ty) * out.tiles_x + tx].push_back(k);
  }

  const Scalar cutoff = Scalar(opt.transmittance_cutoff);
  for (int ty = 0; ty < out.tiles_y; ++ty) {
    for (int tx = 0; tx < out.tiles_x; ++tx) {
      const auto& list = out.tile_lists[static_cast<std::size_t>(ty) * out.tiles_x + tx];
      if (list.empty()) continue;
      const int px_end = std::min(width, (tx + 1) * opt.tile_size);
      const int py_end = std::min(height, (ty + 1) * opt.tile_size);
      for (int py = ty * opt.tile_size; py < py_end; ++py) {
        for (int px = tx * opt.tile_size; px < px_end; ++px) {
          Scalar t = 1;
          Vec3<Scalar> c = Vec3<Scalar>::Zero();
          int traversed = 0;
          detail::PixelSample<Scalar> ps;
          for (std::size_t k = 0; k < list.size(); ++k) {
            traversed = static_cast<int>(k) + 1;
            const auto& s = splats[list[k]];
            if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
            if (!detail::sample_splat(s, Scalar(px), Scalar(py), opt, ps)) continue;
            c += s.color * (ps.alpha * t);
            t *= Scalar(1) - ps.alpha;
            if (t < cutoff) break;
          }
          const Eigen::Index idx = out.image.index(px, py);
          out.image.rgb.row(idx) = c.transpose().array();
          out.transmittance(idx) = t;
          out.alpha(idx) = Scalar(1) - t;
          out.traversed(idx) = traversed;
        }
      }
    }
  }
  return out;
}

/// Adjoint of `render`: recomputes each pixel's contribution chain and
/// returns per-splat gradients given dL/dimage (and optionally dL/dalpha).
template <typename Scalar>
std::vector<SplatGrads<Scalar>> render_backward(std::span<const Splat2D<Scalar>> splats,
                                                const RenderResult<Scalar>& fwd, const Image<Scalar>& d_image,
                                                const RenderOptions& opt = {},
                                                const Eigen::Array<Scalar, Eigen::Dynamic, 1>* d_alpha = nullptr) {
  std::vector<SplatGrads<Scalar>> grads(splats.size());
  struct Contribution {
    std::uint32_t splat;
    Scalar t_before;
    detail::PixelSample<Scalar> s;
  };
  std::vector<Contribution> chain;
  const int width = fwd.image.width;
  const int height = fwd.image.height;
  for (int ty = 0; ty < fwd.tiles_y; ++ty) {
    for (int tx = 0; tx < fwd.tiles_x; ++tx) {
      const auto& list = fwd.tile_lists[static_cast<std::size_t>(ty) * fwd.tiles_x + tx];
      if (list.empty()) continue;
      const int px_end = std::min(width, (tx + 1) * fwd.tile_size);
      const int py_end = std::min(height, (ty + 1) * fwd.tile_size);
      for (int py = ty * fwd.tile_size; py < py_end; ++py) {
        for (int px = tx * fwd.tile_size; px < px_end; ++px) {
          const Eigen::Index idx = fwd.image.index(px, py);
          const Vec3<Scalar> dc = d_image.rgb.row(idx).transpose().matrix();
          const Scalar da = d_alpha ? (*d_alpha)(idx) : Scalar(0);
          if (dc.isZero() && da == Scalar(0)) continue;

          chain.clear();
          Scalar t = 1;
          detail::PixelSample<Scalar> ps;
          for (int k = 0; k < fwd.traversed(idx); ++k) {
            const auto& s = splats[list[k]];
            if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
            if (!detail::sample_splat(s, Scalar(px), Scalar(py), opt, ps)) continue;
            chain.push_back({list[k], t, ps});
            t *= Scalar(1) - ps.alpha;
          }

          // Sweep back to front; `behind` is the color composited behind the
          // current splat, `behind_alpha` its accumulated opacity.
          Vec3<Scalar> behind = Vec3<Scalar>::Zero();
          Scalar behind_alpha = 0;
          for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
            const auto& s = splats[it->splat];
            auto& g = grads[it->splat];
            const Scalar a = it->s.alpha;
            const Scalar w = a * it->t_before;
            g.color += dc * w;
            const Scalar d_alpha_i =
                it->t_before * (dc.dot(s.color - behind) + da * (Scalar(1) - behind_alpha));
            behind = s.color * a + behind * (Scalar(1) - a);
            behind_alpha = a + behind_alpha * (Scalar(1) - a);
            if (it->s.clamped) continue;
            g.opacity += d_alpha_i * it->s.gauss;
            const Scalar d_power = d_alpha_i * a;
            const Scalar dx = it->s.dx, dy = it->s.dy;
            g.mean2d.x() += d_power * (s.conic(0, 0) * dx + s.conic(0, 1) * dy);
            g.mean2d.y() += d_power * (s.conic(1, 0) * dx + s.conic(1, 1) * dy);
            g.conic(0, 0) += d_power * Scalar(-0.5) * dx * dx;
            g.conic(0, 1) += d_power * Scalar(-0.5) * dx * dy;
            g.conic(1, 0) += d_power * Scalar(-0.5) * dx * dy;
            g.conic(1, 1) += d_power * Scalar(-0.5) * dy * dy;
          }
        }
      }
    }
  }
  return grads;
}

/// Chains per-splat gradients through the projection onto the Gaussian
/// parameters, accumulating into `out` (sized like the cloud).
template <typename Scalar>
void project_backward(const GaussianCloud<Scalar>& cloud, const Camera<Scalar>& cam,
                      std::span<const Splat2D<Scalar>> splats, std::span<const SplatGrads<Scalar>> splat_grads,
                      GaussianGrads<Scalar>& out) {
  for (std::size_t k = 0; k < splats.size(); ++k) {
    const auto& s = splats[k];
    const auto& g = splat_grads[k];
    const std::uint32_t i = s.source;

    out.colors[i] += g.color;
    out.opacity_logits[i] += g.opacity * s.opacity * (Scalar(1) - s.opacity);
    out.means2d[i] += g.mean2d;

    const Vec3<Scalar> t = cam.to_camera(cloud.means[i]);
    const Mat23<Scalar> j = detail::projection_jacobian(cam, t);
    const Mat3<Scalar>& w = cam.rotation;
    const Mat23<Scalar> jw = j * w;

    const Scalar qnorm = cloud.rotations[i].norm();
    const Vec4<Scalar> qhat = cloud.rotations[i] / qnorm;
    const Mat3<Scalar> r = rotation_matrix<Scalar>(qhat);
    const Vec3<Scalar> scale = cloud.log_scales[i].array().exp().matrix();
    const Mat3<Scalar> m = r * scale.asDiagonal();
    const Mat3<Scalar> sigma = m * m.transpose();

    // conic = cov2d^-1
    Mat2<Scalar> d_cov2d = -s.conic * g.conic * s.conic;
    d_cov2d = Scalar(0.5) * (d_cov2d + d_cov2d.transpose()).eval();

    const Mat3<Scalar> d_sigma = jw.transpose() * d_cov2d * jw;
    const Mat23<Scalar> d_jw = Scalar(2) * d_cov2d * jw * sigma;
    const Mat23<Scalar> d_j = d_jw * w.transpose();

    const Scalar iz = Scalar(1) / t.z();
    const Scalar iz2 = iz * iz;
    const Scalar iz3 = iz2 * iz;
    Vec3<Scalar> d_t = j.transpose() * g.mean2d;
    d_t.x() += d_j(0, 2) * (-cam.fx * iz2);
    d_t.y() += d_j(1, 2) * (-cam.fy * iz2);
    d_t.z() += d_j(0, 0) * (-cam.fx * iz2) + d_j(0, 2) * (Scalar(2) * cam.fx * t.x() * iz3) +
               d_j(1, 1) * (-cam.fy * iz2) + d_j(1, 2) * (Scalar(2) * cam.fy * t.y() * iz3);
    out.means[i] += w.transpose() * d_t;

    const Mat3<Scalar> d_m = (d_sigma + d_sigma.transpose()) * m;
    Vec3<Scalar> d_scale;
    Mat3<Scalar> d_r;
    for (int c = 0; c < 3; ++c) {
      d_scale(c) = d_m.col(c).dot(r.col(c));
      d_r.col(c) = d_m.col(c) * scale(c);
    }
    out.log_scales[i] += d_scale.cwiseProduct(scale);

    const Vec4<Scalar> d_qhat = rotation_matrix_vjp<Scalar>(qhat, d_r);
    out.rotations[i] += (d_qhat - qhat * qhat.dot(d_qhat)) / qnorm;
  }
}

/// Full backward pass: dL/dimage -> Gaussian parameter gradients (accumulated).
template <typename Scalar>
void backward(const GaussianCloud<Scalar>& cloud, const Camera<Scalar>& cam, std::span<const Splat2D<Scalar>> splats,
              const RenderResult<Scalar>& fwd, const Image<Scalar>& d_image, GaussianGrads<Scalar>& out,
              const RenderOptions& opt = {}, const Eigen::Array<Scalar, Eigen::Dynamic, 1>* d_alpha = nullptr) {
  const auto sg = render_backward<Scalar>(splats, fwd, d_image, opt, d_alpha);
  project_backward<Scalar>(cloud, cam, splats, sg, out);
}

/// Per-pixel compositing weight (alpha_i * T_i) summed per label, where
/// `labels[k]` is the label of splats[k] in [0, label_count). Returns a
/// (pixels x label_count) array.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> label_weights(std::span<const Splat2D<Scalar>> splats,
                                                                   const RenderResult<Scalar>& fwd,
                                                                   std::span<const int> labels, int label_count,
                                                                   const RenderOptions& opt = {}) {
  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> out =
      Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(fwd.image.pixel_count(), label_count);
  const int width = fwd.image.width;
  const int height = fwd.image.height;
  for (int ty = 0; ty < fwd.tiles_y; ++ty) {
    for (int tx = 0; tx < fwd.tiles_x; ++tx) {
      const auto& list = fwd.tile_lists[static_cast<std::size_t>(ty) * fwd.tiles_x + tx];
      const int px_end = std::min(width, (tx + 1) * fwd.tile_size);
      const int py_end = std::min(height, (ty + 1) * fwd.tile_size);
      for (int py = ty * fwd.tile_size; py < py_end; ++py) {
        for (int px = tx * fwd.tile_size; px < px_end; ++px) {
          const Eigen::Index idx = fwd.image.index(px, py);
          Scalar t = 1;
          detail::PixelSample<Scalar> ps;
          for (int k = 0; k < fwd.traversed(idx); ++k) {
            const auto& s = splats[list[k]];
            if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
            if (!detail::sample_splat(s, Scalar(px), Scalar(py), opt, ps)) continue;
            out(idx, labels[list[k]]) += ps.alpha * t;
            t *= Scalar(1) - ps.alpha;
          }
        }
      }
    }
  }
  return out;
}

extern template std::vector<Splat2D<double>> project(const GaussianCloud<double>&, std::span<const std::uint32_t>,
                                                     const Camera<double>&, const RenderOptions&);
extern template std::vector<Splat2D<float>> project(const GaussianCloud<float>&, std::span<const std::uint32_t>,
                                                    const Camera<float>&, const RenderOptions&);
extern template RenderResult<double> render(std::span<const Splat2D<double>>, int, int, const RenderOptions&);
extern template RenderResult<float> render(std::span<const Splat2D<float>>, int, int, const RenderOptions&);

}  // namespace segsplat

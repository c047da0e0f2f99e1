#pragma once

#include <cmath>

#include <Eigen/Core>

#include "segsplat/core.hpp"
#include "segsplat/image.hpp"

namespace segsplat {

/// Loss value together with its gradient with respect to the prediction.
template <typename Scalar>
struct LossAndGrad {
  Scalar value = 0;
  Image<Scalar> grad;
};

namespace detail {

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
Eigen::Array<Scalar, 11, 1> ssim_window() {
  Eigen::Array<Scalar, 11, 1> w;
  for (int i = 0; i < 11; ++i) w(i) = std::exp(-Scalar((i - 5) * (i - 5)) / Scalar(2 * 1.5 * 1.5));
  return w / w.sum();
}

// Separable 11x11 Gaussian filter, zero padded, same-size output. The kernel
// is symmetric so this is also its own adjoint.
template <typename Scalar>
Plane<Scalar> gaussian_filter(const Plane<Scalar>& in) {
  const auto w = ssim_window<Scalar>();
  const Eigen::Index h = in.rows(), wd = in.cols();
  Plane<Scalar> tmp = Plane<Scalar>::Zero(h, wd);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < wd; ++x) {
      Scalar acc = 0;
      for (int k = -5; k <= 5; ++k) {
        const Eigen::Index xx = x + k;
        if (xx >= 0 && xx < wd) acc += w(k + 5) * in(y, xx);
      }
      tmp(y, x) = acc;
    }
  Plane<Scalar> out = Plane<Scalar>::Zero(h, wd);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < wd; ++x) {
      Scalar acc = 0;
      for (int k = -5; k <= 5; ++k) {
        const Eigen::Index yy = y + k;
        if (yy >= 0 && yy < h) acc += w(k + 5) * tmp(yy, x);
      }
      out(y, x) = acc;
    }
  return out;
}

template <typename Scalar>
Plane<Scalar> channel(const Image<Scalar>& img, int c) {
  Plane<Scalar> p(img.height, img.width);
  for (Eigen::Index i = 0; i < img.pixel_count(); ++i) p.data()[i] = img.rgb(i, c);
  return p;
}

inline void require_same_shape(int w0, int h0, int w1, int h1, const char* what) {
  if (w0 != w1 || h0 != h1) throw Error(std::string(what) + ": image shape mismatch");
}

}  // namespace detail

/// Mean absolute error over pixels and channels.
template <typename Scalar>
LossAndGrad<Scalar> l1_loss(const Image<Scalar>& pred, const Image<Scalar>& target) {
  detail::require_same_shape(pred.width, pred.height, target.width, target.height, "l1_loss");
  LossAndGrad<Scalar> out;
  const auto diff = (pred.rgb - target.rgb).eval();
  const Scalar n = Scalar(diff.size());
  out.value = diff.abs().sum() / n;
  out.grad = Image<Scalar>(pred.width, pred.height);
  out.grad.rgb = diff.sign() / n;
  return out;
}

/// Mean SSIM (11x11 Gaussian window, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2) and
/// its gradient with respect to `pred`.
template <typename Scalar>
LossAndGrad<Scalar> ssim(const Image<Scalar>& pred, const Image<Scalar>& target) {
  detail::require_same_shape(pred.width, pred.height, target.width, target.height, "ssim");
  using P = detail::Plane<Scalar>;
  const Scalar c1 = Scalar(0.01 * 0.01), c2 = Scalar(0.03 * 0.03);
  const Scalar n = Scalar(pred.pixel_count() * 3);
  LossAndGrad<Scalar> out;
  out.grad = Image<Scalar>(pred.width, pred.height);
  for (int c = 0; c < 3; ++c) {
    const P x = detail::channel(pred, c);
    const P y = detail::channel(target, c);
    const P mx = detail::gaussian_filter<Scalar>(x);
    const P my = detail::gaussian_filter<Scalar>(y);
    const P bxx = detail::gaussian_filter<Scalar>((x * x).eval());
    const P byy = detail::gaussian_filter<Scalar>((y * y).eval());
    const P bxy = detail::gaussian_filter<Scalar>((x * y).eval());
    const P sxx = bxx - mx * mx;
    const P syy = byy - my * my;
    const P sxy = bxy - mx * my;
    const P n1 = 2 * mx * my + c1;
    const P n2 = 2 * sxy + c2;
    const P d1 = mx * mx + my * my + c1;
    const P d2 = sxx + syy + c2;
    const P s = (n1 * n2) / (d1 * d2);
    out.value += s.sum();

    const P ds_dmx = 2 * my * n2 / (d1 * d2) - s * 2 * mx / d1;
    const P ds_dsxx = -s / d2;
    const P ds_dsxy = 2 * n1 / (d1 * d2);
    const P ga = detail::gaussian_filter<Scalar>((ds_dmx - 2 * mx * ds_dsxx - my * ds_dsxy).eval());
    const P gb = detail::gaussian_filter<Scalar>(ds_dsxx);
    const P gc = detail::gaussian_filter<Scalar>(ds_dsxy);
    const P gx = (ga + 2 * x * gb + y * gc) / n;
    for (Eigen::Index i = 0; i < pred.pixel_count(); ++i) out.grad.rgb(i, c) = gx.data()[i];
  }
  out.value /= n;
  return out;
}

/// (1 - lambda) * L1 + lambda * (1 - SSIM) / 2.
template <typename Scalar>
LossAndGrad<Scalar> render_loss(const Image<Scalar>& pred, const Image<Scalar>& target, Scalar lambda) {
  if (lambda < Scalar(0) || lambda > Scalar(1)) throw Error("render_loss: lambda must lie in [0, 1]");
  auto l1 = l1_loss(pred, target);
  LossAndGrad<Scalar> out;
  out.value = (Scalar(1) - lambda) * l1.value;
  out.grad = Image<Scalar>(pred.width, pred.height);
  out.grad.rgb = (Scalar(1) - lambda) * l1.grad.rgb;
  if (lambda > Scalar(0)) {
    const auto s = ssim(pred, target);
    out.value += lambda * (Scalar(1) - s.value) / Scalar(2);
    out.grad.rgb -= (lambda / Scalar(2)) * s.grad.rgb;
  }
  return out;
}

/// L1 between the masked target (zero outside the mask) and an object render.
template <typename Scalar>
LossAndGrad<Scalar> object_loss(const Image<Scalar>& object_render, const Image<Scalar>& target,
                                const BinaryMask& mask) {
  detail::require_same_shape(object_render.width, object_render.height, target.width, target.height, "object_loss");
  if (mask.rows() != target.height || mask.cols() != target.width) throw Error("object_loss: mask shape mismatch");
  Image<Scalar> masked(target.width, target.height);
  masked.rgb = target.rgb.colwise() * mask_weights<Scalar>(mask);
  return l1_loss(object_render, masked);
}

}  // namespace segsplat

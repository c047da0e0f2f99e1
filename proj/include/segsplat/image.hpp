#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "segsplat/core.hpp"

namespace segsplat {

using BinaryMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IdMap = Eigen::Array<std::uint32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// RGB image, one row per pixel (row index = y * width + x).
template <typename Scalar>
struct Image {
  using Pixels = Eigen::Array<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

  int width = 0;
  int height = 0;
  Pixels rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(Pixels::Zero(static_cast<Eigen::Index>(w) * h, 3)) {}

  Eigen::Index pixel_count() const { return static_cast<Eigen::Index>(width) * height; }
  Eigen::Index index(int x, int y) const { return static_cast<Eigen::Index>(y) * width + x; }
  auto at(int x, int y) { return rgb.row(index(x, y)); }
  auto at(int x, int y) const { return rgb.row(index(x, y)); }

  template <typename Other>
  Image<Other> cast() const {
    Image<Other> out;
    out.width = width;
    out.height = height;
    out.rgb = rgb.template cast<Other>();
    return out;
  }
};

using Imaged = Image<double>;
using Imagef = Image<float>;

inline Eigen::Index pixel_count(const BinaryMask& m) { return m.count(); }

/// Intersection over union; two empty masks are considered identical (1.0).
inline double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error("iou: mask size mismatch");
  const auto inter = (a && b).count();
  const auto uni = (a || b).count();
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Pixels equal to `id`.
inline BinaryMask select_id(const IdMap& map, std::uint32_t id) { return map == id; }

/// Mask -> per-pixel 0/1 weights with the image's pixel layout.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> mask_weights(const BinaryMask& m) {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> w(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) w(i) = m.data()[i] ? Scalar(1) : Scalar(0);
  return w;
}

/// Threshold a per-pixel scalar plane (e.g. accumulated alpha) into a mask.
template <typename Derived>
BinaryMask binarize(const Eigen::ArrayBase<Derived>& plane, int width, int height, double threshold) {
  BinaryMask m(height, width);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = plane(i) > threshold;
  return m;
}

}  // namespace segsplat

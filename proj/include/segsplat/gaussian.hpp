#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "segsplat/core.hpp"

namespace segsplat {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Scalar logit(Scalar p) {
  return std::log(p / (Scalar(1) - p));
}

/// Single splat primitive. Opacity and scale are stored pre-activation
/// (sigmoid and exp respectively); rotation is a (w, x, y, z) quaternion.
template <typename Scalar>
struct Gaussian {
  Vec3<Scalar> mean = Vec3<Scalar>::Zero();
  Vec4<Scalar> rotation{1, 0, 0, 0};
  Vec3<Scalar> log_scale = Vec3<Scalar>::Zero();
  Scalar opacity_logit = 0;
  Vec3<Scalar> color = Vec3<Scalar>::Zero();
  ObjectIds ids;
};

/// Structure-of-arrays Gaussian store.
template <typename Scalar>
struct GaussianCloud {
  std::vector<Vec3<Scalar>> means;
  std::vector<Vec4<Scalar>> rotations;
  std::vector<Vec3<Scalar>> log_scales;
  std::vector<Scalar> opacity_logits;
  std::vector<Vec3<Scalar>> colors;
  std::vector<ObjectIds> ids;

  std::size_t size() const { return means.size(); }
  bool empty() const { return means.empty(); }

  void reserve(std::size_t n) {
    means.reserve(n);
    rotations.reserve(n);
    log_scales.reserve(n);
    opacity_logits.reserve(n);
    colors.reserve(n);
    ids.reserve(n);
  }

  void push_back(const Gaussian<Scalar>& g) {
    means.push_back(g.mean);
    rotations.push_back(g.rotation);
    log_scales.push_back(g.log_scale);
    opacity_logits.push_back(g.opacity_logit);
    colors.push_back(g.color);
    ids.push_back(g.ids);
  }

  Gaussian<Scalar> get(std::size_t i) const {
    return {means[i], rotations[i], log_scales[i], opacity_logits[i], colors[i], ids[i]};
  }

  void append(const GaussianCloud& other) {
    for (std::size_t i = 0; i < other.size(); ++i) push_back(other.get(i));
  }

  GaussianCloud subset(std::span<const std::uint32_t> indices) const {
    GaussianCloud out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(get(i));
    return out;
  }

  /// Removes every Gaussian whose flag is set.
  void erase(const std::vector<bool>& remove) {
    std::size_t w = 0;
    for (std::size_t r = 0; r < size(); ++r) {
      if (remove[r]) continue;
      if (w != r) {
        means[w] = means[r];
        rotations[w] = rotations[r];
        log_scales[w] = log_scales[r];
        opacity_logits[w] = opacity_logits[r];
        colors[w] = colors[r];
        ids[w] = ids[r];
      }
      ++w;
    }
    means.resize(w);
    rotations.resize(w);
    log_scales.resize(w);
    opacity_logits.resize(w);
    colors.resize(w);
    ids.resize(w);
  }

  Scalar opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }
  Vec3<Scalar> scale(std::size_t i) const { return log_scales[i].array().exp().matrix(); }

  template <typename Other>
  GaussianCloud<Other> cast() const {
    GaussianCloud<Other> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) {
      out.means.push_back(means[i].template cast<Other>());
      out.rotations.push_back(rotations[i].template cast<Other>());
      out.log_scales.push_back(log_scales[i].template cast<Other>());
      out.opacity_logits.push_back(Other(opacity_logits[i]));
      out.colors.push_back(colors[i].template cast<Other>());
      out.ids.push_back(ids[i]);
    }
    return out;
  }
};

/// Gradients with the same layout as GaussianCloud, plus the screen-space
/// mean gradient used for densification statistics.
template <typename Scalar>
struct GaussianGrads {
  std::vector<Vec3<Scalar>> means;
  std::vector<Vec4<Scalar>> rotations;
  std::vector<Vec3<Scalar>> log_scales;
  std::vector<Scalar> opacity_logits;
  std::vector<Vec3<Scalar>> colors;
  std::vector<Vec2<Scalar>> means2d;

  explicit GaussianGrads(std::size_t n = 0) { resize(n); }

  void resize(std::size_t n) {
    means.assign(n, Vec3<Scalar>::Zero());
    rotations.assign(n, Vec4<Scalar>::Zero());
    log_scales.assign(n, Vec3<Scalar>::Zero());
    opacity_logits.assign(n, Scalar(0));
    colors.assign(n, Vec3<Scalar>::Zero());
    means2d.assign(n, Vec2<Scalar>::Zero());
  }

  std::size_t size() const { return means.size(); }

  void add_scaled(const GaussianGrads& other, Scalar s) {
    for (std::size_t i = 0; i < size(); ++i) {
      means[i] += s * other.means[i];
      rotations[i] += s * other.rotations[i];
      log_scales[i] += s * other.log_scales[i];
      opacity_logits[i] += s * other.opacity_logits[i];
      colors[i] += s * other.colors[i];
      means2d[i] += s * other.means2d[i];
    }
  }
};

/// Rotation matrix of a unit quaternion (w, x, y, z).
template <typename Scalar>
Mat3<Scalar> rotation_matrix(const Vec4<Scalar>& q) {
  const Scalar w = q(0), x = q(1), y = q(2), z = q(3);
  Mat3<Scalar> r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// Pulls dL/dR back onto the unit quaternion components.
template <typename Scalar>
Vec4<Scalar> rotation_matrix_vjp(const Vec4<Scalar>& q, const Mat3<Scalar>& dR) {
  const Scalar w = q(0), x = q(1), y = q(2), z = q(3);
  Vec4<Scalar> g;
  g(0) = 2 * (-z * dR(0, 1) + y * dR(0, 2) + z * dR(1, 0) - x * dR(1, 2) - y * dR(2, 0) + x * dR(2, 1));
  g(1) = 2 * (y * dR(0, 1) + z * dR(0, 2) + y * dR(1, 0) - 2 * x * dR(1, 1) - w * dR(1, 2) + z * dR(2, 0) +
              w * dR(2, 1) - 2 * x * dR(2, 2));
  g(2) = 2 * (-2 * y * dR(0, 0) + x * dR(0, 1) + w * dR(0, 2) + x * dR(1, 0) + z * dR(1, 2) - w * dR(2, 0) +
              z * dR(2, 1) - 2 * y * dR(2, 2));
  g(3) = 2 * (-2 * z * dR(0, 0) - w * dR(0, 1) + x * dR(0, 2) + w * dR(1, 0) - 2 * z * dR(1, 1) + y * dR(1, 2) +
              x * dR(2, 0) + y * dR(2, 1));
  return g;
}

/// Covariance R S S^T R^T from a (possibly unnormalized) quaternion and log scales.
template <typename Scalar>
Mat3<Scalar> covariance(const Vec4<Scalar>& rotation, const Vec3<Scalar>& log_scale) {
  const Mat3<Scalar> r = rotation_matrix<Scalar>(rotation.normalized());
  const Mat3<Scalar> m = r * log_scale.array().exp().matrix().asDiagonal();
  return m * m.transpose();
}

/// Unnormalized Gaussian kernel exp(-1/2 (x - mean)^T cov^-1 (x - mean)).
template <typename Scalar, int Dim>
Scalar eval_gaussian(const Eigen::Matrix<Scalar, Dim, 1>& x, const Eigen::Matrix<Scalar, Dim, 1>& mean,
                     const Eigen::Matrix<Scalar, Dim, Dim>& cov) {
  Eigen::LLT<Eigen::Matrix<Scalar, Dim, Dim>> llt(cov);
  if (llt.info() != Eigen::Success) throw Error("eval_gaussian: covariance is not positive definite");
  const Eigen::Matrix<Scalar, Dim, 1> d = x - mean;
  const Scalar q = d.dot(llt.solve(d));
  return std::exp(Scalar(-0.5) * q);
}

}  // namespace segsplat

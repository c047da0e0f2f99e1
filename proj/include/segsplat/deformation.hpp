#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "segsplat/core.hpp"
#include "segsplat/gaussian.hpp"

namespace segsplat {

/// Concatenates v with (sin(2^k pi v), cos(2^k pi v)) for k = 0..L-1.
/// Output length is dim(v) * (2L + 1).
template <typename Scalar>
VecX<Scalar> positional_encoding(const VecX<Scalar>& v, int frequencies) {
  if (frequencies < 0) throw Error("positional_encoding: negative frequency count");
  const Eigen::Index d = v.size();
  VecX<Scalar> out(d * (2 * frequencies + 1));
  out.head(d) = v;
  for (int k = 0; k < frequencies; ++k) {
    const Scalar f = std::ldexp(std::numbers::pi_v<Scalar>, k);
    for (Eigen::Index i = 0; i < d; ++i) {
      out(d * (1 + 2 * k) + i) = std::sin(f * v(i));
      out(d * (2 + 2 * k) + i) = std::cos(f * v(i));
    }
  }
  return out;
}

struct DeformationConfig {
  int hidden_layers = 6;
  int width = 128;
  int position_frequencies = 10;
  int time_frequencies = 6;
};

/// MLP mapping (encoded position, encoded time) to per-Gaussian offsets
/// (dx: 3, dq: 4, dlog_scale: 3). The output layer starts at zero so a fresh
/// field is the identity deformation.
template <typename Scalar>
class DeformationField {
 public:
  static constexpr int kOutputDim = 10;

  struct Layer {
    MatX<Scalar> weight;
    VecX<Scalar> bias;
  };

  struct Cache {
    std::vector<MatX<Scalar>> activations;  // activations[0] is the input batch
  };

  DeformationField() = default;

  DeformationField(const DeformationConfig& config, std::uint64_t seed) : config_(config) {
    if (config.hidden_layers < 1 || config.width < 1) throw Error("deformation field needs at least one hidden layer");
    std::mt19937_64 rng(seed);
    int fan_in = input_dim();
    for (int l = 0; l < config.hidden_layers; ++l) {
      layers_.push_back(uniform_layer(config.width, fan_in, rng));
      fan_in = config.width;
    }
    layers_.push_back({MatX<Scalar>::Zero(kOutputDim, fan_in), VecX<Scalar>::Zero(kOutputDim)});
  }

  const DeformationConfig& config() const { return config_; }
  int input_dim() const {
    return 3 * (2 * config_.position_frequencies + 1) + (2 * config_.time_frequencies + 1);
  }
  int position_dim() const { return 3 * (2 * config_.position_frequencies + 1); }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Zero-valued layers with this field's shapes, for gradient accumulation.
  std::vector<Layer> zero_like() const {
    std::vector<Layer> out;
    for (const auto& l : layers_)
      out.push_back({MatX<Scalar>::Zero(l.weight.rows(), l.weight.cols()), VecX<Scalar>::Zero(l.bias.size())});
    return out;
  }

  /// Encoded network input for a batch of positions at one time (columns).
  MatX<Scalar> encode(const std::vector<Vec3<Scalar>>& positions, Scalar time) const {
    MatX<Scalar> input(input_dim(), static_cast<Eigen::Index>(positions.size()));
    VecX<Scalar> t(1);
    t(0) = time;
    const VecX<Scalar> et = positional_encoding<Scalar>(t, config_.time_frequencies);
    for (std::size_t i = 0; i < positions.size(); ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      input.col(c).head(position_dim()) = positional_encoding<Scalar>(positions[i], config_.position_frequencies);
      input.col(c).tail(et.size()) = et;
    }
    return input;
  }

  MatX<Scalar> forward(const MatX<Scalar>& input, Cache* cache = nullptr) const {
    MatX<Scalar> h = input;
    if (cache) {
      cache->activations.clear();
      cache->activations.push_back(input);
    }
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      h = ((layers_[l].weight * h).colwise() + layers_[l].bias).cwiseMax(Scalar(0));
      if (cache) cache->activations.push_back(h);
    }
    return (layers_.back().weight * h).colwise() + layers_.back().bias;
  }

  /// Accumulates parameter gradients into `grads` and returns dL/dinput.
  MatX<Scalar> backward(const Cache& cache, const MatX<Scalar>& d_out, std::vector<Layer>& grads) const {
    MatX<Scalar> d = d_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const MatX<Scalar>& h_in = cache.activations[l];
      grads[l].weight.noalias() += d * h_in.transpose();
      grads[l].bias += d.rowwise().sum();
      MatX<Scalar> d_in = layers_[l].weight.transpose() * d;
      if (l > 0) d_in = (h_in.array() > Scalar(0)).select(d_in, Scalar(0));
      d = std::move(d_in);
    }
    return d;
  }

 private:
  static Layer uniform_layer(int rows, int cols, std::mt19937_64& rng) {
    const Scalar bound = Scalar(1) / std::sqrt(Scalar(cols));
    std::uniform_real_distribution<double> dist(-double(bound), double(bound));
    Layer layer{MatX<Scalar>(rows, cols), VecX<Scalar>(rows)};
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) layer.weight(r, c) = Scalar(dist(rng));
    for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = Scalar(dist(rng));
    return layer;
  }

  DeformationConfig config_;
  std::vector<Layer> layers_;
};

/// Gaussians displaced by a deformation field at a given time, with the
/// network state needed for the backward pass.
template <typename Scalar>
struct DeformedCloud {
  GaussianCloud<Scalar> cloud;
  typename DeformationField<Scalar>::Cache cache;
  Scalar time = 0;
};

/// `network_positions` overrides the positions fed to the field (the
/// additive offsets still apply to `cloud.means`).
template <typename Scalar>
DeformedCloud<Scalar> deform(const GaussianCloud<Scalar>& cloud, const DeformationField<Scalar>& field, Scalar time,
                             const std::vector<Vec3<Scalar>>* network_positions = nullptr) {
  DeformedCloud<Scalar> out;
  out.time = time;
  out.cloud = cloud;
  if (cloud.empty()) return out;
  const auto& inputs = network_positions ? *network_positions : cloud.means;
  const MatX<Scalar> offsets = field.forward(field.encode(inputs, time), &out.cache);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    out.cloud.means[i] = cloud.means[i] + offsets.col(c).template segment<3>(0);
    out.cloud.rotations[i] = cloud.rotations[i] + offsets.col(c).template segment<4>(3);
    out.cloud.log_scales[i] = cloud.log_scales[i] + offsets.col(c).template segment<3>(7);
  }
  return out;
}

/// Pulls gradients on the deformed Gaussians back to the canonical Gaussians
/// and the field weights. With `through_position_input` false the encoded
/// position is treated as a constant (only the additive path reaches the mean).
template <typename Scalar>
void deform_backward(const GaussianCloud<Scalar>& cloud, const DeformationField<Scalar>& field,
                     const DeformedCloud<Scalar>& state, const GaussianGrads<Scalar>& d_deformed,
                     GaussianGrads<Scalar>& d_cloud, std::vector<typename DeformationField<Scalar>::Layer>& d_field,
                     bool through_position_input) {
  const std::size_t n = cloud.size();
  if (n == 0) return;
  MatX<Scalar> d_out(DeformationField<Scalar>::kOutputDim, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    d_out.col(c).template segment<3>(0) = d_deformed.means[i];
    d_out.col(c).template segment<4>(3) = d_deformed.rotations[i];
    d_out.col(c).template segment<3>(7) = d_deformed.log_scales[i];
    d_cloud.means[i] += d_deformed.means[i];
    d_cloud.rotations[i] += d_deformed.rotations[i];
    d_cloud.log_scales[i] += d_deformed.log_scales[i];
    d_cloud.opacity_logits[i] += d_deformed.opacity_logits[i];
    d_cloud.colors[i] += d_deformed.colors[i];
    d_cloud.means2d[i] += d_deformed.means2d[i];
  }
  const MatX<Scalar> d_input = field.backward(state.cache, d_out, d_field);
  if (!through_position_input) return;
  const int frequencies = field.config().position_frequencies;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    Vec3<Scalar> g = d_input.col(c).template head<3>();
    for (int k = 0; k < frequencies; ++k) {
      const Scalar f = std::ldexp(std::numbers::pi_v<Scalar>, k);
      for (int a = 0; a < 3; ++a) {
        const Scalar x = f * cloud.means[i](a);
        g(a) += d_input(3 * (1 + 2 * k) + a, c) * f * std::cos(x) - d_input(3 * (2 + 2 * k) + a, c) * f * std::sin(x);
      }
    }
    d_cloud.means[i] += g;
  }
}

}  // namespace segsplat

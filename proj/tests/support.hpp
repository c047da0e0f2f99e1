#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "segsplat/camera.hpp"
#include "segsplat/gaussian.hpp"
#include "segsplat/rasterizer.hpp"

namespace segsplat::testing {

// Random Gaussians in front of a camera looking down +z from the origin.
inline GaussianCloud<double> random_cloud(std::mt19937_64& rng, int n, double spread = 0.6) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  GaussianCloud<double> cloud;
  for (int i = 0; i < n; ++i) {
    Gaussian<double> g;
    g.mean = {spread * u(rng), spread * u(rng), 3.0 + u(rng)};
    g.rotation = Vec4<double>(u(rng), u(rng), u(rng), u(rng)).normalized();
    g.log_scale = {std::log(0.08 + 0.12 * u01(rng)), std::log(0.08 + 0.12 * u01(rng)),
                   std::log(0.08 + 0.12 * u01(rng))};
    g.opacity_logit = 2.0 * u(rng);
    g.color = {u01(rng), u01(rng), u01(rng)};
    g.ids.small = static_cast<ObjectId>(i % 3 + 1);
    cloud.push_back(g);
  }
  return cloud;
}

inline Camerad front_camera(int w, int h, double focal) {
  return Camerad::look_at({0, 0, 0}, {0, 0, 1}, {0, -1, 0}, focal, w, h);
}

struct NaiveRender {
  Imaged image;
  Eigen::ArrayXd alpha;
};

// Per-pixel front-to-back compositing with no tiling, no footprint culling and no early exit.
inline NaiveRender naive_composite(const std::vector<Splat2D<double>>& splats, int w, int h, double max_alpha) {
  NaiveRender out{Imaged(w, h), Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(w) * h)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double t = 1.0;
      Eigen::Vector3d c = Eigen::Vector3d::Zero();
      for (const auto& s : splats) {
        const Eigen::Vector2d d(x - s.mean2d.x(), y - s.mean2d.y());
        const double q = d.dot(s.cov2d.inverse() * d);
        const double a = std::min(max_alpha, s.opacity * std::exp(-0.5 * q));
        c += s.color * a * t;
        t *= 1.0 - a;
      }
      out.image.at(x, y) = c.transpose().array();
      out.alpha(static_cast<Eigen::Index>(y) * w + x) = 1.0 - t;
    }
  return out;
}

}  // namespace segsplat::testing

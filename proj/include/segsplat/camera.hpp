#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "segsplat/core.hpp"

namespace segsplat {

/// Pinhole camera. World-to-camera transform x_cam = R x + t; +z looks forward,
/// +x right, +y down. Pixel (i, j) is sampled at image coordinate (i, j).
template <typename Scalar>
struct Camera {
  Scalar fx = 1;
  Scalar fy = 1;
  Scalar cx = 0;
  Scalar cy = 0;
  int width = 0;
  int height = 0;
  Mat3<Scalar> rotation = Mat3<Scalar>::Identity();
  Vec3<Scalar> translation = Vec3<Scalar>::Zero();
  int frame_index = 0;
  Scalar time = 0;

  Vec3<Scalar> to_camera(const Vec3<Scalar>& world) const { return rotation * world + translation; }
  Vec3<Scalar> center() const { return -rotation.transpose() * translation; }

  /// Pixel coordinates of a camera-space point (z must be positive).
  Vec2<Scalar> project(const Vec3<Scalar>& cam) const {
    return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
  }

  bool contains(const Vec2<Scalar>& px) const {
    return px.x() >= Scalar(-0.5) && px.y() >= Scalar(-0.5) && px.x() < Scalar(width) - Scalar(0.5) &&
           px.y() < Scalar(height) - Scalar(0.5);
  }

  /// Camera at `eye` looking at `target`; `up` is the approximate world up.
  static Camera look_at(const Vec3<Scalar>& eye, const Vec3<Scalar>& target, const Vec3<Scalar>& up, Scalar focal,
                        int w, int h) {
    Camera cam;
    const Vec3<Scalar> forward = (target - eye).normalized();
    const Vec3<Scalar> right = forward.cross(up).normalized();
    const Vec3<Scalar> down = forward.cross(right);
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.fx = cam.fy = focal;
    cam.cx = Scalar(w - 1) / 2;
    cam.cy = Scalar(h - 1) / 2;
    cam.width = w;
    cam.height = h;
    return cam;
  }

  template <typename Other>
  Camera<Other> cast() const {
    Camera<Other> c;
    c.fx = Other(fx);
    c.fy = Other(fy);
    c.cx = Other(cx);
    c.cy = Other(cy);
    c.width = width;
    c.height = height;
    c.rotation = rotation.template cast<Other>();
    c.translation = translation.template cast<Other>();
    c.frame_index = frame_index;
    c.time = Other(time);
    return c;
  }
};

using Camerad = Camera<double>;

}  // namespace segsplat

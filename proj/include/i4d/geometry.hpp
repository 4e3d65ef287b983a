#pragma once

// Pinhole camera model and rigid transforms.
//
// Conventions: right-handed, +z forward in the camera frame, image origin at
// the top-left with y pointing down. Integer pixel coordinates are pixel
// centers. Poses are stored camera-to-world.

#include "i4d/error.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <string>

namespace i4d {

template <typename Scalar>
struct Intrinsics {
  using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

  Scalar fx{1};
  Scalar fy{1};
  Scalar cx{0};
  Scalar cy{0};
  int width{1};
  int height{1};

  /// Symmetric frustum with the principal point at the image center.
  static Intrinsics from_fov_y(Scalar fov_y_deg, int w, int h) {
    const Scalar half = Scalar(0.5) * fov_y_deg * Scalar(M_PI / 180.0);
    const Scalar f = Scalar(0.5) * Scalar(h) / std::tan(half);
    return {f, f, Scalar(0.5) * Scalar(w - 1), Scalar(0.5) * Scalar(h - 1), w, h};
  }

  void validate() const {
    require(fx > 0 && fy > 0, "intrinsics: focal lengths must be positive");
    require(width > 0 && height > 0, "intrinsics: image size must be positive");
    require(cx >= 0 && cx < Scalar(width) && cy >= 0 && cy < Scalar(height),
            "intrinsics: principal point outside the image");
  }

  [[nodiscard]] Mat3 matrix() const {
    Mat3 k = Mat3::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }

  /// Same field of view at a different resolution.
  [[nodiscard]] Intrinsics resized(int w, int h) const {
    const Scalar sx = Scalar(w) / Scalar(width);
    const Scalar sy = Scalar(h) / Scalar(height);
    return {fx * sx, fy * sy, (cx + Scalar(0.5)) * sx - Scalar(0.5), (cy + Scalar(0.5)) * sy - Scalar(0.5), w, h};
  }

  [[nodiscard]] bool contains(const Vec2& pixel) const {
    return pixel.x() >= Scalar(-0.5) && pixel.y() >= Scalar(-0.5) && pixel.x() < Scalar(width) - Scalar(0.5) &&
           pixel.y() < Scalar(height) - Scalar(0.5);
  }

  template <typename Other>
  [[nodiscard]] Intrinsics<Other> cast() const {
    return {Other(fx), Other(fy), Other(cx), Other(cy), width, height};
  }
};

/// Rigid transform in SE(3), stored camera-to-world.
template <typename Scalar>
class Pose {
 public:
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  using Mat4 = Eigen::Matrix<Scalar, 4, 4>;

  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation) : rotation_(rotation), translation_(translation) {}

  static Pose identity() { return {}; }

  /// Rejects matrices whose rotation block is not orthonormal with det +1.
  static Pose from_matrix(const Mat4& m, Scalar tolerance = Scalar(1e-6)) {
    const Mat3 r = m.template topLeftCorner<3, 3>();
    const Scalar err = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= tolerance) || !(std::abs(r.determinant() - Scalar(1)) <= tolerance)) {
      throw InvalidInput("pose: rotation block is not a proper rotation");
    }
    if (!m.allFinite()) throw InvalidInput("pose: non-finite entries");
    return {r, m.template topRightCorner<3, 1>()};
  }

  /// Orthonormal frame looking from `eye` toward `target`; `up` is a world direction.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 z = (target - eye).normalized();
    const Vec3 x = z.cross(up).normalized();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    return {r, eye};
  }

  [[nodiscard]] const Mat3& rotation() const { return rotation_; }
  [[nodiscard]] const Vec3& translation() const { return translation_; }
  [[nodiscard]] const Vec3& center() const { return translation_; }

  [[nodiscard]] Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.template topLeftCorner<3, 3>() = rotation_;
    m.template topRightCorner<3, 1>() = translation_;
    return m;
  }

  [[nodiscard]] Pose inverse() const {
    const Mat3 rt = rotation_.transpose();
    return {rt, -(rt * translation_)};
  }

  [[nodiscard]] Pose operator*(const Pose& rhs) const {
    return {rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_};
  }

  [[nodiscard]] Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

  [[nodiscard]] Vec3 to_camera(const Vec3& world) const { return rotation_.transpose() * (world - translation_); }

  template <typename Other>
  [[nodiscard]] Pose<Other> cast() const {
    return {rotation_.template cast<Other>(), translation_.template cast<Other>()};
  }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

template <typename Scalar>
struct Projection {
  Eigen::Matrix<Scalar, 2, 1> pixel;
  Scalar depth;
};

/// World point to pixel. Empty when the point is not in front of the camera.
template <typename Scalar>
std::optional<Projection<Scalar>> project(const Eigen::Matrix<Scalar, 3, 1>& world, const Pose<Scalar>& cam_to_world,
                                          const Intrinsics<Scalar>& k) {
  const Eigen::Matrix<Scalar, 3, 1> c = cam_to_world.to_camera(world);
  if (!(c.z() > Scalar(0))) return std::nullopt;
  return Projection<Scalar>{{k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy}, c.z()};
}

/// Pixel plus z-depth to world point.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> back_project(const Eigen::Matrix<Scalar, 2, 1>& pixel, Scalar depth,
                                         const Pose<Scalar>& cam_to_world, const Intrinsics<Scalar>& k) {
  if (!(depth > Scalar(0)) || !std::isfinite(double(depth))) {
    throw InvalidInput("back_project: depth must be positive and finite");
  }
  const Eigen::Matrix<Scalar, 3, 1> c{(pixel.x() - k.cx) * depth / k.fx, (pixel.y() - k.cy) * depth / k.fy, depth};
  return cam_to_world * c;
}

}  // namespace i4d

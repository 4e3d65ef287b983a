#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace i4d {

/// Single-channel H x W raster (depth, alpha, probability, ...), row-major.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mask = Plane<std::uint8_t>;

/// Interleaved RGB raster; pixel (x, y) lives in row y * width + x.
template <typename Scalar>
struct RgbImage {
  using Pixels = Eigen::Array<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

  int width{0};
  int height{0};
  Pixels pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(Pixels::Zero(Eigen::Index(w) * h, 3)) {}

  [[nodiscard]] Eigen::Index index(int x, int y) const { return Eigen::Index(y) * width + x; }
  Scalar& operator()(int x, int y, int c) { return pixels(index(x, y), c); }
  Scalar operator()(int x, int y, int c) const { return pixels(index(x, y), c); }

  [[nodiscard]] bool empty() const { return width == 0 || height == 0; }
  [[nodiscard]] bool same_shape(const RgbImage& other) const {
    return width == other.width && height == other.height;
  }

  template <typename Other>
  [[nodiscard]] RgbImage<Other> cast() const {
    RgbImage<Other> out;
    out.width = width;
    out.height = height;
    out.pixels = pixels.template cast<Other>();
    return out;
  }
};

}  // namespace i4d

#pragma once

// Image and point-cloud file formats: PFM, PNG, JPEG, binary PLY.

#include "i4d/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace i4d {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// --- PFM: "Pf" (1 channel) or "PF" (3 channels); negative scale = little endian.
// Rows are stored bottom-to-top on disk and returned top-to-bottom.

struct PfmImage {
  int width{0};
  int height{0};
  int channels{1};
  std::vector<float> data;  // row-major, top row first, channels interleaved
};

/// `name` is used in error messages. Truncation errors report the byte offset.
PfmImage decode_pfm(const std::string& bytes, const std::string& name = "<memory>");
std::string encode_pfm(const PfmImage& image);

Plane<float> read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Plane<float>& plane);

// --- PNG / JPEG, 8-bit.

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

template <typename Scalar>
RgbImage<Scalar> quantize8(const RgbImage<Scalar>& img) {
  RgbImage<Scalar> out = img;
  for (auto& v : out.pixels.reshaped()) v = Scalar(to_u8(double(v))) / Scalar(255);
  return out;
}

/// Accepts gray, gray+alpha, RGB and RGBA at 8 or 16 bits; alpha is dropped.
RgbImage<float> decode_png(const std::string& bytes, const std::string& name = "<memory>");
std::string encode_png(const RgbImage<float>& image);
RgbImage<float> read_png(const std::string& path);
void write_png(const std::string& path, const RgbImage<float>& image);
/// 1-bit grayscale PNG, nonzero = white.
void write_mask_png(const std::string& path, const Mask& mask);
Mask read_mask_png(const std::string& path);

std::string encode_jpeg(const RgbImage<float>& image, int quality = 85);
RgbImage<float> decode_jpeg(const std::string& bytes);

// --- Binary little-endian PLY with a single "vertex" element.

enum class PlyType { Float32, Float64, UInt8, Int32, UInt32 };

struct PlyProperty {
  std::string name;
  PlyType type{PlyType::Float32};
};

struct PlyTable {
  std::vector<PlyProperty> properties;
  Eigen::MatrixXd rows;  // one row per vertex, one column per property

  [[nodiscard]] Eigen::Index column(const std::string& name) const;
};

std::string encode_ply(const PlyTable& table);
PlyTable decode_ply(const std::string& bytes, const std::string& name = "<memory>");
void write_ply(const std::string& path, const PlyTable& table);
PlyTable read_ply(const std::string& path);

}  // namespace i4d

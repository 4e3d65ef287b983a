#pragma once

// Calibrated video bundle: manifest.json plus per-frame RGB (PNG), depth
// (PFM) and low-resolution motion-probability (PFM) files.

#include "i4d/geometry.hpp"
#include "i4d/image.hpp"

#include <string>
#include <vector>

namespace i4d {

struct BundleFrame {
  RgbImage<float> rgb;
  Plane<float> depth;   // <= 0 or non-finite = invalid
  Plane<float> motion;  // probabilities in [0, 1], (H/8) x (W/8)
  Pose<double> pose;    // camera-to-world
  double t{0};
  std::string rgb_file, depth_file, motion_file;  // relative to the bundle directory
};

struct CalibratedBundle {
  int version{1};
  double fps{30};
  int width{0};
  int height{0};
  Intrinsics<double> intrinsics;
  std::vector<BundleFrame> frames;

  [[nodiscard]] int n_frames() const { return static_cast<int>(frames.size()); }
  [[nodiscard]] double video_length() const { return double(frames.size()) / fps; }
  [[nodiscard]] double focal_mean() const { return 0.5 * (intrinsics.fx + intrinsics.fy); }

  /// Throws InvalidInput describing the first inconsistency.
  void validate() const;
};

std::string frame_file_name(const char* kind, int index, const char* ext);

/// Loads and validates. Errors name the offending file.
CalibratedBundle load_bundle(const std::string& dir);

/// Writes manifest.json and every frame file (camera-to-world, probability encoding).
void save_bundle(const CalibratedBundle& bundle, const std::string& dir);

}  // namespace i4d

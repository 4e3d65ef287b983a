#pragma once

// Motion-probability maps -> binary static/dynamic masks.
//
// Low-resolution probability maps are padded with pseudo-frames at both ends,
// upsampled with align-corners bilinear interpolation and pooled into one
// histogram. A single Otsu threshold over that histogram is applied to every
// real frame.

#include "i4d/error.hpp"
#include "i4d/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace i4d {

/// Frame index carried by pseudo-frames; never emitted as a mask.
inline constexpr int kPseudoFrame = -1;

template <typename Scalar>
struct MotionProbMap {
  Plane<Scalar> values;  // (H/8) x (W/8), each in [0, 1]
  int frame{0};
};

/// Align-corners bilinear interpolation to height x width.
template <typename Scalar>
Plane<Scalar> upsample_prob(const Plane<Scalar>& map, int height, int width) {
  require(map.size() > 0, "upsample_prob: empty map");
  require(height >= map.rows() && width >= map.cols(), "upsample_prob: target smaller than source");
  const Eigen::Index rows = map.rows(), cols = map.cols();
  const double sy = height > 1 ? double(rows - 1) / double(height - 1) : 0.0;
  const double sx = width > 1 ? double(cols - 1) / double(width - 1) : 0.0;

  std::vector<Eigen::Index> x0(width), x1(width);
  std::vector<Scalar> fx(width);
  for (int x = 0; x < width; ++x) {
    const double p = x * sx;
    x0[x] = std::min<Eigen::Index>(Eigen::Index(p), cols - 1);
    x1[x] = std::min<Eigen::Index>(x0[x] + 1, cols - 1);
    fx[x] = Scalar(p - double(x0[x]));
  }
  Plane<Scalar> out(height, width);
  for (int y = 0; y < height; ++y) {
    const double p = y * sy;
    const Eigen::Index y0 = std::min<Eigen::Index>(Eigen::Index(p), rows - 1);
    const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, rows - 1);
    const Scalar fy = Scalar(p - double(y0));
    for (int x = 0; x < width; ++x) {
      const Scalar top = map(y0, x0[x]) + (map(y0, x1[x]) - map(y0, x0[x])) * fx[x];
      const Scalar bottom = map(y1, x0[x]) + (map(y1, x1[x]) - map(y1, x0[x])) * fx[x];
      out(y, x) = std::clamp(top + (bottom - top) * fy, Scalar(0), Scalar(1));
    }
  }
  return out;
}

/// Bin of a probability in a `bins`-bin histogram over [0, 1].
inline int probability_bin(double v, int bins) {
  const int b = static_cast<int>(v * bins);
  return std::clamp(b, 0, bins - 1);
}

struct OtsuResult {
  /// Values with bin >= `bin` are dynamic. Equals `bins` when degenerate.
  int bin{0};
  /// bin / bins, or just above the largest value when degenerate.
  double threshold{0};
  bool degenerate{false};
};

/// Exact Otsu on a histogram: maximizes between-class variance over the
/// bin edges 1..bins-1, ties resolved toward the lower edge. `max_value`
/// positions the threshold in the degenerate single-bin case.
OtsuResult otsu_from_histogram(const std::vector<std::uint64_t>& histogram, double max_value = 1.0);

std::vector<std::uint64_t> histogram(const float* values, std::size_t n, int bins = 256);

/// Otsu threshold of a flat list of probabilities. Degenerate input returns
/// a threshold above the maximum (everything static) and logs a warning.
OtsuResult otsu_threshold(const std::vector<float>& values, int bins = 256);

/// Adds k pseudo-frames at each end. Each is the element-wise mean of the
/// nearest min(5, max(1, N - 1)) real maps at that end.
std::vector<MotionProbMap<float>> pad_pseudo_frames(const std::vector<MotionProbMap<float>>& seq, int k);

struct MaskOptions {
  int pseudo_frames{2};
  int bins{256};
  int dilate_px{0};
};

struct MaskResult {
  std::vector<Mask> masks;  // one per real frame, 1 = dynamic
  OtsuResult otsu;
};

MaskResult compute_masks(const std::vector<MotionProbMap<float>>& seq, int height, int width,
                         const MaskOptions& options = {});

/// Disk dilation of a binary mask.
Mask dilate(const Mask& mask, int radius_px);

}  // namespace i4d

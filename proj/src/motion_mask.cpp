#include "i4d/motion_mask.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace i4d {

using boost::multiprecision::int256_t;

OtsuResult otsu_from_histogram(const std::vector<std::uint64_t>& hist, double max_value) {
  const int bins = static_cast<int>(hist.size());
  require(bins >= 2, "otsu: at least 2 bins required");

  // Class values are bin indices (an affine map of bin centers, so the argmax
  // is unchanged). sigma_B(k) is proportional to (S*n0 - N*s0)^2 / (n0*n1);
  // candidates are compared as exact fractions.
  int256_t total_n = 0, total_s = 0;
  for (int b = 0; b < bins; ++b) {
    total_n += hist[b];
    total_s += int256_t(hist[b]) * b;
  }
  require(total_n > 0, "otsu: empty histogram");

  int best = -1;
  int256_t best_num = 0, best_den = 1;
  int256_t n0 = 0, s0 = 0;
  for (int k = 1; k < bins; ++k) {
    n0 += hist[k - 1];
    s0 += int256_t(hist[k - 1]) * (k - 1);
    const int256_t n1 = total_n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const int256_t diff = total_s * n0 - total_n * s0;
    const int256_t num = diff * diff;
    const int256_t den = n0 * n1;
    if (best < 0 || num * best_den > best_num * den) {
      best = k;
      best_num = num;
      best_den = den;
    }
  }

  OtsuResult out;
  if (best < 0 || best_num == 0) {
    out.degenerate = true;
    out.bin = bins;
    out.threshold = std::nextafter(max_value, std::numeric_limits<double>::infinity());
    return out;
  }
  out.bin = best;
  out.threshold = double(best) / double(bins);
  return out;
}

std::vector<std::uint64_t> histogram(const float* values, std::size_t n, int bins) {
  std::vector<std::uint64_t> h(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < n; ++i) ++h[probability_bin(values[i], bins)];
  return h;
}

OtsuResult otsu_threshold(const std::vector<float>& values, int bins) {
  require(!values.empty(), "otsu: no values");
  require(bins >= 2, "otsu: at least 2 bins required");
  const float max_value = *std::max_element(values.begin(), values.end());
  auto r = otsu_from_histogram(histogram(values.data(), values.size(), bins), max_value);
  if (r.degenerate) spdlog::warn("otsu: all values fall in one bin; every pixel classified static");
  return r;
}

std::vector<MotionProbMap<float>> pad_pseudo_frames(const std::vector<MotionProbMap<float>>& seq, int k) {
  require(!seq.empty(), "pad_pseudo_frames: empty sequence");
  require(k >= 0, "pad_pseudo_frames: k must be non-negative");
  const int n = static_cast<int>(seq.size());
  const int window = std::min(5, std::max(1, n - 1));

  auto mean_of = [&](int first) {
    Plane<float> acc = seq[first].values;
    for (int i = first + 1; i < first + window; ++i) acc += seq[i].values;
    return MotionProbMap<float>{acc / float(window), kPseudoFrame};
  };
  const auto head = mean_of(0);
  const auto tail = mean_of(n - window);

  std::vector<MotionProbMap<float>> out;
  out.reserve(seq.size() + 2 * std::size_t(k));
  for (int i = 0; i < k; ++i) out.push_back(head);
  out.insert(out.end(), seq.begin(), seq.end());
  for (int i = 0; i < k; ++i) out.push_back(tail);
  return out;
}

MaskResult compute_masks(const std::vector<MotionProbMap<float>>& seq, int height, int width,
                         const MaskOptions& options) {
  require(!seq.empty(), "compute_masks: empty sequence");
  for (const auto& m : seq) {
    require(m.values.rows() == seq.front().values.rows() && m.values.cols() == seq.front().values.cols(),
            "compute_masks: motion maps differ in shape");
  }
  const auto padded = pad_pseudo_frames(seq, options.pseudo_frames);
  const int bins = options.bins;

  // Pass 1: pooled histogram of the upsampled padded sequence.
  std::vector<std::vector<std::uint64_t>> partial(padded.size());
  std::vector<float> maxima(padded.size(), 0.0f);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < padded.size(); ++i) {
    const Plane<float> up = upsample_prob(padded[i].values, height, width);
    partial[i] = histogram(up.data(), std::size_t(up.size()), bins);
    maxima[i] = up.maxCoeff();
  }
  std::vector<std::uint64_t> pooled(static_cast<std::size_t>(bins), 0);
  for (const auto& h : partial)
    for (int b = 0; b < bins; ++b) pooled[b] += h[b];

  MaskResult out;
  out.otsu = otsu_from_histogram(pooled, *std::max_element(maxima.begin(), maxima.end()));
  if (out.otsu.degenerate) spdlog::warn("motion masks: probability maps are constant; all pixels static");

  // Pass 2: threshold the real frames.
  out.masks.resize(seq.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Plane<float> up = upsample_prob(seq[i].values, height, width);
    Mask m(height, width);
    for (Eigen::Index p = 0; p < up.size(); ++p) {
      m.data()[p] = probability_bin(up.data()[p], bins) >= out.otsu.bin ? 1 : 0;
    }
    out.masks[i] = options.dilate_px > 0 ? dilate(m, options.dilate_px) : m;
  }
  return out;
}

Mask dilate(const Mask& mask, int r) {
  if (r <= 0) return mask;
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  Mask out = Mask::Zero(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx >= 0 && xx < w && dx * dx + dy * dy <= r * r) out(yy, xx) = 1;
        }
      }
    }
  }
  return out;
}

}  // namespace i4d

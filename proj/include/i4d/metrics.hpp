#pragma once

// Image quality metrics and the photometric training loss.

#include "i4d/image.hpp"

#include <type_traits>
#include <vector>

namespace i4d {

inline constexpr double kPsnrCap = 100.0;

struct SsimParams {
  static constexpr int kRadius = 5;  // 11 x 11 window
  double sigma{1.5};
  double c1{1e-4};
  double c2{9e-4};
};

/// 10 log10(1 / MSE) over all channels, capped at kPsnrCap.
template <typename Scalar>
double psnr(const RgbImage<Scalar>& a, const RgbImage<Scalar>& b);

/// Mean local SSIM over windows that lie fully inside the image.
/// Both sides must be at least 11 x 11.
template <typename Scalar>
double ssim(const RgbImage<Scalar>& a, const RgbImage<Scalar>& b, const SsimParams& params = {});

struct MetricReport {
  std::vector<double> psnr;
  std::vector<double> ssim;
  [[nodiscard]] double mean_psnr() const;
  [[nodiscard]] double mean_ssim() const;
};

struct LossResult {
  double loss{0};
  double l1{0};
  double ssim{0};  // zero-padded, mean over all pixels and channels
};

/// L = (1 - lambda) * L1 + lambda * (1 - SSIM) with SSIM evaluated on
/// zero-padded windows centered at every pixel. Writes dL/d(rendered) into
/// `grad` (resized as needed).
template <typename Scalar>
LossResult photometric_loss(const RgbImage<Scalar>& rendered, const RgbImage<Scalar>& target, double lambda,
                            std::type_identity_t<RgbImage<Scalar>>* grad, const SsimParams& params = {});

}  // namespace i4d

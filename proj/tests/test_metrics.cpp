#include "i4d/metrics.hpp"

#include "i4d/error.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace i4d;

namespace {

RgbImage<double> random_image(int w, int h, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  RgbImage<double> img(w, h);
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels(i) = u(rng);
  return img;
}

// Direct windowed SSIM: every window sample summed explicitly, samples
// outside the image contribute zero. `valid` restricts to interior centers.
double ssim_oracle(const RgbImage<double>& a, const RgbImage<double>& b, bool valid) {
  const int r = 5;
  double g[11], gs = 0;
  for (int k = -r; k <= r; ++k) gs += g[k + r] = std::exp(-k * k / (2 * 1.5 * 1.5));
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  long count = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        if (valid && (x < r || y < r || x >= a.width - r || y >= a.height - r)) continue;
        double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int j = -r; j <= r; ++j)
          for (int i = -r; i <= r; ++i) {
            const int xx = x + i, yy = y + j;
            if (xx < 0 || yy < 0 || xx >= a.width || yy >= a.height) continue;
            const double wgt = g[i + r] * g[j + r] / (gs * gs);
            const double va = a(xx, yy, c), vb = b(xx, yy, c);
            mx += wgt * va;
            my += wgt * vb;
            mxx += wgt * va * va;
            myy += wgt * vb * vb;
            mxy += wgt * va * vb;
          }
        const double vx = mxx - mx * mx, vy = myy - my * my, cxy = mxy - mx * my;
        total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return total / double(count);
}

}  // namespace

TEST(Psnr, Examples) {
  std::mt19937_64 rng(1);
  const auto a = random_image(16, 12, rng);
  EXPECT_EQ(psnr(a, a), 100.0);
  auto b = a;
  b.pixels += 0.1;  // MSE 0.01
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_THROW(psnr(a, RgbImage<double>(12, 16)), InvalidInput);
}

TEST(Psnr, MatchesDirectSumAndIsSymmetric) {
  std::mt19937_64 rng(2);
  const auto a = random_image(37, 23, rng), b = random_image(37, 23, rng);
  long double se = 0;
  for (Eigen::Index i = 0; i < a.pixels.size(); ++i) {
    const long double d = a.pixels(i) - b.pixels(i);
    se += d * d;
  }
  const double ref = double(-10.0L * std::log10(se / a.pixels.size()));
  EXPECT_NEAR(psnr(a, b), ref, 1e-9);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
  std::mt19937_64 rng(3);
  const auto a = random_image(32, 32, rng, 0.2, 0.8);
  const auto noise = random_image(32, 32, rng, -1.0, 1.0);
  double prev = 1e9;
  for (double amp : {0.001, 0.01, 0.05, 0.1, 0.2}) {
    auto b = a;
    b.pixels += amp * noise.pixels;
    const double p = psnr(a, b);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, Examples) {
  std::mt19937_64 rng(4);
  const auto a = random_image(20, 16, rng);
  EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
  RgbImage<double> half(16, 16), neg(16, 16);
  half.pixels.setConstant(0.5);
  neg.pixels = 1.0 - half.pixels;
  EXPECT_DOUBLE_EQ(ssim(half, neg), 1.0);
  EXPECT_THROW(ssim(RgbImage<double>(10, 20), RgbImage<double>(10, 20)), InvalidInput);
  EXPECT_THROW(ssim(a, RgbImage<double>(16, 20)), InvalidInput);
}

TEST(Ssim, MatchesDirectWindowOracle) {
  std::mt19937_64 rng(5);
  const auto a = random_image(29, 21, rng), b = random_image(29, 21, rng);
  auto c = a;
  c.pixels = (c.pixels + 0.1 * b.pixels).min(1.0);
  EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b, true), 1e-9);
  EXPECT_NEAR(ssim(a, c), ssim_oracle(a, c, true), 1e-9);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
}

TEST(PhotometricLoss, IdenticalImagesGiveZero) {
  std::mt19937_64 rng(6);
  const auto a = random_image(24, 18, rng);
  RgbImage<double> grad;
  const auto r = photometric_loss(a, a, 0.2, &grad);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.ssim, 1.0);
  EXPECT_TRUE((grad.pixels == 0.0).all());

  const auto f = a.cast<float>();
  RgbImage<float> gf;
  EXPECT_EQ(photometric_loss(f, f, 0.2, &gf).loss, 0.0);
  EXPECT_TRUE((gf.pixels == 0.0f).all());
}

TEST(PhotometricLoss, ConstantOffset) {
  std::mt19937_64 rng(7);
  const auto target = random_image(24, 24, rng, 0.0, 0.8);
  auto rendered = target;
  rendered.pixels += 0.1;
  const auto r = photometric_loss(rendered, target, 0.2, nullptr);
  EXPECT_NEAR(0.8 * r.l1, 0.08, 1e-12);
  EXPECT_NEAR(r.ssim, ssim_oracle(rendered, target, false), 1e-9);
  EXPECT_NEAR(r.loss, 0.08 + 0.2 * (1 - ssim_oracle(rendered, target, false)), 1e-9);
  EXPECT_THROW(photometric_loss(rendered, RgbImage<double>(24, 23), 0.2, nullptr), InvalidInput);
}

TEST(PhotometricLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const auto target = random_image(8, 8, rng);
  auto rendered = random_image(8, 8, rng);
  // Keep every residual well away from the L1 kink.
  for (Eigen::Index i = 0; i < rendered.pixels.size(); ++i) {
    if (std::abs(rendered.pixels(i) - target.pixels(i)) < 0.01) rendered.pixels(i) = target.pixels(i) + 0.05;
  }
  RgbImage<double> grad;
  photometric_loss(rendered, target, 0.2, &grad);
  const double h = 1e-6;
  double worst = 0;
  for (Eigen::Index i = 0; i < rendered.pixels.size(); ++i) {
    auto p = rendered, m = rendered;
    p.pixels(i) += h;
    m.pixels(i) -= h;
    const double num =
        (photometric_loss(p, target, 0.2, nullptr).loss - photometric_loss(m, target, 0.2, nullptr).loss) / (2 * h);
    const double rel = std::abs(num - grad.pixels(i)) / std::max({std::abs(num), std::abs(grad.pixels(i)), 1e-9});
    worst = std::max(worst, rel);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(MetricReport, Means) {
  MetricReport r;
  EXPECT_EQ(r.mean_psnr(), 0.0);
  r.psnr = {20, 30};
  r.ssim = {0.5, 1.0};
  EXPECT_EQ(r.mean_psnr(), 25.0);
  EXPECT_EQ(r.mean_ssim(), 0.75);
}

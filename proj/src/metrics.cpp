#include "i4d/metrics.hpp"

#include "i4d/error.hpp"

#include <array>
#include <cmath>
#include <numeric>

namespace i4d {

namespace {

using Map = Plane<double>;
constexpr int kR = SsimParams::kRadius;

std::array<double, 2 * kR + 1> gaussian_window(double sigma) {
  std::array<double, 2 * kR + 1> w{};
  double sum = 0;
  for (int k = -kR; k <= kR; ++k) sum += w[std::size_t(k + kR)] = std::exp(-double(k * k) / (2 * sigma * sigma));
  for (auto& v : w) v /= sum;
  return w;
}

// Separable filtering with zero padding; output has the input's shape. The
// window is symmetric, so this operator is its own transpose.
Map blur(const Map& in, const std::array<double, 2 * kR + 1>& w) {
  const Eigen::Index h = in.rows(), wd = in.cols();
  Map tmp(h, wd), out(h, wd);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < wd; ++x) {
      double s = 0;
      for (int k = -kR; k <= kR; ++k) {
        const Eigen::Index xx = x + k;
        if (xx >= 0 && xx < wd) s += w[std::size_t(k + kR)] * in(y, xx);
      }
      tmp(y, x) = s;
    }
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < wd; ++x) {
      double s = 0;
      for (int k = -kR; k <= kR; ++k) {
        const Eigen::Index yy = y + k;
        if (yy >= 0 && yy < h) s += w[std::size_t(k + kR)] * tmp(yy, x);
      }
      out(y, x) = s;
    }
  return out;
}

template <typename Scalar>
Map channel(const RgbImage<Scalar>& img, int c) {
  Map m(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) m(y, x) = double(img(x, y, c));
  return m;
}

struct SsimTerms {
  Map mx, my, a1, a2, b1, b2, s;
};

SsimTerms ssim_terms(const Map& x, const Map& y, const std::array<double, 2 * kR + 1>& w, const SsimParams& p) {
  SsimTerms t;
  t.mx = blur(x, w);
  t.my = blur(y, w);
  const Map mxx = blur(x * x, w), myy = blur(y * y, w), mxy = blur(x * y, w);
  const Map vx = mxx - t.mx * t.mx, vy = myy - t.my * t.my, cxy = mxy - t.mx * t.my;
  t.a1 = 2 * (t.mx * t.my) + p.c1;
  t.a2 = 2 * cxy + p.c2;
  t.b1 = t.mx * t.mx + t.my * t.my + p.c1;
  t.b2 = vx + vy + p.c2;
  // Written as a product of two ratios so identical inputs give exactly 1.
  t.s = (t.a1 / t.b1) * (t.a2 / t.b2);
  return t;
}

template <typename Scalar>
void require_same_shape(const RgbImage<Scalar>& a, const RgbImage<Scalar>& b, const char* what) {
  if (!a.same_shape(b) || a.empty()) {
    throw InvalidInput(std::string(what) + ": images must be non-empty and equally sized (" + std::to_string(a.width) +
                       "x" + std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                       std::to_string(b.height) + ")");
  }
}

}  // namespace

template <typename Scalar>
double psnr(const RgbImage<Scalar>& a, const RgbImage<Scalar>& b) {
  require_same_shape(a, b, "psnr");
  const double mse = (a.pixels.template cast<double>() - b.pixels.template cast<double>()).square().mean();
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

template <typename Scalar>
double ssim(const RgbImage<Scalar>& a, const RgbImage<Scalar>& b, const SsimParams& params) {
  require_same_shape(a, b, "ssim");
  require(a.width >= 2 * kR + 1 && a.height >= 2 * kR + 1, "ssim: images must be at least 11x11");
  const auto w = gaussian_window(params.sigma);
  double sum = 0;
  for (int c = 0; c < 3; ++c) {
    const auto t = ssim_terms(channel(a, c), channel(b, c), w, params);
    // Zero padding never reaches windows centered kR or more pixels inside.
    sum += t.s.block(kR, kR, a.height - 2 * kR, a.width - 2 * kR).sum();
  }
  return sum / (3.0 * double(a.height - 2 * kR) * double(a.width - 2 * kR));
}

double MetricReport::mean_psnr() const {
  return psnr.empty() ? 0.0 : std::accumulate(psnr.begin(), psnr.end(), 0.0) / double(psnr.size());
}

double MetricReport::mean_ssim() const {
  return ssim.empty() ? 0.0 : std::accumulate(ssim.begin(), ssim.end(), 0.0) / double(ssim.size());
}

template <typename Scalar>
LossResult photometric_loss(const RgbImage<Scalar>& rendered, const RgbImage<Scalar>& target, double lambda,
                            std::type_identity_t<RgbImage<Scalar>>* grad, const SsimParams& params) {
  require_same_shape(rendered, target, "photometric_loss");
  require(lambda >= 0 && lambda <= 1, "photometric_loss: lambda must be in [0, 1]");
  const auto w = gaussian_window(params.sigma);
  const double n = 3.0 * double(rendered.width) * double(rendered.height);
  if (grad) *grad = RgbImage<Scalar>(rendered.width, rendered.height);

  LossResult r;
  std::array<Map, 3> dx;
  std::array<double, 3> l1{}, ssum{};
#pragma omp parallel for schedule(static)
  for (int c = 0; c < 3; ++c) {
    const Map x = channel(rendered, c), y = channel(target, c);
    const Map diff = x - y;
    l1[c] = diff.abs().sum();
    const auto t = ssim_terms(x, y, w, params);
    ssum[c] = t.s.sum();
    if (!grad) continue;
    // dS/d(raw moments) per window, then back through the blur.
    const Map ds_dvx = -t.s / t.b2;
    const Map ds_dcxy = 2 * t.s / t.a2;
    const Map ds_dmx = t.s * (2 * t.my / t.a1 - 2 * t.mx / t.b1) - 2 * t.mx * ds_dvx - t.my * ds_dcxy;
    const Map g_mx = blur(ds_dmx, w), g_mxx = blur(ds_dvx, w), g_mxy = blur(ds_dcxy, w);
    const Map d_ssim = g_mx + 2 * x * g_mxx + y * g_mxy;
    const Map sign = (diff > 0).cast<double>() - (diff < 0).cast<double>();
    dx[std::size_t(c)] = ((1 - lambda) * sign - lambda * d_ssim) / n;
  }
  for (int c = 0; c < 3; ++c) {
    r.l1 += l1[std::size_t(c)];
    r.ssim += ssum[std::size_t(c)];
  }
  r.l1 /= n;
  r.ssim /= n;
  r.loss = (1 - lambda) * r.l1 + lambda * (1 - r.ssim);
  if (grad) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < rendered.height; ++y)
        for (int x = 0; x < rendered.width; ++x) (*grad)(x, y, c) = Scalar(dx[std::size_t(c)](y, x));
  }
  return r;
}

template double psnr(const RgbImage<float>&, const RgbImage<float>&);
template double psnr(const RgbImage<double>&, const RgbImage<double>&);
template double ssim(const RgbImage<float>&, const RgbImage<float>&, const SsimParams&);
template double ssim(const RgbImage<double>&, const RgbImage<double>&, const SsimParams&);
template LossResult photometric_loss(const RgbImage<float>&, const RgbImage<float>&, double, RgbImage<float>*,
                                     const SsimParams&);
template LossResult photometric_loss(const RgbImage<double>&, const RgbImage<double>&, double, RgbImage<double>*,
                                     const SsimParams&);

}  // namespace i4d

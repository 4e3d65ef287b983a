#pragma once

// Reference implementations used as test oracles. Deliberately slow and
// written independently of the library code paths they check.

#include <boost/multiprecision/cpp_int.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <vector>

namespace i4d::testing {

using Rational = boost::multiprecision::cpp_rational;

/// Exhaustive between-class variance argmax over bin edges 1..bins-1 with
/// bin-center class values, in exact rational arithmetic. Returns -1 when
/// no edge separates two non-empty classes.
inline int otsu_oracle(const std::vector<std::uint64_t>& hist) {
  const int bins = static_cast<int>(hist.size());
  std::uint64_t total = 0;
  for (auto h : hist) total += h;
  int best = -1;
  Rational best_var = -1;
  for (int k = 1; k < bins; ++k) {
    // Class sums of doubled bin centers (2b + 1), in integers.
    boost::multiprecision::cpp_int n0 = 0, n1 = 0, m0 = 0, m1 = 0;
    for (int b = 0; b < bins; ++b) {
      if (b < k) {
        n0 += hist[b];
        m0 += boost::multiprecision::cpp_int(hist[b]) * (2 * b + 1);
      } else {
        n1 += hist[b];
        m1 += boost::multiprecision::cpp_int(hist[b]) * (2 * b + 1);
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const Rational w0(n0, total), w1(n1, total);
    const Rational mu0 = Rational(m0, n0 * 2 * bins), mu1 = Rational(m1, n1 * 2 * bins);
    const Rational var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (var > best_var) {
      best_var = var;
      best = k;
    }
  }
  return best;
}

/// Otsu over raw samples: for each candidate edge, splits the samples
/// directly (O(bins * n)) instead of going through a histogram.
inline int otsu_samples_oracle(const std::vector<float>& values, int bins) {
  auto bin_of = [bins](float v) {
    int b = static_cast<int>(std::floor(double(v) * bins));
    return b < 0 ? 0 : (b >= bins ? bins - 1 : b);
  };
  int best = -1;
  Rational best_var = -1;
  const Rational n = Rational(values.size());
  for (int k = 1; k < bins; ++k) {
    Rational n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (float v : values) {
      const int b = bin_of(v);
      const Rational c(2 * b + 1, 2 * bins);
      if (b < k) {
        n0 += 1;
        s0 += c;
      } else {
        n1 += 1;
        s1 += c;
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const Rational d = s0 / n0 - s1 / n1;
    const Rational var = (n0 / n) * (n1 / n) * d * d;
    if (var > best_var) {
      best_var = var;
      best = k;
    }
  }
  return best;
}

/// Moments of the time slice of a 4D Gaussian density, computed by dense
/// sampling: a coarse 41^3 pass locates the support, a second 41^3 pass on
/// a fitted box measures mean and covariance.
struct SliceMoments {
  Eigen::Vector3d mean;
  Eigen::Matrix3d cov;
};

inline SliceMoments slice_and_fit(const Eigen::Vector4d& mu, const Eigen::Matrix4d& cov, double t) {
  const Eigen::Matrix4d prec = cov.inverse();
  const int n = 41;
  auto measure = [&](const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    const Eigen::Vector3d step = (hi - lo) / double(n - 1);
    double w_sum = 0;
    Eigen::Vector3d m1 = Eigen::Vector3d::Zero();
    Eigen::Matrix3d m2 = Eigen::Matrix3d::Zero();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const Eigen::Vector3d p = lo + Eigen::Vector3d(i, j, k).cwiseProduct(step);
          Eigen::Vector4d d;
          d << p - mu.head<3>(), t - mu(3);
          const double w = std::exp(-0.5 * d.dot(prec * d));
          w_sum += w;
          m1 += w * p;
          m2 += w * p * p.transpose();
        }
    SliceMoments out;
    out.mean = m1 / w_sum;
    out.cov = m2 / w_sum - out.mean * out.mean.transpose();
    return out;
  };
  // Pass 1: box of +-6 marginal standard deviations around the 4D mean.
  const Eigen::Vector3d sd = cov.diagonal().head<3>().cwiseSqrt();
  const SliceMoments coarse = measure(mu.head<3>() - 6 * sd, mu.head<3>() + 6 * sd);
  // Pass 2: box of +-7 fitted standard deviations around the fitted mean.
  const Eigen::Vector3d sd2 = coarse.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return measure(coarse.mean - 7 * sd2, coarse.mean + 7 * sd2);
}

}  // namespace i4d::testing

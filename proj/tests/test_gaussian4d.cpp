#include "i4d/gaussian4d.hpp"

#include "oracles.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <random>

using namespace i4d;

namespace {

Eigen::Matrix4d random_spd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix4d a;
  for (int i = 0; i < 16; ++i) a(i) = u(rng);
  return a * a.transpose() + 0.3 * Eigen::Matrix4d::Identity();
}

GaussianModel<double> two_gaussians() {
  GaussianModel<double> m;
  m.resize(2);
  m.opacity_logit.setConstant(logit(0.8));
  m.log_scale.setConstant(std::log(0.1));
  m.log_scale_t(0) = std::log(2.0);  // static, clip of 2 s
  m.mean(0, 3) = 1.0;
  m.log_scale_t(1) = std::log(2.0 / 30.0);
  m.mean(1, 3) = 0.0;
  m.is_dynamic = {0, 1};
  return m;
}

}  // namespace

TEST(Condition, IsotropicIsTimeInvariant) {
  GaussianModel<double> m;
  m.resize(1);
  m.mean.row(0) << 0.3, -0.2, 1.7, 0.4;
  m.log_scale(0) = std::log(0.05);
  m.log_scale_t(0) = std::log(0.1);
  for (double t : {-3.0, 0.0, 0.4, 0.41, 9.0}) {
    const auto fast = condition_at_time(m, 0, t);
    EXPECT_EQ(fast.mean, Eigen::Vector3d(0.3, -0.2, 1.7));
    EXPECT_TRUE(fast.cov.isApprox(Eigen::Matrix3d::Identity() * 0.0025, 1e-14));
    const auto general = condition_at_time<double>(m.mean.row(0).transpose(), m.covariance(0), t);
    EXPECT_TRUE(general.mean.isApprox(fast.mean, 1e-14));
    EXPECT_TRUE(general.cov.isApprox(fast.cov, 1e-14));
  }
}

TEST(Condition, AtTemporalMeanKeepsSpatialMean) {
  std::mt19937_64 rng(1);
  const Eigen::Vector4d mu(1, 2, 3, 0.7);
  const auto g = condition_at_time<double>(mu, random_spd(rng), 0.7);
  EXPECT_EQ(g.mean, mu.head<3>());
}

TEST(Condition, MatchesSliceAndFitOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 4; ++trial) {
    const Eigen::Vector4d mu(u(rng), u(rng), u(rng), u(rng));
    const Eigen::Matrix4d cov = random_spd(rng);
    const double t = mu(3) + u(rng) * std::sqrt(cov(3, 3));
    const auto g = condition_at_time<double>(mu, cov, t);
    const auto ref = i4d::testing::slice_and_fit(mu, cov, t);
    EXPECT_LT((g.mean - ref.mean).cwiseAbs().maxCoeff(), 1e-3) << "trial " << trial;
    EXPECT_LT((g.cov - ref.cov).cwiseAbs().maxCoeff(), 1e-3) << "trial " << trial;
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(g.cov).eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(Condition, RejectsDegenerateTemporalVariance) {
  Eigen::Matrix4d cov = Eigen::Matrix4d::Identity();
  cov(3, 3) = 0;
  EXPECT_THROW(condition_at_time<double>(Eigen::Vector4d::Zero(), cov, 0.0), InvalidInput);
  cov(3, 3) = -1;
  EXPECT_THROW(condition_at_time<double>(Eigen::Vector4d::Zero(), cov, 0.0), InvalidInput);
}

TEST(TemporalOpacity, Examples) {
  EXPECT_DOUBLE_EQ(temporal_opacity(0.7, 0.3, 0.2, 0.3), 0.7);
  const double half = 0.2 * std::sqrt(2 * std::log(2.0));
  EXPECT_NEAR(temporal_opacity(0.7, 0.3, 0.2, 0.3 + half), 0.35, 1e-14);
  EXPECT_NEAR(temporal_opacity(0.7, 0.3, 0.2, 0.3 - half), 0.35, 1e-14);
  // Static primitive: s_t equals the clip length.
  for (double t = 0; t <= 2.0; t += 0.01) EXPECT_GE(temporal_opacity(0.5, 1.0, 2.0, t), 0.5 * std::exp(-0.5));
  double prev = 1.0;
  for (double d = 0; d < 1; d += 0.05) {
    const double o = temporal_opacity(1.0, 0.0, 0.1, d);
    EXPECT_LE(o, prev);
    prev = o;
  }
}

TEST(TemporalOpacity, IntegralIsBounded) {
  const double o = 0.6, st = 0.15;
  double sum = 0;
  const double dt = 1e-4;
  for (double t = -2; t < 2; t += dt) sum += temporal_opacity(o, 0.0, st, t) * dt;
  EXPECT_LE(sum, o * st * std::sqrt(2 * M_PI) * (1 + 1e-9));
  EXPECT_NEAR(sum, o * st * std::sqrt(2 * M_PI), 1e-6);
}

TEST(Cull, Examples) {
  const auto m = two_gaussians();
  EXPECT_EQ(cull_by_time(m, 1.0, 1.0 / 255), (std::vector<Eigen::Index>{0}));
  // Direct evaluation of the dynamic primitive's falloff.
  EXPECT_LT(temporal_opacity(m, 1, 1.0), 1e-40);
  EXPECT_EQ(cull_by_time(m, 1.0, 0.0).size(), 2u);

  auto same_time = m;
  same_time.mean(1, 3) = 1.0;
  EXPECT_EQ(cull_by_time(same_time, 1.0, 0.79).size(), 2u);
}

TEST(Sh0, Conversions) {
  EXPECT_EQ(rgb_from_sh0(Eigen::Vector3d::Zero()), Eigen::Vector3d::Constant(0.5));
  EXPECT_NEAR(sh0_from_rgb(Eigen::Vector3d::Ones())(0), 0.5 / 0.28209479177, 1e-9);
  EXPECT_NEAR(sh0_from_rgb(Eigen::Vector3d::Ones())(0), 1.7725, 1e-4);
  EXPECT_EQ(rgb_from_sh0(Eigen::Vector3d::Constant(100.0)), Eigen::Vector3d::Ones());
  EXPECT_EQ(rgb_from_sh0(Eigen::Vector3d::Constant(-100.0)), Eigen::Vector3d::Zero());
  for (double v = 0; v <= 1.0; v += 1.0 / 64) {
    const Eigen::Vector3d rgb(v, 1 - v, 0.5 * v);
    EXPECT_TRUE(rgb_from_sh0(sh0_from_rgb(rgb)).isApprox(rgb, 1e-14) || rgb.isZero());
    EXPECT_LT((rgb_from_sh0(sh0_from_rgb(rgb)) - rgb).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Model, TenParametersPerGaussian) {
  static_assert(GaussianModel<float>::kParamsPerGaussian == 10);
  GaussianModel<float> m;
  m.resize(7);
  const Eigen::Index stored = m.mean.size() + m.log_scale.size() + m.log_scale_t.size() + m.opacity_logit.size() +
                              m.rgb.size();
  EXPECT_EQ(stored, 7 * GaussianModel<float>::kParamsPerGaussian);
  m.log_scale(2) = std::log(0.5f);
  m.log_scale_t(2) = std::log(0.25f);
  const auto cov = m.covariance(2);
  EXPECT_FLOAT_EQ(cov(0, 0), 0.25f);
  EXPECT_FLOAT_EQ(cov(3, 3), 0.0625f);
  EXPECT_EQ(cov(0, 3), 0.0f);
  EXPECT_NEAR(m.opacity(0), 0.5f, 1e-7);
}

#pragma once

// Isotropic, motion-aware 4D Gaussian primitives.
//
// Each primitive has a space-time mean (x, y, z, t), one spatial scale shared
// by all three axes, one temporal scale, an opacity and a plain RGB color.
// Rotation is the identity, so the 4x4 covariance is
// diag(s^2, s^2, s^2, s_t^2). Conditioning on a timestamp therefore leaves the
// spatial mean and covariance untouched; time enters only through the
// temporal opacity o_t = o * exp(-(t - mu_t)^2 / (2 s_t^2)).

#include "i4d/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace i4d {

enum class InitMode : std::uint32_t { Lite = 0, Full = 1 };

inline std::string to_string(InitMode mode) { return mode == InitMode::Lite ? "lite" : "full"; }

template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
inline Scalar logit(Scalar p) {
  return std::log(p / (Scalar(1) - p));
}

/// Structure-of-arrays storage. Constrained quantities are kept in an
/// unconstrained parameterization: log scales and an opacity logit.
template <typename Scalar>
struct GaussianModel {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Means = Eigen::Matrix<Scalar, Eigen::Dynamic, 4, Eigen::RowMajor>;
  using Colors = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

  /// 4 (mean) + 2 (scales) + 1 (opacity) + 3 (rgb).
  static constexpr int kParamsPerGaussian = 10;

  Means mean;
  Vec log_scale;
  Vec log_scale_t;
  Vec opacity_logit;
  Colors rgb;
  std::vector<std::uint8_t> is_dynamic;

  double fps{30.0};
  double video_length{0.0};
  InitMode mode{InitMode::Lite};

  [[nodiscard]] Eigen::Index size() const { return mean.rows(); }
  [[nodiscard]] bool empty() const { return size() == 0; }

  void resize(Eigen::Index n) {
    mean.setZero(n, 4);
    log_scale.setZero(n);
    log_scale_t.setZero(n);
    opacity_logit.setZero(n);
    rgb.setZero(n, 3);
    is_dynamic.assign(static_cast<std::size_t>(n), 0);
  }

  [[nodiscard]] Scalar scale(Eigen::Index i) const { return std::exp(log_scale(i)); }
  [[nodiscard]] Scalar scale_t(Eigen::Index i) const { return std::exp(log_scale_t(i)); }
  [[nodiscard]] Scalar opacity(Eigen::Index i) const { return sigmoid(opacity_logit(i)); }

  [[nodiscard]] Eigen::Index count_dynamic() const {
    Eigen::Index n = 0;
    for (auto d : is_dynamic) n += d ? 1 : 0;
    return n;
  }

  template <typename Other>
  [[nodiscard]] GaussianModel<Other> cast() const {
    GaussianModel<Other> out;
    out.mean = mean.template cast<Other>();
    out.log_scale = log_scale.template cast<Other>();
    out.log_scale_t = log_scale_t.template cast<Other>();
    out.opacity_logit = opacity_logit.template cast<Other>();
    out.rgb = rgb.template cast<Other>();
    out.is_dynamic = is_dynamic;
    out.fps = fps;
    out.video_length = video_length;
    out.mode = mode;
    return out;
  }

  /// Dense 4x4 covariance implied by the isotropic parameterization.
  [[nodiscard]] Eigen::Matrix<Scalar, 4, 4> covariance(Eigen::Index i) const {
    const Scalar s = scale(i);
    const Scalar st = scale_t(i);
    return Eigen::Matrix<Scalar, 4, 1>(s * s, s * s, s * s, st * st).asDiagonal();
  }
};

template <typename Scalar>
struct ConditionedGaussian3D {
  Eigen::Matrix<Scalar, 3, 1> mean;
  Eigen::Matrix<Scalar, 3, 3> cov;
  Scalar opacity{1};
  Eigen::Matrix<Scalar, 3, 1> rgb{Eigen::Matrix<Scalar, 3, 1>::Zero()};
};

/// Unnormalized temporal falloff, equal to 1 at t == mu_t.
template <typename Scalar>
inline Scalar temporal_falloff(Scalar t, Scalar mu_t, Scalar s_t) {
  const Scalar dt = t - mu_t;
  return std::exp(-(dt * dt) / (Scalar(2) * s_t * s_t));
}

template <typename Scalar>
inline Scalar temporal_opacity(Scalar opacity, Scalar mu_t, Scalar s_t, Scalar t) {
  return opacity * temporal_falloff(t, mu_t, s_t);
}

template <typename Scalar>
inline Scalar temporal_opacity(const GaussianModel<Scalar>& model, Eigen::Index i, Scalar t) {
  return temporal_opacity(model.opacity(i), model.mean(i, 3), model.scale_t(i), t);
}

/// Slice of a general 4D Gaussian at time t (Schur complement on the time axis).
template <typename Scalar>
ConditionedGaussian3D<Scalar> condition_at_time(const Eigen::Matrix<Scalar, 4, 1>& mean,
                                                const Eigen::Matrix<Scalar, 4, 4>& cov, Scalar t) {
  const Scalar var_t = cov(3, 3);
  if (!(var_t > Scalar(0))) throw InvalidInput("condition_at_time: temporal variance must be positive");
  const Eigen::Matrix<Scalar, 3, 1> cross = cov.template block<3, 1>(0, 3);
  ConditionedGaussian3D<Scalar> out;
  out.mean = mean.template head<3>() + cross * ((t - mean(3)) / var_t);
  out.cov = cov.template topLeftCorner<3, 3>() - cross * cov.template block<1, 3>(3, 0) / var_t;
  return out;
}

/// Isotropic fast path: the cross-covariance is zero, so mean and covariance
/// are time-invariant and only the opacity depends on t.
template <typename Scalar>
ConditionedGaussian3D<Scalar> condition_at_time(const GaussianModel<Scalar>& model, Eigen::Index i, Scalar t) {
  const Scalar s = model.scale(i);
  ConditionedGaussian3D<Scalar> out;
  out.mean = model.mean.row(i).template head<3>().transpose();
  out.cov = Eigen::Matrix<Scalar, 3, 3>::Identity() * (s * s);
  out.opacity = temporal_opacity(model, i, t);
  out.rgb = model.rgb.row(i).transpose();
  return out;
}

/// Indices of primitives whose temporal opacity at t is at least epsilon.
template <typename Scalar>
std::vector<Eigen::Index> cull_by_time(const GaussianModel<Scalar>& model, Scalar t, Scalar epsilon) {
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(model.size()));
  for (Eigen::Index i = 0; i < model.size(); ++i) {
    if (temporal_opacity(model, i, t) >= epsilon) keep.push_back(i);
  }
  return keep;
}

/// Zero-degree spherical-harmonic coefficient used by 3DGS-format files.
inline constexpr double kShC0 = 0.28209479177387814;

template <typename Derived>
auto rgb_from_sh0(const Eigen::MatrixBase<Derived>& sh0) {
  using Scalar = typename Derived::Scalar;
  return (sh0.array() * Scalar(kShC0) + Scalar(0.5)).cwiseMax(Scalar(0)).cwiseMin(Scalar(1)).matrix().eval();
}

template <typename Derived>
auto sh0_from_rgb(const Eigen::MatrixBase<Derived>& rgb) {
  using Scalar = typename Derived::Scalar;
  return ((rgb.array() - Scalar(0.5)) / Scalar(kShC0)).matrix().eval();
}

}  // namespace i4d

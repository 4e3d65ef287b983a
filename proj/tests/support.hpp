#pragma once

#include "i4d/gaussian4d.hpp"
#include "i4d/rasterizer.hpp"

#include <random>

namespace i4d::testing {

/// Camera at the origin looking down +z.
template <typename Scalar>
Camera<Scalar> axis_camera(int width, int height, Scalar focal) {
  Camera<Scalar> cam;
  cam.intrinsics = {focal, focal, Scalar(0.5) * Scalar(width - 1), Scalar(0.5) * Scalar(height - 1), width, height};
  return cam;
}

/// n Gaussians in front of an axis camera, comfortably inside the frustum.
template <typename Scalar>
GaussianModel<Scalar> random_scene(int n, std::mt19937_64& rng, Scalar t_center = Scalar(0.5)) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GaussianModel<Scalar> m;
  m.resize(n);
  m.fps = 30;
  m.video_length = 1;
  for (int i = 0; i < n; ++i) {
    const double z = 2.0 + 1.5 * u(rng);
    m.mean(i, 0) = Scalar((u(rng) - 0.5) * 0.5 * z);
    m.mean(i, 1) = Scalar((u(rng) - 0.5) * 0.5 * z);
    m.mean(i, 2) = Scalar(z);
    m.mean(i, 3) = Scalar(t_center + 0.1 * (u(rng) - 0.5));
    m.log_scale(i) = Scalar(std::log(0.08 + 0.12 * u(rng)));
    m.log_scale_t(i) = Scalar(std::log(0.1 + 0.2 * u(rng)));
    m.opacity_logit(i) = Scalar(logit(0.3 + 0.5 * u(rng)));
    for (int c = 0; c < 3; ++c) m.rgb(i, c) = Scalar(u(rng));
  }
  return m;
}

}  // namespace i4d::testing

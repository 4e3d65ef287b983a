#pragma once

// Tile-based splatting of temporally conditioned isotropic Gaussians with an
// exact reverse-mode pass.
//
// Forward: temporal culling -> conditioning -> EWA projection -> global sort
// by (tile, depth, index) -> per-tile front-to-back compositing.
// Backward: per-tile reverse compositing into per-(tile, splat) slots, merged
// in a fixed order, then chained through projection, temporal opacity and
// the parameter activations. Results do not depend on the thread count.

#include "i4d/gaussian4d.hpp"
#include "i4d/geometry.hpp"
#include "i4d/image.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace i4d {

struct RasterSettings {
  static constexpr int kTileSize = 16;

  double dilation{0.3};
  double alpha_max{0.99};
  double alpha_min{1.0 / 255.0};
  double transmittance_min{1e-4};
  /// Lower bound of the splat footprint radius, in standard deviations.
  double extent_sigma{3.0};
  double guard_band{1.3};
  double near_plane{0.01};
  /// Temporal culling threshold on o_t.
  double cull_epsilon{1.0 / 255.0};
  Eigen::Vector3d background{Eigen::Vector3d::Zero()};

  /// No hard thresholds anywhere: the image is a smooth function of every
  /// parameter. Used for derivative checks.
  static RasterSettings smooth() {
    RasterSettings s;
    s.alpha_min = 0.0;
    s.transmittance_min = 0.0;
    s.cull_epsilon = 0.0;
    s.extent_sigma = 1e4;
    return s;
  }
};

template <typename Scalar>
struct Camera {
  Pose<Scalar> pose;  // camera-to-world
  Intrinsics<Scalar> intrinsics;

  template <typename Other>
  [[nodiscard]] Camera<Other> cast() const {
    return {pose.template cast<Other>(), intrinsics.template cast<Other>()};
  }
};

template <typename Scalar>
struct SplatProjection {
  Eigen::Matrix<Scalar, 2, 1> mean2d;
  Eigen::Matrix<Scalar, 2, 2> cov2d;
  /// Upper triangle of the inverse 2D covariance: (a, b, c) of [[a, b], [b, c]].
  Eigen::Matrix<Scalar, 3, 1> conic;
  Eigen::Matrix<Scalar, 3, 1> cam;  // camera-frame mean
  Eigen::Matrix<Scalar, 3, 1> rgb;
  Scalar depth{0};
  Scalar radius{0};
  Scalar opacity{0};  // temporal opacity o_t
  Eigen::Index index{-1};
  int x_min{0}, x_max{-1}, y_min{0}, y_max{-1};  // inclusive pixel bounds
};

/// EWA projection of one conditioned Gaussian. Empty when culled.
template <typename Scalar>
std::optional<SplatProjection<Scalar>> project_splat(const ConditionedGaussian3D<Scalar>& g, const Camera<Scalar>& camera,
                                                     const RasterSettings& settings);

template <typename Scalar>
struct FrameImage {
  RgbImage<Scalar> rgb;
  Plane<Scalar> alpha;  // accumulated compositing weight
  Plane<Scalar> depth;  // compositing-weighted camera depth
  double t{0};
  Eigen::Index survivors{0};  // primitives left after temporal culling
  Eigen::Index splats{0};     // primitives that reached the image
  double project_ms{0};
  double sort_ms{0};
  double raster_ms{0};
};

/// Per-view forward state retained for the backward pass.
template <typename Scalar>
struct RenderContext {
  int width{0};
  int height{0};
  int tiles_x{0};
  int tiles_y{0};
  std::vector<SplatProjection<Scalar>> splats;
  std::vector<int> tile_offsets;  // tiles + 1 prefix offsets into tile_entries
  std::vector<int> tile_entries;  // splat indices, sorted by (tile, depth, index)
  Plane<Scalar> final_transmittance;
  Plane<int> contributors;  // 1 + position of the last blended entry within the tile
};

template <typename Scalar>
struct GradBuffer {
  typename GaussianModel<Scalar>::Means mean;  // d/d(x, y, z, t)
  typename GaussianModel<Scalar>::Vec log_scale;
  typename GaussianModel<Scalar>::Vec log_scale_t;
  typename GaussianModel<Scalar>::Vec opacity_logit;
  typename GaussianModel<Scalar>::Colors rgb;
  std::vector<std::uint8_t> visible;

  void reset(Eigen::Index n) {
    mean.setZero(n, 4);
    log_scale.setZero(n);
    log_scale_t.setZero(n);
    opacity_logit.setZero(n);
    rgb.setZero(n, 3);
    visible.assign(static_cast<std::size_t>(n), 0);
  }

  [[nodiscard]] bool all_finite() const {
    return mean.allFinite() && log_scale.allFinite() && log_scale_t.allFinite() && opacity_logit.allFinite() &&
           rgb.allFinite();
  }
};

template <typename Scalar>
class Rasterizer {
 public:
  explicit Rasterizer(RasterSettings settings = {}) : settings_(settings) {}

  [[nodiscard]] const RasterSettings& settings() const { return settings_; }
  RasterSettings& settings() { return settings_; }

  /// Renders at time t and keeps the forward state for backward().
  FrameImage<Scalar> render(const GaussianModel<Scalar>& model, const Camera<Scalar>& camera, Scalar t);

  /// Gradients of sum(dL_dimage * image) for the most recent render() call,
  /// which must have used the same model, camera and t. Temporal parameters
  /// (mu_t, log s_t) get gradients only when `temporal` is set.
  GradBuffer<Scalar> backward(const GaussianModel<Scalar>& model, const Camera<Scalar>& camera, Scalar t,
                              const RgbImage<Scalar>& dL_dimage, bool temporal = false);

  [[nodiscard]] const RenderContext<Scalar>& context() const { return ctx_; }

 private:
  RasterSettings settings_;
  RenderContext<Scalar> ctx_;
  std::vector<Scalar> pair_grads_;  // 9 values per tile entry
  std::vector<std::optional<SplatProjection<Scalar>>> scratch_;
};

template <typename Scalar>
FrameImage<Scalar> render(const GaussianModel<Scalar>& model, const Camera<Scalar>& camera, Scalar t,
                          const RasterSettings& settings = {}) {
  Rasterizer<Scalar> r(settings);
  return r.render(model, camera, t);
}

/// Recomputes the forward state, then runs the reverse pass.
template <typename Scalar>
GradBuffer<Scalar> render_backward(const GaussianModel<Scalar>& model, const Camera<Scalar>& camera, Scalar t,
                                   const RgbImage<Scalar>& dL_dimage, const RasterSettings& settings = {},
                                   bool temporal = false) {
  Rasterizer<Scalar> r(settings);
  r.render(model, camera, t);
  return r.backward(model, camera, t, dL_dimage, temporal);
}

extern template class Rasterizer<float>;
extern template class Rasterizer<double>;

}  // namespace i4d

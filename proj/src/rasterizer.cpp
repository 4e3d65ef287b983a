#include "i4d/rasterizer.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace i4d {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

constexpr int kTile = RasterSettings::kTileSize;
constexpr int kTilePixels = kTile * kTile;
constexpr int kPairStride = 9;  // du, dv, dA, dB, dC, d_opacity, d_r, d_g, d_b

// Branch-free exp that vectorizes; relative error below 2e-7 for float.
#pragma omp declare simd notinbranch
inline float lane_exp(float x) {
  x = std::clamp(x, -87.0f, 88.0f);
  const float n = std::nearbyint(x * 1.44269504088896341f);
  const float r = (x - n * 0.693359375f) + n * 2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  return p * std::bit_cast<float>((static_cast<std::int32_t>(n) + 127) << 23);
}

inline double lane_exp(double x) { return std::exp(x); }

template <typename Scalar>
struct GuardedJacobian {
  Eigen::Matrix<Scalar, 2, 3> J;
  Scalar tx, ty;
  bool clamped_x, clamped_y;
};

template <typename Scalar>
GuardedJacobian<Scalar> projection_jacobian(const Eigen::Matrix<Scalar, 3, 1>& cam, const Intrinsics<Scalar>& k,
                                            const RasterSettings& settings) {
  const Scalar lim_x = Scalar(settings.guard_band) * Scalar(0.5) * Scalar(k.width) / k.fx;
  const Scalar lim_y = Scalar(settings.guard_band) * Scalar(0.5) * Scalar(k.height) / k.fy;
  const Scalar z = cam.z();
  const Scalar rx = cam.x() / z;
  const Scalar ry = cam.y() / z;
  GuardedJacobian<Scalar> out;
  out.clamped_x = rx < -lim_x || rx > lim_x;
  out.clamped_y = ry < -lim_y || ry > lim_y;
  out.tx = out.clamped_x ? std::clamp(rx, -lim_x, lim_x) * z : cam.x();
  out.ty = out.clamped_y ? std::clamp(ry, -lim_y, lim_y) * z : cam.y();
  const Scalar z2 = z * z;
  out.J << k.fx / z, Scalar(0), -k.fx * out.tx / z2, Scalar(0), k.fy / z, -k.fy * out.ty / z2;
  return out;
}

/// Projection given a camera-frame mean and camera-frame covariance.
template <typename Scalar>
std::optional<SplatProjection<Scalar>> project_camera_space(const Eigen::Matrix<Scalar, 3, 1>& cam,
                                                            const Eigen::Matrix<Scalar, 3, 3>& cov_cam, Scalar opacity,
                                                            const Eigen::Matrix<Scalar, 3, 1>& rgb, Eigen::Index index,
                                                            const Intrinsics<Scalar>& k,
                                                            const RasterSettings& settings) {
  if (!(cam.z() > Scalar(settings.near_plane))) return std::nullopt;
  if (settings.alpha_min > 0 && !(opacity >= Scalar(settings.alpha_min))) return std::nullopt;

  const auto jac = projection_jacobian(cam, k, settings);
  Eigen::Matrix<Scalar, 2, 2> cov2d = jac.J * cov_cam * jac.J.transpose();
  cov2d(0, 0) += Scalar(settings.dilation);
  cov2d(1, 1) += Scalar(settings.dilation);
  cov2d(1, 0) = cov2d(0, 1);
  const Scalar det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(0, 1);
  if (!(det > Scalar(0))) return std::nullopt;

  SplatProjection<Scalar> s;
  s.cam = cam;
  s.cov2d = cov2d;
  s.conic = Eigen::Matrix<Scalar, 3, 1>(cov2d(1, 1) / det, -cov2d(0, 1) / det, cov2d(0, 0) / det);
  s.mean2d = Eigen::Matrix<Scalar, 2, 1>(k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy);
  s.depth = cam.z();
  s.opacity = opacity;
  s.rgb = rgb;
  s.index = index;

  const Scalar mid = Scalar(0.5) * (cov2d(0, 0) + cov2d(1, 1));
  const Scalar lambda_max = mid + std::sqrt(std::max(Scalar(0.1), mid * mid - det));
  Scalar extent = Scalar(settings.extent_sigma);
  if (settings.alpha_min > 0) {
    // Beyond this distance along any direction alpha < alpha_min, so the
    // bounding box never clips a visible contribution.
    extent = std::max(extent, std::sqrt(Scalar(2) * std::log(opacity / Scalar(settings.alpha_min))));
  }
  s.radius = extent * std::sqrt(lambda_max);

  const auto bound = [](Scalar v, int hi) {
    return static_cast<int>(std::clamp(v, Scalar(-1), Scalar(hi)));
  };
  s.x_min = std::max(0, bound(std::ceil(s.mean2d.x() - s.radius), k.width));
  s.x_max = std::min(k.width - 1, bound(std::floor(s.mean2d.x() + s.radius), k.width));
  s.y_min = std::max(0, bound(std::ceil(s.mean2d.y() - s.radius), k.height));
  s.y_max = std::min(k.height - 1, bound(std::floor(s.mean2d.y() + s.radius), k.height));
  if (s.x_min > s.x_max || s.y_min > s.y_max) return std::nullopt;
  return s;
}

/// log(alpha_min / o): any power below this yields alpha < alpha_min.
template <typename Scalar>
Scalar power_floor(const SplatProjection<Scalar>& s, const RasterSettings& settings) {
  if (settings.alpha_min <= 0) return -std::numeric_limits<Scalar>::infinity();
  return std::log(Scalar(settings.alpha_min) / s.opacity);
}

/// One splat against the pixel columns of a tile row. Forward and backward
/// evaluate the exponent through this one routine so they agree bit for bit.
template <typename Scalar>
struct RowGeometry {
  alignas(64) Scalar dx[kTile];
  alignas(64) int columns[kTile];
  Scalar ca, cb, cc;
  Scalar floor_power;
  Scalar row_peak;  // max over x of power / dy^2

  RowGeometry(const SplatProjection<Scalar>& s, int x0, const RasterSettings& settings)
      : ca(s.conic(0)),
        cb(s.conic(1)),
        cc(s.conic(2)),
        floor_power(power_floor(s, settings)),
        row_peak(Scalar(-0.5) * (cc - cb * cb / ca)) {
    for (int l = 0; l < kTile; ++l) {
      dx[l] = Scalar(x0 + l) - s.mean2d.x();
      columns[l] = x0 + l >= s.x_min && x0 + l <= s.x_max;
    }
  }

  [[nodiscard]] bool row_unreachable(Scalar dy) const { return row_peak * dy * dy < floor_power; }

  /// Exponent and its exp for every lane of the row at offset dy.
  void evaluate(Scalar dy, Scalar* power, Scalar* gauss) const {
    const Scalar cyy = cc * dy * dy;
#pragma omp simd
    for (int l = 0; l < kTile; ++l) power[l] = Scalar(-0.5) * (ca * dx[l] * dx[l] + cyy) - cb * dx[l] * dy;
#pragma omp simd
    for (int l = 0; l < kTile; ++l) gauss[l] = lane_exp(power[l]);
  }
};


}  // namespace

template <typename Scalar>
std::optional<SplatProjection<Scalar>> project_splat(const ConditionedGaussian3D<Scalar>& g, const Camera<Scalar>& camera,
                                                     const RasterSettings& settings) {
  const Eigen::Matrix<Scalar, 3, 3> w = camera.pose.rotation().transpose();
  const Eigen::Matrix<Scalar, 3, 1> cam = camera.pose.to_camera(g.mean);
  const Eigen::Matrix<Scalar, 3, 3> cov_cam = w * g.cov * w.transpose();
  return project_camera_space<Scalar>(cam, cov_cam, g.opacity, g.rgb, -1, camera.intrinsics, settings);
}

template <typename Scalar>
FrameImage<Scalar> Rasterizer<Scalar>::render(const GaussianModel<Scalar>& model, const Camera<Scalar>& camera,
                                              Scalar t) {
  const auto& k = camera.intrinsics;
  k.validate();
  const int width = k.width;
  const int height = k.height;

  auto& ctx = ctx_;
  ctx.width = width;
  ctx.height = height;
  ctx.tiles_x = (width + kTile - 1) / kTile;
  ctx.tiles_y = (height + kTile - 1) / kTile;
  const int tile_count = ctx.tiles_x * ctx.tiles_y;

  FrameImage<Scalar> frame;
  frame.t = double(t);

  // Cull, condition and project.
  auto t0 = Clock::now();
  const Eigen::Index n = model.size();
  scratch_.assign(static_cast<std::size_t>(n), std::nullopt);
  const Scalar eps = Scalar(settings_.cull_epsilon);
  Eigen::Index survivors = 0;
#pragma omp parallel for schedule(static) reduction(+ : survivors)
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar o_t = temporal_opacity(model, i, t);
    if (o_t < eps) continue;
    ++survivors;
    const Scalar s = model.scale(i);
    const Eigen::Matrix<Scalar, 3, 1> cam = camera.pose.to_camera(model.mean.row(i).template head<3>().transpose());
    const Eigen::Matrix<Scalar, 3, 3> cov_cam = Eigen::Matrix<Scalar, 3, 3>::Identity() * (s * s);
    scratch_[static_cast<std::size_t>(i)] =
        project_camera_space<Scalar>(cam, cov_cam, o_t, model.rgb.row(i).transpose(), i, k, settings_);
  }
  ctx.splats.clear();
  for (auto& s : scratch_) {
    if (s) ctx.splats.push_back(*s);
  }
  frame.survivors = survivors;
  frame.splats = static_cast<Eigen::Index>(ctx.splats.size());
  frame.project_ms = ms_since(t0);

  // Global (tile, depth, index) order: depth sort, then a stable counting
  // sort on the tile id.
  t0 = Clock::now();
  const auto& splats = ctx.splats;
  std::vector<int> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
    return splats[a].index < splats[b].index;
  });
  ctx.tile_offsets.assign(static_cast<std::size_t>(tile_count) + 1, 0);
  for (int id : order) {
    const auto& s = splats[id];
    for (int ty = s.y_min / kTile; ty <= s.y_max / kTile; ++ty)
      for (int tx = s.x_min / kTile; tx <= s.x_max / kTile; ++tx) ++ctx.tile_offsets[ty * ctx.tiles_x + tx + 1];
  }
  std::partial_sum(ctx.tile_offsets.begin(), ctx.tile_offsets.end(), ctx.tile_offsets.begin());
  ctx.tile_entries.resize(static_cast<std::size_t>(ctx.tile_offsets.back()));
  {
    std::vector<int> cursor(ctx.tile_offsets.begin(), ctx.tile_offsets.end() - 1);
    for (int id : order) {
      const auto& s = splats[id];
      for (int ty = s.y_min / kTile; ty <= s.y_max / kTile; ++ty)
        for (int tx = s.x_min / kTile; tx <= s.x_max / kTile; ++tx) ctx.tile_entries[cursor[ty * ctx.tiles_x + tx]++] = id;
    }
  }
  frame.sort_ms = ms_since(t0);

  // Composite.
  t0 = Clock::now();
  frame.rgb = RgbImage<Scalar>(width, height);
  frame.alpha.setZero(height, width);
  frame.depth.setZero(height, width);
  ctx.final_transmittance.setOnes(height, width);
  ctx.contributors.setZero(height, width);
  const Eigen::Matrix<Scalar, 3, 1> bg = settings_.background.template cast<Scalar>();
  const Scalar alpha_max = Scalar(settings_.alpha_max);
  const Scalar alpha_min = Scalar(settings_.alpha_min);
  const Scalar t_min = Scalar(settings_.transmittance_min);

#pragma omp parallel for schedule(dynamic, 1)
  for (int tile = 0; tile < tile_count; ++tile) {
    const int x0 = (tile % ctx.tiles_x) * kTile;
    const int y0 = (tile / ctx.tiles_x) * kTile;
    const int x1 = std::min(width, x0 + kTile);
    const int y1 = std::min(height, y0 + kTile);
    const int rows = y1 - y0;

    // Row-major tile state; lanes past the image edge start out done.
    alignas(64) Scalar trans[kTilePixels], acc_r[kTilePixels], acc_g[kTilePixels], acc_b[kTilePixels],
        acc_alpha[kTilePixels], acc_depth[kTilePixels];
    alignas(64) int contrib[kTilePixels], done[kTilePixels];
    for (int p = 0; p < kTilePixels; ++p) {
      trans[p] = Scalar(1);
      acc_r[p] = acc_g[p] = acc_b[p] = acc_alpha[p] = acc_depth[p] = Scalar(0);
      contrib[p] = 0;
      done[p] = p / kTile >= rows || p % kTile >= x1 - x0;
    }
    alignas(64) Scalar power[kTile], gauss[kTile];

    const int begin = ctx.tile_offsets[tile];
    const int end = ctx.tile_offsets[tile + 1];
    for (int j = begin; j < end; ++j) {
      if (((j - begin) & 31) == 0) {
        int open = 0;
        for (int p = 0; p < kTilePixels; ++p) open += done[p] == 0;
        if (open == 0) break;
      }
      const auto& s = splats[ctx.tile_entries[j]];
      const RowGeometry<Scalar> geo(s, x0, settings_);
      const Scalar opacity = s.opacity, red = s.rgb(0), green = s.rgb(1), blue = s.rgb(2), depth = s.depth;
      const int tag = j - begin + 1;
      const int ya = std::max(y0, s.y_min), yb = std::min(y1 - 1, s.y_max);
      for (int py = ya; py <= yb; ++py) {
        const Scalar dy = Scalar(py) - s.mean2d.y();
        if (geo.row_unreachable(dy)) continue;
        geo.evaluate(dy, power, gauss);
        const int row = (py - y0) * kTile;
        for (int l = 0; l < kTile; ++l) {
          const int p = row + l;
          const Scalar alpha = std::min(alpha_max, opacity * gauss[l]);
          const int ok = geo.columns[l] & int(done[p] == 0) & int(power[l] <= Scalar(0)) &
                         int(power[l] >= geo.floor_power) & int(alpha >= alpha_min);
          const Scalar test_t = trans[p] * (Scalar(1) - alpha);
          const int stop = ok & int(test_t < t_min);
          const int blend = ok & (stop ^ 1);
          const Scalar w = blend ? alpha * trans[p] : Scalar(0);
          acc_r[p] += red * w;
          acc_g[p] += green * w;
          acc_b[p] += blue * w;
          acc_depth[p] += depth * w;
          acc_alpha[p] += w;
          trans[p] = blend ? test_t : trans[p];
          contrib[p] = blend ? tag : contrib[p];
          done[p] |= stop;
        }
      }
    }

    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const int p = (y - y0) * kTile + (x - x0);
        frame.rgb(x, y, 0) = acc_r[p] + trans[p] * bg(0);
        frame.rgb(x, y, 1) = acc_g[p] + trans[p] * bg(1);
        frame.rgb(x, y, 2) = acc_b[p] + trans[p] * bg(2);
        frame.alpha(y, x) = acc_alpha[p];
        frame.depth(y, x) = acc_depth[p];
        ctx.final_transmittance(y, x) = trans[p];
        ctx.contributors(y, x) = contrib[p];
      }
    }
  }
  frame.raster_ms = ms_since(t0);
  return frame;
}

template <typename Scalar>
GradBuffer<Scalar> Rasterizer<Scalar>::backward(const GaussianModel<Scalar>& model, const Camera<Scalar>& camera,
                                                Scalar t, const RgbImage<Scalar>& dL_dimage, bool temporal) {
  const auto& ctx = ctx_;
  const auto& k = camera.intrinsics;
  if (dL_dimage.width != ctx.width || dL_dimage.height != ctx.height) {
    throw InvalidInput("render_backward: gradient image does not match the rendered frame");
  }
  if (!dL_dimage.pixels.allFinite()) throw InvalidInput("render_backward: non-finite upstream gradient");

  GradBuffer<Scalar> grads;
  grads.reset(model.size());

  const auto& splats = ctx.splats;
  const int tile_count = ctx.tiles_x * ctx.tiles_y;
  pair_grads_.assign(ctx.tile_entries.size() * kPairStride, Scalar(0));
  const Eigen::Matrix<Scalar, 3, 1> bg = settings_.background.template cast<Scalar>();
  const Scalar alpha_max = Scalar(settings_.alpha_max);
  const Scalar alpha_min = Scalar(settings_.alpha_min);

#pragma omp parallel for schedule(dynamic, 1)
  for (int tile = 0; tile < tile_count; ++tile) {
    const int begin = ctx.tile_offsets[tile];
    const int end = ctx.tile_offsets[tile + 1];
    if (begin == end) continue;
    const int x0 = (tile % ctx.tiles_x) * kTile;
    const int y0 = (tile / ctx.tiles_x) * kTile;
    const int x1 = std::min(ctx.width, x0 + kTile);
    const int y1 = std::min(ctx.height, y0 + kTile);

    // Pixels outside the image keep contrib = 0 and never participate.
    alignas(64) Scalar trans[kTilePixels], t_final[kTilePixels], last_alpha[kTilePixels], bg_dot[kTilePixels];
    alignas(64) Scalar acc[3][kTilePixels], last_rgb[3][kTilePixels], dpix[3][kTilePixels];
    alignas(64) int contrib[kTilePixels];
    for (int p = 0; p < kTilePixels; ++p) {
      trans[p] = t_final[p] = Scalar(1);
      last_alpha[p] = bg_dot[p] = Scalar(0);
      contrib[p] = 0;
      for (int c = 0; c < 3; ++c) acc[c][p] = last_rgb[c][p] = dpix[c][p] = Scalar(0);
    }
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const int p = (y - y0) * kTile + (x - x0);
        trans[p] = t_final[p] = ctx.final_transmittance(y, x);
        contrib[p] = ctx.contributors(y, x);
        for (int c = 0; c < 3; ++c) {
          dpix[c][p] = dL_dimage(x, y, c);
          bg_dot[p] += bg(c) * dpix[c][p];
        }
      }
    }
    alignas(64) Scalar power[kTile], gauss[kTile];
    alignas(64) Scalar lane_g[kPairStride][kTile];

    for (int j = end - 1; j >= begin; --j) {
      const int local = j - begin;
      const auto& s = splats[ctx.tile_entries[j]];
      const RowGeometry<Scalar> geo(s, x0, settings_);
      const Scalar ca = geo.ca, cb = geo.cb, cc = geo.cc, opacity = s.opacity;
      const Scalar rgb[3] = {s.rgb(0), s.rgb(1), s.rgb(2)};
      for (auto& q : lane_g)
        for (auto& v : q) v = Scalar(0);
      const int ya = std::max(y0, s.y_min), yb = std::min(y1 - 1, s.y_max);
      for (int py = ya; py <= yb; ++py) {
        const Scalar dy = Scalar(py) - s.mean2d.y();
        if (geo.row_unreachable(dy)) continue;
        geo.evaluate(dy, power, gauss);
        const int row = (py - y0) * kTile;
        for (int l = 0; l < kTile; ++l) {
          const int p = row + l;
          const Scalar raw_alpha = opacity * gauss[l];
          const Scalar alpha = std::min(alpha_max, raw_alpha);
          const int ok = geo.columns[l] & int(local < contrib[p]) & int(power[l] <= Scalar(0)) &
                         int(power[l] >= geo.floor_power) & int(alpha >= alpha_min);
          const Scalar one_minus = Scalar(1) - alpha;
          const Scalar t_here = ok ? trans[p] / one_minus : trans[p];
          trans[p] = t_here;
          const Scalar w = alpha * t_here;
          Scalar dL_dalpha = Scalar(0);
          for (int c = 0; c < 3; ++c) {
            const Scalar a = last_alpha[p] * last_rgb[c][p] + (Scalar(1) - last_alpha[p]) * acc[c][p];
            acc[c][p] = ok ? a : acc[c][p];
            last_rgb[c][p] = ok ? rgb[c] : last_rgb[c][p];
            dL_dalpha += (rgb[c] - acc[c][p]) * dpix[c][p];
            lane_g[6 + c][l] += ok ? w * dpix[c][p] : Scalar(0);
          }
          dL_dalpha *= t_here;
          last_alpha[p] = ok ? alpha : last_alpha[p];
          dL_dalpha += (-t_final[p] / one_minus) * bg_dot[p];

          // Clamped alpha is flat in opacity and footprint.
          const int open = ok & int(raw_alpha <= alpha_max);
          const Scalar d_opacity = open ? gauss[l] * dL_dalpha : Scalar(0);
          const Scalar dL_dpower = open ? opacity * dL_dalpha * gauss[l] : Scalar(0);
          const Scalar dx = geo.dx[l];
          lane_g[5][l] += d_opacity;
          lane_g[0][l] += dL_dpower * (ca * dx + cb * dy);
          lane_g[1][l] += dL_dpower * (cb * dx + cc * dy);
          lane_g[2][l] += dL_dpower * (Scalar(-0.5) * dx * dx);
          lane_g[3][l] += dL_dpower * (Scalar(-0.5) * dx * dy);
          lane_g[4][l] += dL_dpower * (Scalar(-0.5) * dy * dy);
        }
      }
      Scalar* out = pair_grads_.data() + std::size_t(j) * kPairStride;
      for (int q = 0; q < kPairStride; ++q) {
        Scalar sum = Scalar(0);
        for (int l = 0; l < kTile; ++l) sum += lane_g[q][l];
        out[q] = sum;
      }
    }
  }

  // Fixed-order merge of (tile, splat) slots.
  std::vector<Scalar> per_splat(splats.size() * kPairStride, Scalar(0));
  for (std::size_t j = 0; j < ctx.tile_entries.size(); ++j) {
    Scalar* dst = per_splat.data() + std::size_t(ctx.tile_entries[j]) * kPairStride;
    const Scalar* src = pair_grads_.data() + j * kPairStride;
    for (int q = 0; q < kPairStride; ++q) dst[q] += src[q];
  }

  const Eigen::Matrix<Scalar, 3, 3>& rot = camera.pose.rotation();
#pragma omp parallel for schedule(static)
  for (std::size_t idx = 0; idx < splats.size(); ++idx) {
    const auto& s = splats[idx];
    const Eigen::Index i = s.index;
    const Scalar* g = per_splat.data() + idx * kPairStride;
    grads.visible[static_cast<std::size_t>(i)] = 1;

    // Inverse covariance -> covariance: dM = -Q dQ Q.
    Eigen::Matrix<Scalar, 2, 2> q, dq;
    q << s.conic(0), s.conic(1), s.conic(1), s.conic(2);
    dq << g[2], g[3], g[3], g[4];
    const Eigen::Matrix<Scalar, 2, 2> dcov2d = -(q * dq * q);

    const auto jac = projection_jacobian(s.cam, k, settings_);
    const Scalar var = model.scale(i) * model.scale(i);
    // cov2d = var * J J^T + dilation
    const Eigen::Matrix<Scalar, 2, 3> dJ = Scalar(2) * var * dcov2d * jac.J;
    const Scalar dvar = (jac.J.transpose() * dcov2d * jac.J).trace();
    grads.log_scale(i) = dvar * Scalar(2) * var;

    const Scalar x = s.cam.x(), y = s.cam.y(), z = s.cam.z();
    const Scalar z2 = z * z, z3 = z2 * z;
    Eigen::Matrix<Scalar, 3, 1> dcam;
    dcam.x() = g[0] * k.fx / z;
    dcam.y() = g[1] * k.fy / z;
    dcam.z() = -g[0] * k.fx * x / z2 - g[1] * k.fy * y / z2;
    dcam.z() += dJ(0, 0) * (-k.fx / z2) + dJ(1, 1) * (-k.fy / z2) + dJ(0, 2) * (Scalar(2) * k.fx * jac.tx / z3) +
                dJ(1, 2) * (Scalar(2) * k.fy * jac.ty / z3);
    const Scalar dtx = dJ(0, 2) * (-k.fx / z2);
    const Scalar dty = dJ(1, 2) * (-k.fy / z2);
    if (jac.clamped_x) dcam.z() += dtx * (jac.tx / z);
    else dcam.x() += dtx;
    if (jac.clamped_y) dcam.z() += dty * (jac.ty / z);
    else dcam.y() += dty;
    grads.mean.row(i).template head<3>() = (rot * dcam).transpose();

    const Scalar d_ot = g[5];
    const Scalar o = model.opacity(i);
    grads.opacity_logit(i) = d_ot * s.opacity * (Scalar(1) - o);
    if (temporal) {
      const Scalar dt = t - model.mean(i, 3);
      const Scalar st2 = model.scale_t(i) * model.scale_t(i);
      grads.mean(i, 3) = d_ot * s.opacity * dt / st2;
      grads.log_scale_t(i) = d_ot * s.opacity * dt * dt / st2;
    }
    grads.rgb.row(i) << g[6], g[7], g[8];
  }
  return grads;
}

template std::optional<SplatProjection<float>> project_splat(const ConditionedGaussian3D<float>&, const Camera<float>&,
                                                             const RasterSettings&);
template std::optional<SplatProjection<double>> project_splat(const ConditionedGaussian3D<double>&,
                                                              const Camera<double>&, const RasterSettings&);
template class Rasterizer<float>;
template class Rasterizer<double>;

}  // namespace i4d

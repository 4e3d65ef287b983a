#pragma once

// Analytic test scenes: textured planes and spheres, some moving, seen by a
// camera on a circular arc. Provides exact depth, exact dynamic coverage and
// ground-truth renders at arbitrary times.

#include "i4d/bundle.hpp"
#include "i4d/rasterizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace i4d {

/// color(p) = base + sum_k amplitude_k * sin(wavevector_k . p + phase_k), clamped to [0, 1].
struct Texture {
  struct Wave {
    Eigen::Vector3d amplitude{Eigen::Vector3d::Zero()};
    Eigen::Vector3d wavevector{Eigen::Vector3d::Zero()};
    double phase{0};
  };
  Eigen::Vector3d base{0.5, 0.5, 0.5};
  std::vector<Wave> waves;

  [[nodiscard]] Eigen::Vector3d at(const Eigen::Vector3d& p) const;
};

struct PlaneSpec {
  Eigen::Vector3d point{Eigen::Vector3d::Zero()};
  Eigen::Vector3d normal{0, 0, -1};
  Texture texture;
};

/// center(t) = center + velocity * t + amplitude * sin(2 pi frequency t + phase).
/// Textures move with the sphere.
struct SphereSpec {
  Eigen::Vector3d center{Eigen::Vector3d::Zero()};
  double radius{1};
  Texture texture;
  Eigen::Vector3d velocity{Eigen::Vector3d::Zero()};
  Eigen::Vector3d amplitude{Eigen::Vector3d::Zero()};
  double frequency{0};
  double phase{0};

  [[nodiscard]] bool dynamic() const { return !velocity.isZero() || (!amplitude.isZero() && frequency != 0); }
  [[nodiscard]] Eigen::Vector3d center_at(double t) const;
};

/// eye(theta) = target + (radius sin theta, height, -radius cos theta), theta
/// sweeping start..end degrees over the clip; looks at target with world -y up.
struct CameraPathSpec {
  Eigen::Vector3d target{Eigen::Vector3d::Zero()};
  double radius{3};
  double height{0};
  double start_deg{0};
  double end_deg{0};
};

struct SyntheticSceneSpec {
  int width{256};
  int height{256};
  int n_frames{60};
  double fps{30};
  double focal{230};
  int supersample{3};
  double depth_noise{0};   // relative standard deviation
  double motion_noise{0};  // absolute standard deviation on probabilities
  Eigen::Vector3d background{Eigen::Vector3d::Zero()};
  CameraPathSpec camera;
  std::vector<PlaneSpec> planes;
  std::vector<SphereSpec> spheres;

  /// Rejects degenerate camera paths and trajectories that are inside the
  /// frustum for fewer than 80% of frames.
  void validate() const;

  [[nodiscard]] Intrinsics<double> intrinsics() const;
  [[nodiscard]] Camera<double> camera_at(double t) const;
  [[nodiscard]] double frame_time(int i) const { return double(i) / fps; }
};

SyntheticSceneSpec spec_from_json(const std::string& text);
std::string spec_to_json(const SyntheticSceneSpec& spec);
SyntheticSceneSpec load_spec(const std::string& path);

/// The scene used by the acceptance suite (also shipped as data/reference_scene.json).
SyntheticSceneSpec reference_scene_spec();

struct SyntheticOutput {
  CalibratedBundle bundle;
  std::vector<Mask> dynamic_masks;  // full resolution, exact per-pixel coverage
};

/// Deterministic for a given seed; RGB is quantized to 8 bits so the bundle
/// round-trips through PNG unchanged.
SyntheticOutput generate_synthetic(const SyntheticSceneSpec& spec, std::uint64_t seed);

struct TraceResult {
  RgbImage<float> rgb;
  Plane<float> depth;
  Mask dynamic;
};

/// Supersampled color, center-ray z-depth and dynamic coverage for any camera and time.
TraceResult trace_view(const SyntheticSceneSpec& spec, const Camera<double>& camera, double t);

RgbImage<float> render_ground_truth(const SyntheticSceneSpec& spec, const Camera<double>& camera, double t);

}  // namespace i4d

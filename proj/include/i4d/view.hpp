#pragma once

// One novel view: pose, time and resolution. Shared by the offline `render`
// command and the frame server so both produce identical pixels.

#include "i4d/rasterizer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>

namespace i4d {

inline constexpr std::int64_t kMaxViewPixels = 4194304;
inline constexpr double kDefaultFovY = 60.0;

struct ViewRequest {
  Eigen::Matrix4d pose{Eigen::Matrix4d::Identity()};  // camera-to-world, +z forward, +y down
  double t{0};
  int width{640};
  int height{360};
  double fov_y{kDefaultFovY};  // degrees
  int quality{85};
  std::uint64_t id{0};

  /// Throws InvalidInput on a bad pose, size, field of view or quality.
  void validate() const;
  [[nodiscard]] Camera<double> camera() const;
};

/// Accepts {pose: 16 numbers row-major | 4x4 nested, t, width, height,
/// fov_y, quality, id}; missing optional fields keep their defaults.
ViewRequest view_request_from_json(const nlohmann::json& j);
nlohmann::json view_request_to_json(const ViewRequest& request);

/// Clamps t into [0, video_length]; `clamped` reports whether it moved.
double clamp_time(const GaussianModel<float>& model, double t, bool* clamped = nullptr);

/// Renders with the request's time clamped into the clip.
FrameImage<float> render_view(Rasterizer<float>& rasterizer, const GaussianModel<float>& model,
                              const ViewRequest& request);

}  // namespace i4d

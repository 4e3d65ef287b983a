#include "i4d/view.hpp"

#include <algorithm>
#include <cmath>

namespace i4d {

namespace {

constexpr double kPoseTolerance = 1e-5;

double number(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw InvalidInput(std::string("request: '") + key + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw InvalidInput(std::string("request: '") + key + "' must be finite");
  return x;
}

int integer(const nlohmann::json& j, const char* key) {
  const double x = number(j, key);
  if (x != std::floor(x) || std::abs(x) > 1e9) throw InvalidInput(std::string("request: '") + key + "' must be an integer");
  return static_cast<int>(x);
}

Eigen::Matrix4d parse_pose(const nlohmann::json& p) {
  if (!p.is_array()) throw InvalidInput("request: 'pose' must be an array");
  std::vector<double> flat;
  if (p.size() == 4 && p[0].is_array()) {
    for (const auto& row : p) {
      if (!row.is_array() || row.size() != 4) throw InvalidInput("request: 'pose' rows must have 4 entries");
      for (const auto& v : row) flat.push_back(v.is_number() ? v.get<double>() : NAN);
    }
  } else {
    for (const auto& v : p) flat.push_back(v.is_number() ? v.get<double>() : NAN);
  }
  if (flat.size() != 16) throw InvalidInput("request: 'pose' must have 16 entries");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = flat[std::size_t(r * 4 + c)];
  if (!m.allFinite()) throw InvalidInput("request: 'pose' entries must be finite numbers");
  return m;
}

}  // namespace

void ViewRequest::validate() const {
  require(width > 0 && height > 0, "request: width and height must be positive");
  require(std::int64_t(width) * height <= kMaxViewPixels, "request: width * height exceeds 4194304");
  require(std::isfinite(fov_y) && fov_y > 0 && fov_y < 180, "request: fov_y must be in (0, 180) degrees");
  require(quality >= 1 && quality <= 100, "request: quality must be in [1, 100]");
  require(std::isfinite(t), "request: t must be finite");
  require((pose.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() <= kPoseTolerance,
          "request: pose bottom row must be 0 0 0 1");
  Pose<double>::from_matrix(pose, kPoseTolerance);
}

Camera<double> ViewRequest::camera() const {
  return {Pose<double>::from_matrix(pose, kPoseTolerance), Intrinsics<double>::from_fov_y(fov_y, width, height)};
}

ViewRequest view_request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("request: expected a JSON object");
  ViewRequest r;
  if (!j.contains("pose")) throw InvalidInput("request: missing 'pose'");
  r.pose = parse_pose(j.at("pose"));
  if (j.contains("t")) r.t = number(j, "t");
  if (j.contains("width")) r.width = integer(j, "width");
  if (j.contains("height")) r.height = integer(j, "height");
  if (j.contains("fov_y") && !j.at("fov_y").is_null()) r.fov_y = number(j, "fov_y");
  if (j.contains("quality")) r.quality = integer(j, "quality");
  if (j.contains("id")) {
    const double id = number(j, "id");
    if (id < 0 || id != std::floor(id) || id > 9007199254740992.0) throw InvalidInput("request: 'id' must be a non-negative integer");
    r.id = static_cast<std::uint64_t>(id);
  }
  r.validate();
  return r;
}

nlohmann::json view_request_to_json(const ViewRequest& request) {
  std::vector<double> flat;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) flat.push_back(request.pose(r, c));
  return {{"pose", flat},        {"t", request.t},         {"width", request.width}, {"height", request.height},
          {"fov_y", request.fov_y}, {"quality", request.quality}, {"id", request.id}};
}

double clamp_time(const GaussianModel<float>& model, double t, bool* clamped) {
  const double out = std::clamp(t, 0.0, std::max(0.0, model.video_length));
  if (clamped) *clamped = out != t;
  return out;
}

FrameImage<float> render_view(Rasterizer<float>& rasterizer, const GaussianModel<float>& model,
                              const ViewRequest& request) {
  request.validate();
  const double t = clamp_time(model, request.t);
  return rasterizer.render(model, request.camera().cast<float>(), float(t));
}

}  // namespace i4d

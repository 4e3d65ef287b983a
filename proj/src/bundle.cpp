#include "i4d/bundle.hpp"

#include "i4d/error.hpp"
#include "i4d/gaussian4d.hpp"
#include "i4d/io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>

namespace i4d {

namespace fs = std::filesystem;
using nlohmann::json;

std::string frame_file_name(const char* kind, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06d.%s", kind, index, ext);
  return buf;
}

namespace {

bool motion_shape_ok(Eigen::Index rows, Eigen::Index cols, int height, int width) {
  const auto ok = [](Eigen::Index n, int full) { return n == full / 8 || n == (full + 7) / 8; };
  return ok(rows, height) && ok(cols, width);
}

Eigen::Matrix4d pose_from_json(const json& j, const std::string& where) {
  Eigen::Matrix4d m;
  if (!j.is_array() || j.size() != 4) throw InvalidInput(where + ": pose must be a 4x4 array of rows");
  for (int r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) throw InvalidInput(where + ": pose must be a 4x4 array of rows");
    for (int c = 0; c < 4; ++c) {
      if (!j[r][c].is_number()) throw InvalidInput(where + ": pose entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

json pose_to_json(const Eigen::Matrix4d& m) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return rows;
}

}  // namespace

void CalibratedBundle::validate() const {
  require(fps > 0, "bundle: fps must be positive");
  require(!frames.empty(), "bundle: no frames");
  intrinsics.validate();
  require(intrinsics.width == width && intrinsics.height == height, "bundle: intrinsics size differs from image size");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    const std::string where = "bundle frame " + std::to_string(i);
    require(f.rgb.width == width && f.rgb.height == height, where + ": RGB size differs from manifest ('" + f.rgb_file + "')");
    require(f.depth.cols() == width && f.depth.rows() == height,
            where + ": depth size differs from manifest ('" + f.depth_file + "')");
    require(motion_shape_ok(f.motion.rows(), f.motion.cols(), height, width),
            where + ": motion map must be (H/8) x (W/8) ('" + f.motion_file + "')");
    require(i == 0 || f.t > frames[i - 1].t, where + ": timestamps must be strictly increasing");
  }
}

CalibratedBundle load_bundle(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("bundle: missing '" + manifest_path.string() + "'");
  json j;
  try {
    j = json::parse(read_file(manifest_path.string()));
  } catch (const json::exception& e) {
    throw InvalidInput("bundle: malformed '" + manifest_path.string() + "': " + e.what());
  }

  CalibratedBundle b;
  std::string convention, encoding;
  std::vector<Eigen::Matrix4d> matrices;
  try {
    b.version = j.at("version").get<int>();
    if (b.version != 1) throw InvalidInput("bundle: manifest version " + std::to_string(b.version) + " unsupported");
    b.fps = j.at("fps").get<double>();
    b.width = j.at("width").get<int>();
    b.height = j.at("height").get<int>();
    const auto& k = j.at("intrinsics");
    b.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                    k.at("cy").get<double>(), b.width, b.height};
    convention = j.value("pose_convention", std::string("c2w"));
    encoding = j.value("motion_encoding", std::string("probability"));
    const int n = j.at("n_frames").get<int>();
    const auto& frames = j.at("frames");
    if (!frames.is_array() || int(frames.size()) != n) {
      throw InvalidInput("bundle: n_frames = " + std::to_string(n) + " but manifest lists " +
                         std::to_string(frames.is_array() ? frames.size() : 0) + " frames");
    }
    b.frames.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
      const auto& fj = frames[std::size_t(i)];
      auto& f = b.frames[std::size_t(i)];
      f.rgb_file = fj.at("rgb").get<std::string>();
      f.depth_file = fj.at("depth").get<std::string>();
      f.motion_file = fj.at("motion").get<std::string>();
      f.t = fj.contains("t") ? fj.at("t").get<double>() : double(i) / b.fps;
      matrices.push_back(pose_from_json(fj.at("pose"), "bundle frame " + std::to_string(i)));
    }
  } catch (const json::exception& e) {
    throw InvalidInput("bundle: invalid manifest: " + std::string(e.what()));
  }
  require(convention == "c2w" || convention == "w2c", "bundle: pose_convention must be \"c2w\" or \"w2c\"");
  require(encoding == "probability" || encoding == "logit",
          "bundle: motion_encoding must be \"probability\" or \"logit\"");
  require(b.fps > 0, "bundle: fps must be positive");
  require(b.width > 0 && b.height > 0, "bundle: image size must be positive");
  b.intrinsics.validate();

  for (std::size_t i = 0; i < b.frames.size(); ++i) {
    const auto pose = Pose<double>::from_matrix(matrices[i]);
    b.frames[i].pose = convention == "c2w" ? pose : pose.inverse();
  }

  // Missing files are reported in frame order before any decoding.
  for (const auto& f : b.frames) {
    for (const auto* file : {&f.rgb_file, &f.depth_file, &f.motion_file}) {
      if (!fs::exists(root / *file)) throw IoError("bundle: missing file '" + (root / *file).string() + "'");
    }
  }

  std::vector<std::exception_ptr> errors(b.frames.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < b.frames.size(); ++i) {
    try {
      auto& f = b.frames[i];
      f.rgb = read_png((root / f.rgb_file).string());
      f.depth = read_pfm((root / f.depth_file).string());
      f.motion = read_pfm((root / f.motion_file).string());
      if (encoding == "logit") {
        for (auto& v : f.motion.reshaped()) v = sigmoid(v);
      }
      if (!((f.motion >= 0.0f) && (f.motion <= 1.0f)).all()) {
        throw InvalidInput("bundle: motion probabilities outside [0, 1] in '" + f.motion_file + "'");
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  b.validate();
  return b;
}

void save_bundle(const CalibratedBundle& b, const std::string& dir) {
  b.validate();
  const fs::path root(dir);
  fs::create_directories(root);
  json frames = json::array();
  for (const auto& f : b.frames) {
    frames.push_back({{"rgb", f.rgb_file},
                      {"depth", f.depth_file},
                      {"motion", f.motion_file},
                      {"pose", pose_to_json(f.pose.matrix())},
                      {"t", f.t}});
  }
  json j = {{"version", b.version},
            {"fps", b.fps},
            {"width", b.width},
            {"height", b.height},
            {"n_frames", b.n_frames()},
            {"intrinsics", {{"fx", b.intrinsics.fx}, {"fy", b.intrinsics.fy}, {"cx", b.intrinsics.cx}, {"cy", b.intrinsics.cy}}},
            {"pose_convention", "c2w"},
            {"motion_encoding", "probability"},
            {"frames", frames}};
  write_file((root / "manifest.json").string(), j.dump(2) + "\n");

  std::vector<std::exception_ptr> errors(b.frames.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < b.frames.size(); ++i) {
    try {
      const auto& f = b.frames[i];
      write_png((root / f.rgb_file).string(), f.rgb);
      write_pfm((root / f.depth_file).string(), f.depth);
      write_pfm((root / f.motion_file).string(), f.motion);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace i4d

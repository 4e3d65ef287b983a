#include "i4d/synthetic.hpp"

#include "i4d/error.hpp"
#include "i4d/io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <random>

namespace i4d {

using nlohmann::json;
using Eigen::Vector3d;

Vector3d Texture::at(const Vector3d& p) const {
  Vector3d c = base;
  for (const auto& w : waves) c += w.amplitude * std::sin(w.wavevector.dot(p) + w.phase);
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

Vector3d SphereSpec::center_at(double t) const {
  return center + velocity * t + amplitude * std::sin(2 * M_PI * frequency * t + phase);
}

Intrinsics<double> SyntheticSceneSpec::intrinsics() const {
  return {focal, focal, 0.5 * (width - 1), 0.5 * (height - 1), width, height};
}

Camera<double> SyntheticSceneSpec::camera_at(double t) const {
  const double span = n_frames > 1 ? double(n_frames - 1) / fps : 1.0;
  const double theta = (camera.start_deg + (camera.end_deg - camera.start_deg) * (t / span)) * M_PI / 180.0;
  const Vector3d eye = camera.target + Vector3d(camera.radius * std::sin(theta), camera.height,
                                                -camera.radius * std::cos(theta));
  return {Pose<double>::look_at(eye, camera.target, Vector3d(0, -1, 0)), intrinsics()};
}

void SyntheticSceneSpec::validate() const {
  require(width >= 8 && height >= 8, "synthetic spec: image must be at least 8x8");
  require(n_frames >= 1, "synthetic spec: n_frames must be positive");
  require(fps > 0 && focal > 0, "synthetic spec: fps and focal must be positive");
  require(supersample >= 1 && supersample <= 8, "synthetic spec: supersample must be in [1, 8]");
  require(depth_noise >= 0 && motion_noise >= 0, "synthetic spec: noise levels must be non-negative");
  require(!planes.empty() || !spheres.empty(), "synthetic spec: scene has no geometry");
  for (const auto& p : planes) require(p.normal.norm() > 1e-9, "synthetic spec: plane normal is zero");
  for (const auto& s : spheres) require(s.radius > 0, "synthetic spec: sphere radius must be positive");

  for (int i = 0; i < n_frames; ++i) {
    const double theta = (camera.start_deg + (camera.end_deg - camera.start_deg) * (n_frames > 1 ? double(i) / (n_frames - 1) : 0.0)) * M_PI / 180.0;
    const Vector3d eye = camera.target + Vector3d(camera.radius * std::sin(theta), camera.height,
                                                  -camera.radius * std::cos(theta));
    const Vector3d dir = camera.target - eye;
    require(eye.allFinite() && dir.norm() > 1e-6, "synthetic spec: degenerate camera path (eye on target)");
    require(dir.normalized().cross(Vector3d(0, -1, 0)).norm() > 1e-6,
            "synthetic spec: degenerate camera path (view direction parallel to up)");
  }
  for (const auto& s : spheres) {
    if (!s.dynamic()) continue;
    int inside = 0;
    for (int i = 0; i < n_frames; ++i) {
      const double t = frame_time(i);
      const auto cam = camera_at(t);
      const auto p = project(s.center_at(t), cam.pose, cam.intrinsics);
      inside += p && cam.intrinsics.contains(p->pixel) ? 1 : 0;
    }
    require(inside * 5 >= n_frames * 4, "synthetic spec: a moving object is inside the frustum for fewer than 80% of frames");
  }
}

// ---------------------------------------------------------------- JSON

namespace {

Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw InvalidInput("synthetic spec: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_json(const Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Texture texture_from(const json& j) {
  Texture t;
  t.base = vec3(j.at("base"));
  for (const auto& w : j.value("waves", json::array())) {
    t.waves.push_back({vec3(w.at("amplitude")), vec3(w.at("wavevector")), w.value("phase", 0.0)});
  }
  return t;
}

json texture_json(const Texture& t) {
  json waves = json::array();
  for (const auto& w : t.waves) {
    waves.push_back({{"amplitude", vec3_json(w.amplitude)}, {"wavevector", vec3_json(w.wavevector)}, {"phase", w.phase}});
  }
  return {{"base", vec3_json(t.base)}, {"waves", waves}};
}

}  // namespace

SyntheticSceneSpec spec_from_json(const std::string& text) {
  SyntheticSceneSpec s;
  try {
    const json j = json::parse(text);
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.n_frames = j.at("n_frames").get<int>();
    s.fps = j.at("fps").get<double>();
    s.focal = j.at("focal").get<double>();
    s.supersample = j.value("supersample", 3);
    s.depth_noise = j.value("depth_noise", 0.0);
    s.motion_noise = j.value("motion_noise", 0.0);
    if (j.contains("background")) s.background = vec3(j["background"]);
    const auto& c = j.at("camera");
    s.camera.target = vec3(c.at("target"));
    s.camera.radius = c.at("radius").get<double>();
    s.camera.height = c.value("height", 0.0);
    s.camera.start_deg = c.value("start_deg", 0.0);
    s.camera.end_deg = c.value("end_deg", 0.0);
    for (const auto& p : j.value("planes", json::array())) {
      s.planes.push_back({vec3(p.at("point")), vec3(p.at("normal")), texture_from(p.at("texture"))});
    }
    for (const auto& q : j.value("spheres", json::array())) {
      SphereSpec sp;
      sp.center = vec3(q.at("center"));
      sp.radius = q.at("radius").get<double>();
      sp.texture = texture_from(q.at("texture"));
      if (q.contains("velocity")) sp.velocity = vec3(q["velocity"]);
      if (q.contains("amplitude")) sp.amplitude = vec3(q["amplitude"]);
      sp.frequency = q.value("frequency", 0.0);
      sp.phase = q.value("phase", 0.0);
      s.spheres.push_back(sp);
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string spec_to_json(const SyntheticSceneSpec& s) {
  json planes = json::array(), spheres = json::array();
  for (const auto& p : s.planes) {
    planes.push_back({{"point", vec3_json(p.point)}, {"normal", vec3_json(p.normal)}, {"texture", texture_json(p.texture)}});
  }
  for (const auto& q : s.spheres) {
    spheres.push_back({{"center", vec3_json(q.center)},
                       {"radius", q.radius},
                       {"texture", texture_json(q.texture)},
                       {"velocity", vec3_json(q.velocity)},
                       {"amplitude", vec3_json(q.amplitude)},
                       {"frequency", q.frequency},
                       {"phase", q.phase}});
  }
  json j = {{"width", s.width},
            {"height", s.height},
            {"n_frames", s.n_frames},
            {"fps", s.fps},
            {"focal", s.focal},
            {"supersample", s.supersample},
            {"depth_noise", s.depth_noise},
            {"motion_noise", s.motion_noise},
            {"background", vec3_json(s.background)},
            {"camera",
             {{"target", vec3_json(s.camera.target)},
              {"radius", s.camera.radius},
              {"height", s.camera.height},
              {"start_deg", s.camera.start_deg},
              {"end_deg", s.camera.end_deg}}},
            {"planes", planes},
            {"spheres", spheres}};
  return j.dump(2) + "\n";
}

SyntheticSceneSpec load_spec(const std::string& path) { return spec_from_json(read_file(path)); }

SyntheticSceneSpec reference_scene_spec() {
  SyntheticSceneSpec s;
  s.width = 256;
  s.height = 256;
  s.n_frames = 60;
  s.fps = 30;
  s.focal = 230;
  s.supersample = 3;
  s.camera = {{0.0, 0.3, 2.0}, 3.0, -0.6, -12.0, 12.0};

  Texture wall;
  wall.base = {0.55, 0.5, 0.45};
  wall.waves = {{{0.15, 0.1, 0.05}, {5.0, 0.0, 0.0}, 0.0}, {{0.05, 0.12, 0.1}, {0.0, 7.0, 0.0}, 1.0}};
  Texture floor;
  floor.base = {0.35, 0.45, 0.35};
  floor.waves = {{{0.1, 0.12, 0.08}, {4.0, 0.0, 3.0}, 0.5}, {{0.08, 0.04, 0.1}, {-3.0, 0.0, 6.0}, 2.0}};
  s.planes = {{{0.0, 0.0, 4.0}, {0.0, 0.0, -1.0}, wall}, {{0.0, 1.0, 0.0}, {0.0, -1.0, 0.0}, floor}};

  Texture rock;
  rock.base = {0.3, 0.35, 0.7};
  rock.waves = {{{0.15, 0.1, 0.1}, {8.0, 4.0, 0.0}, 0.0}};
  Texture ball;
  ball.base = {0.85, 0.4, 0.2};
  ball.waves = {{{0.1, 0.15, 0.1}, {0.0, 9.0, 6.0}, 0.3}};
  SphereSpec fixed;
  fixed.center = {-0.75, 0.55, 2.4};
  fixed.radius = 0.45;
  fixed.texture = rock;
  SphereSpec moving;
  moving.center = {-0.05, 0.45, 1.6};
  moving.radius = 0.35;
  moving.texture = ball;
  moving.velocity = {0.33, 0.0, 0.0};
  moving.amplitude = {0.0, 0.08, 0.0};
  moving.frequency = 0.5;
  s.spheres = {fixed, moving};
  return s;
}

// ---------------------------------------------------------------- tracing

namespace {

struct Hit {
  double s{std::numeric_limits<double>::infinity()};  // ray parameter = camera z-depth
  Vector3d color{Vector3d::Zero()};
  bool dynamic{false};
};

struct SceneAtTime {
  const SyntheticSceneSpec* spec;
  std::vector<Vector3d> centers;
};

Hit trace(const SceneAtTime& scene, const Vector3d& origin, const Vector3d& dir) {
  Hit best;
  for (const auto& p : scene.spec->planes) {
    const double denom = p.normal.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double s = p.normal.dot(p.point - origin) / denom;
    if (s > 1e-9 && s < best.s) {
      best.s = s;
      best.color = p.texture.at(origin + s * dir);
      best.dynamic = false;
    }
  }
  for (std::size_t k = 0; k < scene.spec->spheres.size(); ++k) {
    const auto& sp = scene.spec->spheres[k];
    const Vector3d oc = origin - scene.centers[k];
    const double a = dir.squaredNorm();
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - sp.radius * sp.radius;
    const double disc = b * b - a * c;
    if (disc < 0) continue;
    const double s = (-b - std::sqrt(disc)) / a;
    if (s > 1e-9 && s < best.s) {
      best.s = s;
      best.color = sp.texture.at(origin + s * dir - scene.centers[k]);
      best.dynamic = sp.dynamic();
    }
  }
  return best;
}

}  // namespace

TraceResult trace_view(const SyntheticSceneSpec& spec, const Camera<double>& camera, double t) {
  SceneAtTime scene{&spec, {}};
  for (const auto& s : spec.spheres) scene.centers.push_back(s.center_at(t));
  const auto& k = camera.intrinsics;
  const Eigen::Matrix3d& r = camera.pose.rotation();
  const Vector3d origin = camera.pose.translation();
  const int ss = spec.supersample;

  TraceResult out;
  out.rgb = RgbImage<float>(k.width, k.height);
  out.depth.setZero(k.height, k.width);
  out.dynamic.setZero(k.height, k.width);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Hit center = trace(scene, origin, r * Vector3d((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0));
      out.depth(y, x) = std::isfinite(center.s) ? float(center.s) : 0.0f;
      out.dynamic(y, x) = center.dynamic ? 1 : 0;
      Vector3d acc = Vector3d::Zero();
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double px = x + (sx + 0.5) / ss - 0.5;
          const double py = y + (sy + 0.5) / ss - 0.5;
          const Hit h = trace(scene, origin, r * Vector3d((px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0));
          acc += std::isfinite(h.s) ? h.color : spec.background;
        }
      }
      acc /= double(ss * ss);
      for (int c = 0; c < 3; ++c) out.rgb(x, y, c) = float(acc(c));
    }
  }
  return out;
}

RgbImage<float> render_ground_truth(const SyntheticSceneSpec& spec, const Camera<double>& camera, double t) {
  return trace_view(spec, camera, t).rgb;
}

SyntheticOutput generate_synthetic(const SyntheticSceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticOutput out;
  auto& b = out.bundle;
  b.fps = spec.fps;
  b.width = spec.width;
  b.height = spec.height;
  b.intrinsics = spec.intrinsics();
  b.frames.resize(std::size_t(spec.n_frames));
  out.dynamic_masks.resize(std::size_t(spec.n_frames));
  const int mh = spec.height / 8, mw = spec.width / 8;

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < spec.n_frames; ++i) {
    const double t = spec.frame_time(i);
    const auto cam = spec.camera_at(t);
    auto view = trace_view(spec, cam, t);
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + std::uint64_t(i));
    std::normal_distribution<double> noise(0.0, 1.0);

    auto& f = b.frames[std::size_t(i)];
    f.t = t;
    f.pose = cam.pose;
    f.rgb = quantize8(view.rgb);
    f.depth = view.depth;
    if (spec.depth_noise > 0) {
      for (auto& d : f.depth.reshaped())
        if (d > 0) d = float(d * std::max(0.05, 1.0 + spec.depth_noise * noise(rng)));
    }
    f.motion.setZero(mh, mw);
    for (int by = 0; by < mh; ++by)
      for (int bx = 0; bx < mw; ++bx) {
        double p = view.dynamic.block(by * 8, bx * 8, 8, 8).cast<double>().mean();
        if (spec.motion_noise > 0) p = std::clamp(p + spec.motion_noise * noise(rng), 0.0, 1.0);
        f.motion(by, bx) = float(p);
      }
    f.rgb_file = frame_file_name("rgb", i, "png");
    f.depth_file = frame_file_name("depth", i, "pfm");
    f.motion_file = frame_file_name("motion", i, "pfm");
    out.dynamic_masks[std::size_t(i)] = view.dynamic;
  }
  return out;
}

}  // namespace i4d

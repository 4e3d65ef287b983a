#include "i4d/bundle.hpp"
#include "i4d/io.hpp"
#include "i4d/synthetic.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace i4d;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("i4d_bundle_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SyntheticSceneSpec small_spec(int frames = 4) {
  auto s = reference_scene_spec();
  s.width = 64;
  s.height = 48;
  s.focal = 60;
  s.n_frames = frames;
  s.supersample = 1;
  return s;
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = read_file(e.path().string());
  return out;
}

// Area of the image region whose rays hit a sphere: the interior of the conic
// x^T M x >= 0 with M = c c^T - (|c|^2 - r^2) I, in normalized coordinates.
double projected_disk_area(const Eigen::Vector3d& c, double r, double fx, double fy) {
  const Eigen::Matrix3d m = c * c.transpose() - (c.squaredNorm() - r * r) * Eigen::Matrix3d::Identity();
  const Eigen::Matrix2d a = -m.topLeftCorner<2, 2>();
  return M_PI * std::abs(m.determinant()) / std::pow(a.determinant(), 1.5) * fx * fy;
}

}  // namespace

TEST(Bundle, SyntheticRoundTripsToIdenticalBytes) {
  auto out = generate_synthetic(small_spec(), 3);
  auto a = fresh_dir("a"), b = fresh_dir("b");
  save_bundle(out.bundle, a.string());
  auto loaded = load_bundle(a.string());
  save_bundle(loaded, b.string());
  auto ca = dir_contents(a), cb = dir_contents(b);
  EXPECT_EQ(ca.size(), 1u + 3u * 4u);
  EXPECT_EQ(ca, cb);
  EXPECT_TRUE((loaded.frames[2].rgb.pixels == out.bundle.frames[2].rgb.pixels).all());
  EXPECT_TRUE((loaded.frames[2].pose.matrix().array() == out.bundle.frames[2].pose.matrix().array()).all());
}

TEST(Bundle, MissingDepthNamesTheFile) {
  auto out = generate_synthetic(small_spec(), 3);
  auto dir = fresh_dir("missing");
  save_bundle(out.bundle, dir.string());
  fs::remove(dir / "depth_000003.pfm");
  try {
    load_bundle(dir.string());
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("depth_000003.pfm"), std::string::npos) << e.what();
  }
}

TEST(Bundle, RejectsInconsistentManifests) {
  auto out = generate_synthetic(small_spec(3), 3);
  auto dir = fresh_dir("bad");
  save_bundle(out.bundle, dir.string());
  const auto manifest = read_file((dir / "manifest.json").string());
  auto rewrite = [&](const std::string& from, const std::string& to) {
    std::string m = manifest;
    const auto pos = m.find(from);
    ASSERT_NE(pos, std::string::npos) << from;
    m.replace(pos, from.size(), to);
    write_file((dir / "manifest.json").string(), m);
  };
  rewrite("\"n_frames\": 3", "\"n_frames\": 4");
  EXPECT_THROW(load_bundle(dir.string()), InvalidInput);
  rewrite("\"pose_convention\": \"c2w\"", "\"pose_convention\": \"sideways\"");
  EXPECT_THROW(load_bundle(dir.string()), InvalidInput);
  rewrite("\"t\": 0.06666666666666667", "\"t\": 0.01");
  EXPECT_THROW(load_bundle(dir.string()), InvalidInput);
  rewrite("\"width\": 64", "\"width\": 32");
  EXPECT_THROW(load_bundle(dir.string()), InvalidInput);
  write_file((dir / "manifest.json").string(), "{ not json");
  EXPECT_THROW(load_bundle(dir.string()), InvalidInput);
  EXPECT_THROW(load_bundle((dir / "nope").string()), IoError);
}

TEST(Bundle, WorldToCameraAndLogitEncodings) {
  auto out = generate_synthetic(small_spec(2), 3);
  auto dir = fresh_dir("w2c");
  auto b = out.bundle;
  for (auto& f : b.frames) f.motion = f.motion.cwiseMax(0.01f).cwiseMin(0.99f);
  save_bundle(b, dir.string());
  auto j = read_file((dir / "manifest.json").string());
  // Rewrite as world-to-camera with logit-encoded motion.
  for (auto& f : b.frames) {
    Plane<float> logits = (f.motion / (1.0f - f.motion)).log();
    write_pfm((dir / f.motion_file).string(), logits);
  }
  std::string m = j;
  m.replace(m.find("\"probability\""), 13, "\"logit\"");
  m.replace(m.find("\"c2w\""), 5, "\"w2c\"");
  write_file((dir / "manifest.json").string(), m);
  auto loaded = load_bundle(dir.string());
  // The stored c2w matrices are now read as w2c, so poses come back inverted.
  EXPECT_LT((loaded.frames[1].pose.matrix() - b.frames[1].pose.inverse().matrix()).norm(), 1e-12);
  EXPECT_LT((loaded.frames[1].motion - b.frames[1].motion).abs().maxCoeff(), 1e-6f);
}

TEST(Synthetic, SameSeedIsByteIdentical) {
  auto spec = small_spec(3);
  spec.depth_noise = 0.01;
  spec.motion_noise = 0.05;
  auto a = fresh_dir("s1"), b = fresh_dir("s2"), c = fresh_dir("s3");
  save_bundle(generate_synthetic(spec, 9).bundle, a.string());
  save_bundle(generate_synthetic(spec, 9).bundle, b.string());
  save_bundle(generate_synthetic(spec, 10).bundle, c.string());
  EXPECT_EQ(dir_contents(a), dir_contents(b));
  EXPECT_NE(dir_contents(a), dir_contents(c));
}

TEST(Synthetic, StaticOnlyHasZeroMotion) {
  auto spec = small_spec(3);
  spec.spheres.pop_back();
  auto out = generate_synthetic(spec, 1);
  for (const auto& f : out.bundle.frames) EXPECT_EQ(f.motion.maxCoeff(), 0.0f);
}

TEST(Synthetic, DynamicCoverageMatchesProjectedDiskArea) {
  auto spec = reference_scene_spec();
  spec.spheres.erase(spec.spheres.begin());  // keep only the moving sphere
  spec.n_frames = 12;
  spec.supersample = 1;
  auto out = generate_synthetic(spec, 1);
  for (int i = 0; i < spec.n_frames; ++i) {
    const auto& f = out.bundle.frames[i];
    const Eigen::Vector3d c = f.pose.to_camera(spec.spheres[0].center_at(f.t));
    const double area = projected_disk_area(c, spec.spheres[0].radius, spec.focal, spec.focal);
    const double count = out.dynamic_masks[i].cast<double>().sum();
    EXPECT_NEAR(count, area, 0.02 * area) << "frame " << i;
  }
}

TEST(Synthetic, ExactDepthOnAPlane) {
  SyntheticSceneSpec s;
  s.width = s.height = 32;
  s.n_frames = 1;
  s.focal = 30;
  s.supersample = 1;
  s.camera = {{0, 0, 5}, 5, 0, 0, 0};
  s.planes.push_back({{0, 0, 5}, {0, 0, -1}, Texture{}});
  auto out = generate_synthetic(s, 0);
  const auto& f = out.bundle.frames[0];
  EXPECT_NEAR(f.depth.minCoeff(), 5.0f, 1e-5);
  EXPECT_NEAR(f.depth.maxCoeff(), 5.0f, 1e-5);
}

TEST(Synthetic, RejectsDegenerateSpecs) {
  auto s = small_spec();
  s.camera.radius = 0;
  s.camera.height = 0;
  EXPECT_THROW(s.validate(), InvalidInput);
  s = small_spec();
  s.spheres.back().velocity = {40, 0, 0};  // leaves the frustum almost immediately
  s.n_frames = 30;
  EXPECT_THROW(s.validate(), InvalidInput);
  EXPECT_THROW(spec_from_json("{\"width\": 4}"), InvalidInput);
}

TEST(Synthetic, ShippedReferenceSpecMatchesBuiltIn) {
  const auto path = std::string(I4D_SOURCE_DIR) + "/data/reference_scene.json";
  EXPECT_EQ(spec_to_json(load_spec(path)), spec_to_json(reference_scene_spec()));
  EXPECT_EQ(spec_to_json(spec_from_json(spec_to_json(reference_scene_spec()))), spec_to_json(reference_scene_spec()));
}

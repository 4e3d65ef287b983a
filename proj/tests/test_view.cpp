#include "i4d/view.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace i4d;
using nlohmann::json;

namespace {

json identity_request() {
  return {{"pose", {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}}};
}

}  // namespace

TEST(ViewRequest, DefaultsFillMissingFields) {
  const ViewRequest r = view_request_from_json(identity_request());
  EXPECT_EQ(r.width, 640);
  EXPECT_EQ(r.height, 360);
  EXPECT_EQ(r.fov_y, 60.0);
  EXPECT_EQ(r.quality, 85);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.id, 0u);
  EXPECT_TRUE(r.pose.isIdentity());
}

TEST(ViewRequest, NestedAndFlatPosesAgree) {
  const Eigen::Matrix4d m = Pose<double>::look_at({1, -2, 0.5}, {0, 0, 3}, {0, -1, 0}).matrix();
  json flat = json::array(), nested = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) {
      flat.push_back(m(r, c));
      row.push_back(m(r, c));
    }
    nested.push_back(row);
  }
  const ViewRequest a = view_request_from_json({{"pose", flat}, {"t", 0.25}, {"id", 7}});
  const ViewRequest b = view_request_from_json({{"pose", nested}, {"t", 0.25}, {"id", 7}});
  EXPECT_EQ(a.pose, m);
  EXPECT_EQ(b.pose, m);
  EXPECT_EQ(a.id, 7u);
}

TEST(ViewRequest, JsonRoundTrip) {
  ViewRequest r;
  r.pose = Pose<double>::look_at({0.3, 0.1, -1}, {0, 0, 2}, {0, -1, 0}).matrix();
  r.t = 1.25;
  r.width = 320;
  r.height = 200;
  r.fov_y = 45;
  r.quality = 70;
  r.id = 123456789012345ull;
  const ViewRequest back = view_request_from_json(view_request_to_json(r));
  EXPECT_EQ(back.pose, r.pose);
  EXPECT_EQ(back.t, r.t);
  EXPECT_EQ(back.width, r.width);
  EXPECT_EQ(back.height, r.height);
  EXPECT_EQ(back.fov_y, r.fov_y);
  EXPECT_EQ(back.quality, r.quality);
  EXPECT_EQ(back.id, r.id);
}

TEST(ViewRequest, RejectsMalformedInput) {
  const auto bad = [](json j) { EXPECT_THROW(view_request_from_json(j), InvalidInput) << j.dump(); };
  bad(json::array());
  bad(json{{"t", 0}});
  bad(json{{"pose", {1, 2, 3}}});
  bad(json{{"pose", "identity"}});
  auto j = identity_request();
  j["pose"][0] = "x";
  bad(j);
  j = identity_request();
  j["pose"][0] = 2;  // not a rotation
  bad(j);
  j = identity_request();
  j["pose"][12] = 1;  // bottom row
  bad(j);
  for (const auto& [key, value] : std::vector<std::pair<std::string, json>>{{"width", 0},
                                                                             {"height", -4},
                                                                             {"width", 2.5},
                                                                             {"fov_y", 0},
                                                                             {"fov_y", 180},
                                                                             {"quality", 0},
                                                                             {"quality", 101},
                                                                             {"t", "soon"},
                                                                             {"id", -1},
                                                                             {"id", 1.5}}) {
    j = identity_request();
    j[key] = value;
    bad(j);
  }
}

TEST(ViewRequest, PixelBudget) {
  auto j = identity_request();
  j["width"] = 2048;
  j["height"] = 2048;
  EXPECT_NO_THROW(view_request_from_json(j));
  j["height"] = 2049;
  EXPECT_THROW(view_request_from_json(j), InvalidInput);
}

TEST(ViewRequest, CameraFromFieldOfView) {
  ViewRequest r;
  r.width = 100;
  r.height = 50;
  r.fov_y = 90;
  const auto cam = r.camera();
  EXPECT_NEAR(cam.intrinsics.fy, 25.0, 1e-12);
  EXPECT_EQ(cam.intrinsics.fx, cam.intrinsics.fy);
  EXPECT_EQ(cam.intrinsics.cx, 49.5);
  EXPECT_EQ(cam.intrinsics.cy, 24.5);
}

TEST(ClampTime, ClampsIntoClip) {
  GaussianModel<float> m;
  m.video_length = 2.0;
  bool clamped = false;
  EXPECT_EQ(clamp_time(m, 1.0, &clamped), 1.0);
  EXPECT_FALSE(clamped);
  EXPECT_EQ(clamp_time(m, 2.5, &clamped), 2.0);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(clamp_time(m, -1.0, &clamped), 0.0);
  EXPECT_TRUE(clamped);
}

TEST(RenderView, MatchesDirectRenderAtClampedTime) {
  std::mt19937_64 rng(5);
  const auto model = i4d::testing::random_scene<float>(8, rng);
  ViewRequest r;
  r.width = 48;
  r.height = 32;
  r.fov_y = 50;
  r.t = 7.0;
  Rasterizer<float> a, b;
  const auto via_view = render_view(a, model, r);
  const auto direct = b.render(model, r.camera().cast<float>(), float(model.video_length));
  EXPECT_EQ(via_view.t, model.video_length);
  EXPECT_TRUE((via_view.rgb.pixels == direct.rgb.pixels).all());
  EXPECT_GT(via_view.rgb.pixels.maxCoeff(), 0.0f);
}

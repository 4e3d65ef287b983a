#include "i4d/motion_mask.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace i4d;

namespace {

MotionProbMap<float> constant_map(int h, int w, float v, int frame) {
  return {Plane<float>::Constant(h, w, v), frame};
}

double bilinear_oracle(const Plane<double>& src, int H, int W, int y, int x) {
  const double sy = double(y) * double(src.rows() - 1) / double(H - 1);
  const double sx = double(x) * double(src.cols() - 1) / double(W - 1);
  const int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
  const int y1 = std::min<int>(y0 + 1, int(src.rows()) - 1), x1 = std::min<int>(x0 + 1, int(src.cols()) - 1);
  const double ty = sy - y0, tx = sx - x0;
  return (1 - ty) * ((1 - tx) * src(y0, x0) + tx * src(y0, x1)) + ty * ((1 - tx) * src(y1, x0) + tx * src(y1, x1));
}

}  // namespace

TEST(Upsample, ConstantStaysConstant) {
  Plane<float> m = Plane<float>::Constant(2, 2, 0.5f);
  auto up = upsample_prob(m, 16, 16);
  EXPECT_EQ(up.rows(), 16);
  EXPECT_TRUE((up == 0.5f).all());
}

TEST(Upsample, LinearRamp) {
  Plane<double> m(1, 2);
  m << 0.0, 1.0;
  auto up = upsample_prob(m, 1, 4);
  EXPECT_NEAR(up(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(up(0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(up(0, 2), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(up(0, 3), 1.0, 1e-15);
}

TEST(Upsample, MatchesReferenceBilinear) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  Plane<double> m(4, 4);
  for (auto& v : m.reshaped()) v = u(rng);
  auto up = upsample_prob(m, 32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) EXPECT_NEAR(up(y, x), bilinear_oracle(m, 32, 32, y, x), 1e-6);
}

TEST(Upsample, Rejects) {
  EXPECT_THROW(upsample_prob(Plane<float>(0, 0), 4, 4), InvalidInput);
  EXPECT_THROW(upsample_prob(Plane<float>(Plane<float>::Zero(8, 8)), 4, 4), InvalidInput);
}

TEST(Otsu, Bimodal) {
  std::vector<float> v(50, 0.1f);
  v.insert(v.end(), 50, 0.9f);
  auto r = otsu_threshold(v);
  EXPECT_FALSE(r.degenerate);
  EXPECT_GT(r.threshold, 0.1);
  EXPECT_LT(r.threshold, 0.9);
  EXPECT_EQ(r.bin, i4d::testing::otsu_samples_oracle(v, 256));
}

TEST(Otsu, ConstantInputIsDegenerate) {
  std::vector<float> v(100, 0.0f);
  auto r = otsu_threshold(v);
  EXPECT_TRUE(r.degenerate);
  EXPECT_GT(r.threshold, 0.0);
  EXPECT_EQ(r.bin, 256);
}

TEST(Otsu, MatchesSampleOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<float> v(1000);
    std::uniform_real_distribution<float> u(0, 1);
    std::normal_distribution<float> lo(0.2f, 0.08f), hi(0.75f, 0.1f);
    for (auto& x : v) {
      const float s = trial % 2 ? u(rng) : (u(rng) < 0.6f ? lo(rng) : hi(rng));
      x = std::clamp(s, 0.0f, 1.0f);
    }
    EXPECT_EQ(otsu_threshold(v).bin, i4d::testing::otsu_samples_oracle(v, 256));
  }
}

TEST(Otsu, MatchesHistogramOracleIncludingTies) {
  std::mt19937_64 rng(3);
  // Symmetric two-spike histogram: every edge between the spikes ties.
  std::vector<std::uint64_t> h(16, 0);
  h[2] = 10;
  h[12] = 10;
  EXPECT_EQ(otsu_from_histogram(h).bin, 3);
  EXPECT_EQ(i4d::testing::otsu_oracle(h), 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint64_t> hist(256);
    std::uniform_int_distribution<int> occupancy(0, 3);
    for (auto& x : hist) x = occupancy(rng) == 0 ? rng() % 1000 : 0;
    EXPECT_EQ(otsu_from_histogram(hist).bin, i4d::testing::otsu_oracle(hist));
  }
}

TEST(Otsu, BinaryMaskIsAFixedPoint) {
  std::vector<float> v;
  for (int i = 0; i < 300; ++i) v.push_back(i % 7 == 0 ? 1.0f : 0.0f);
  auto r = otsu_threshold(v);
  for (float x : v) EXPECT_EQ(probability_bin(x, 256) >= r.bin, x == 1.0f);
}

TEST(PseudoFrames, ThreeMapsTwoPads) {
  std::vector<MotionProbMap<float>> seq = {constant_map(2, 2, 0.0f, 0), constant_map(2, 2, 0.4f, 1),
                                           constant_map(2, 2, 1.0f, 2)};
  auto p = pad_pseudo_frames(seq, 2);
  ASSERT_EQ(p.size(), 7u);
  EXPECT_TRUE((p[0].values == 0.2f).all());
  EXPECT_TRUE((p[1].values == 0.2f).all());
  EXPECT_TRUE((p[5].values == 0.7f).all());
  EXPECT_EQ(p[0].frame, kPseudoFrame);
  EXPECT_EQ(p[6].frame, kPseudoFrame);
  EXPECT_EQ(p[2].frame, 0);
}

TEST(PseudoFrames, ZeroIsIdentity) {
  std::vector<MotionProbMap<float>> seq = {constant_map(2, 2, 0.1f, 0), constant_map(2, 2, 0.3f, 1)};
  auto p = pad_pseudo_frames(seq, 0);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_TRUE((p[1].values == seq[1].values).all());
}

TEST(Masks, ConstantZeroIsAllStatic) {
  std::vector<MotionProbMap<float>> seq;
  for (int i = 0; i < 4; ++i) seq.push_back(constant_map(4, 4, 0.0f, i));
  auto r = compute_masks(seq, 32, 32);
  ASSERT_EQ(r.masks.size(), 4u);
  for (const auto& m : r.masks) EXPECT_EQ(m.cast<int>().sum(), 0);
}

namespace {

// Moving disk: ground-truth coverage at full resolution, block coverage at 1/8.
struct BlobSequence {
  std::vector<MotionProbMap<float>> maps;
  std::vector<Plane<double>> distance_to_edge;  // signed: positive inside
};

BlobSequence moving_blob(int frames, int H, int W) {
  BlobSequence out;
  for (int f = 0; f < frames; ++f) {
    const double cx = 20 + 4.0 * f, cy = 30 + 1.5 * f, r = 12;
    Plane<double> dist(H, W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) dist(y, x) = r - std::hypot(x - cx, y - cy);
    Plane<float> low(H / 8, W / 8);
    for (int by = 0; by < H / 8; ++by)
      for (int bx = 0; bx < W / 8; ++bx) {
        const double cover = (dist.block(by * 8, bx * 8, 8, 8) > 0).cast<double>().mean();
        low(by, bx) = float(0.05 + 0.9 * cover);
      }
    out.maps.push_back({low, f});
    out.distance_to_edge.push_back(dist);
  }
  return out;
}

}  // namespace

TEST(Masks, MovingBlobWithinInterpolationBlur) {
  const int H = 96, W = 128;
  auto blob = moving_blob(10, H, W);
  auto r = compute_masks(blob.maps, H, W);
  ASSERT_EQ(r.masks.size(), 10u);
  for (int f = 0; f < 10; ++f) {
    const auto& d = blob.distance_to_edge[f];
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (d(y, x) > 8) {
          EXPECT_EQ(r.masks[f](y, x), 1) << f << " " << x << " " << y;
        }
        if (d(y, x) < -8) {
          EXPECT_EQ(r.masks[f](y, x), 0) << f << " " << x << " " << y;
        }
      }
  }
}

TEST(Masks, PooledThresholdDecomposes) {
  const int H = 48, W = 64;
  auto blob = moving_blob(5, H, W);
  MaskOptions opt;
  auto r = compute_masks(blob.maps, H, W, opt);
  std::vector<float> pooled;
  for (const auto& m : pad_pseudo_frames(blob.maps, opt.pseudo_frames)) {
    auto up = upsample_prob(m.values, H, W);
    pooled.insert(pooled.end(), up.data(), up.data() + up.size());
  }
  const auto otsu = otsu_threshold(pooled);
  EXPECT_EQ(otsu.bin, r.otsu.bin);
  for (int f = 0; f < 5; ++f) {
    auto up = upsample_prob(blob.maps[f].values, H, W);
    for (Eigen::Index p = 0; p < up.size(); ++p) {
      EXPECT_EQ(r.masks[f].data()[p], up.data()[p] >= otsu.threshold ? 1 : 0);
    }
  }
}

TEST(Masks, PaddingActsOnlyThroughThePooledThreshold) {
  const int H = 48, W = 64;
  auto blob = moving_blob(10, H, W);
  MaskOptions padded, plain;
  padded.pseudo_frames = 1;
  plain.pseudo_frames = 0;
  auto a = compute_masks(blob.maps, H, W, padded);
  auto b = compute_masks(blob.maps, H, W, plain);
  const double lo = std::min(a.otsu.threshold, b.otsu.threshold);
  const double hi = std::max(a.otsu.threshold, b.otsu.threshold);
  for (int f = 0; f < 10; ++f) {
    auto up = upsample_prob(blob.maps[f].values, H, W);
    for (Eigen::Index p = 0; p < up.size(); ++p) {
      if (a.masks[f].data()[p] != b.masks[f].data()[p]) {
        EXPECT_GE(up.data()[p], lo);
        EXPECT_LT(up.data()[p], hi);
      }
    }
  }
}

TEST(Masks, CountAndMonotonicity) {
  const int H = 48, W = 64;
  auto blob = moving_blob(6, H, W);
  for (int k : {0, 1, 3}) {
    MaskOptions opt;
    opt.pseudo_frames = k;
    EXPECT_EQ(compute_masks(blob.maps, H, W, opt).masks.size(), 6u);
  }
  auto base = compute_masks(blob.maps, H, W);
  auto shifted = blob.maps;
  // 0.05 -> 0.05 + 1/256 does not cross the threshold for any pixel.
  for (auto& m : shifted) m.values += 1.0f / 256.0f;
  auto moved = compute_masks(shifted, H, W);
  for (int f = 0; f < 6; ++f) EXPECT_TRUE((base.masks[f] == moved.masks[f]).all());
}

TEST(Masks, Dilation) {
  Mask m = Mask::Zero(9, 9);
  m(4, 4) = 1;
  auto d = dilate(m, 2);
  EXPECT_EQ(d.cast<int>().sum(), 13);
  EXPECT_EQ(d(4, 6), 1);
  EXPECT_EQ(d(6, 6), 0);
}

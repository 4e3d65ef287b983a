#include "i4d/io.hpp"

#include "i4d/error.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace i4d;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / ("i4d_io_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Pfm, RoundTripKeepsRowOrder) {
  Plane<float> p(3, 4);
  for (int i = 0; i < 12; ++i) p.data()[i] = float(i) * 0.25f - 1.0f;
  const auto path = (temp_dir() / "a.pfm").string();
  write_pfm(path, p);
  auto q = read_pfm(path);
  EXPECT_TRUE((p == q).all());
  // Bottom row first on disk.
  const auto bytes = read_file(path);
  float first;
  std::memcpy(&first, bytes.data() + std::string("Pf\n4 3\n-1.0\n").size(), 4);
  EXPECT_EQ(first, p(2, 0));
}

TEST(Pfm, BigEndianAndColor) {
  std::string bytes = "PF\n1 1\n1.0\n";
  const float rgb[3] = {0.5f, -2.0f, 8.0f};
  for (float v : rgb) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u = __builtin_bswap32(u);
    bytes.append(reinterpret_cast<const char*>(&u), 4);
  }
  auto img = decode_pfm(bytes);
  ASSERT_EQ(img.channels, 3);
  EXPECT_EQ(img.data[0], 0.5f);
  EXPECT_EQ(img.data[1], -2.0f);
  EXPECT_EQ(img.data[2], 8.0f);
}

TEST(Pfm, TruncationFuzzReportsByteOffset) {
  PfmImage img;
  img.width = 5;
  img.height = 4;
  img.data.assign(20, 1.5f);
  const std::string good = encode_pfm(img);
  for (std::size_t n = 0; n < good.size(); ++n) {
    try {
      decode_pfm(good.substr(0, n), "cut.pfm");
      ADD_FAILURE() << "accepted truncated input of length " << n;
    } catch (const IoError& e) {
      EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
      EXPECT_NE(std::string(e.what()).find("cut.pfm"), std::string::npos);
    }
  }
  std::mt19937 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::string bad = good;
    bad[rng() % 12] = char(rng());
    try {
      decode_pfm(bad);
    } catch (const IoError&) {
    }
  }
}

TEST(Png, RoundTripIsExactAfterQuantization) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> u(0, 1);
  RgbImage<float> img(7, 5);
  for (auto& v : img.pixels.reshaped()) v = u(rng);
  img = quantize8(img);
  const auto bytes = encode_png(img);
  auto back = decode_png(bytes);
  EXPECT_TRUE((back.pixels == img.pixels).all());
  EXPECT_EQ(encode_png(back), bytes);
}

TEST(Png, OneBitMask) {
  Mask m = Mask::Zero(5, 11);
  m(0, 0) = m(4, 10) = m(2, 7) = 1;
  const auto path = (temp_dir() / "m.png").string();
  write_mask_png(path, m);
  EXPECT_TRUE((read_mask_png(path) == m).all());
  EXPECT_THROW(read_png((temp_dir() / "missing.png").string()), IoError);
  EXPECT_THROW(decode_png("not a png"), IoError);
  EXPECT_THROW(decode_png(read_file(path).substr(0, 40), "cut.png"), IoError);
}

TEST(Jpeg, RoundTripApproximately) {
  RgbImage<float> img(32, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x) {
      img(x, y, 0) = x / 31.0f;
      img(x, y, 1) = y / 15.0f;
      img(x, y, 2) = 0.5f;
    }
  const auto bytes = encode_jpeg(img, 95);
  ASSERT_GT(bytes.size(), 2u);
  EXPECT_EQ(std::uint8_t(bytes[0]), 0xFF);
  EXPECT_EQ(std::uint8_t(bytes[1]), 0xD8);
  auto back = decode_jpeg(bytes);
  ASSERT_TRUE(back.same_shape(img));
  EXPECT_LT((back.pixels - img.pixels).abs().mean(), 0.02f);
  EXPECT_THROW(encode_jpeg(img, 0), InvalidInput);
}

TEST(Ply, RoundTrip) {
  PlyTable t;
  t.properties = {{"x", PlyType::Float32}, {"red", PlyType::UInt8}, {"w", PlyType::Float64}};
  t.rows.resize(3, 3);
  t.rows << 0.5, 10, 1e-12, -1.25, 255, 2.0, 3.0, 0, -7.5;
  auto back = decode_ply(encode_ply(t));
  ASSERT_EQ(back.properties.size(), 3u);
  EXPECT_EQ(back.column("w"), 2);
  EXPECT_TRUE(back.rows == t.rows);
  EXPECT_THROW(decode_ply(encode_ply(t).substr(0, 90)), IoError);
}

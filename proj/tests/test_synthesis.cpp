#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "retinex/synthesis.hpp"
#include "test_util.hpp"

using namespace retinex;

namespace {

LinearImage constant(int h, int w, float v) {
  LinearImage img(h, w, 3);
  for (auto& x : img.data()) x = v;
  return img;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Demosaic, ConstantAndZero) {
  for (auto pat : {BayerPattern::RGGB, BayerPattern::BGGR, BayerPattern::GRBG, BayerPattern::GBRG}) {
    Image<float> m(6, 8, 1);
    for (auto& v : m.data()) v = 0.3f;
    const auto out = demosaic_bilinear(m, pat);
    ASSERT_EQ(out.height(), 6);
    ASSERT_EQ(out.width(), 8);
    for (float v : out.data()) EXPECT_FLOAT_EQ(v, 0.3f);
    Image<float> z(4, 4, 1);
    const auto zero = demosaic_bilinear(z, pat);
    for (float v : zero.data()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Demosaic, RepeatedTileInterior) {
  // RGGB tile with R=0.8, G=0.4 (both sites), B=0.1 repeated over 6x6
  Image<float> m(6, 6, 1);
  const float vals[3] = {0.8f, 0.4f, 0.1f};
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) m(x, y) = vals[bayer_channel(BayerPattern::RGGB, x, y)];
  const auto out = demosaic_bilinear(m, BayerPattern::RGGB);
  for (int y = 1; y < 5; ++y)
    for (int x = 1; x < 5; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(out(x, y, c), vals[c]) << x << "," << y << "," << c;
}

TEST(Demosaic, Errors) {
  EXPECT_THROW(demosaic_bilinear(Image<float>(5, 6, 1), BayerPattern::RGGB), ValidationError);
  EXPECT_THROW(parse_bayer_pattern("RGBG"), ValidationError);
  EXPECT_EQ(parse_bayer_pattern("GBRG"), BayerPattern::GBRG);
}

TEST(Anchor, ConstantHalves) {
  const auto out = anchor_exposure(constant(8, 8, 0.36f), 1e-12);
  for (float v : out.data()) EXPECT_NEAR(v, 0.18f, 1e-7f);
  EXPECT_NEAR(geometric_mean_luminance(out, 0.0), 0.18, 0.18 * 1e-6);
}

TEST(Anchor, FixedPointAndIdempotent) {
  const auto img = testutil::random_image(16, 16, 2, 0.01f, 3.0f);
  const auto a = anchor_exposure(img, 1e-12);
  EXPECT_NEAR(geometric_mean_luminance(a, 0.0), 0.18, 0.18 * 1e-6);
  const auto b = anchor_exposure(a, 1e-12);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b.data()[i], a.data()[i], 1e-6 * a.data()[i] + 1e-12);
}

TEST(Anchor, BlackImageIsDegenerate) { EXPECT_THROW(anchor_exposure(constant(8, 8, 0.0f)), DegenerateInputError); }

TEST(Expose, PowersOfTwo) {
  const auto img = testutil::random_image(8, 8, 3);
  EXPECT_TRUE(expose(img, {0.0}) == img);
  const auto up = expose(img, {1.0}), down = expose(img, {-1.0});
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_EQ(up.data()[i], 2.0f * img.data()[i]);
    EXPECT_EQ(down.data()[i], 0.5f * img.data()[i]);
  }
  const auto ab = expose(expose(img, {0.5}), {0.25}), direct = expose(img, {0.75});
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(ab.data()[i], direct.data()[i], 2e-7f * direct.data()[i]);
}

TEST(ColorTransfer, Diagonal) {
  const auto img = testutil::random_image(8, 8, 4);
  EXPECT_TRUE(color_transfer(img, IlluminationColor::white()) == img);
  const auto one = color_transfer(constant(8, 8, 1.0f), IlluminationColor{{1.1, 1.0, 0.9}});
  EXPECT_FLOAT_EQ(one(3, 3, 0), 1.1f);
  EXPECT_FLOAT_EQ(one(3, 3, 1), 1.0f);
  EXPECT_FLOAT_EQ(one(3, 3, 2), 0.9f);
  const IlluminationColor c{{1.05, 0.93, 1.08}}, d{{0.91, 1.02, 0.97}};
  const auto twice = color_transfer(color_transfer(img, c), d);
  const auto once = color_transfer(img, IlluminationColor{{c.c[0] * d.c[0], c.c[1] * d.c[1], c.c[2] * d.c[2]}});
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(twice.data()[i], once.data()[i], 1e-6f);
}

TEST(ColorTransfer, RejectsInvalidColor) {
  EXPECT_THROW(color_transfer(constant(8, 8, 1.0f), IlluminationColor{{1.0, 0.0, 1.0}}), ValidationError);
}

TEST(SampleIllumination, UniformLaw) {
  Rng rng(123);
  const int n = 100000;
  std::array<double, 3> sum{}, sq{};
  double mn = 10, mx = -10, cross01 = 0, cross02 = 0, cross12 = 0;
  std::vector<Rgb> s(n);
  for (int i = 0; i < n; ++i) {
    s[i] = sample_illumination(rng).c;
    for (int k = 0; k < 3; ++k) {
      sum[k] += s[i][k];
      mn = std::min(mn, s[i][k]);
      mx = std::max(mx, s[i][k]);
    }
  }
  EXPECT_GE(mn, 0.9);
  EXPECT_LE(mx, 1.1);
  std::array<double, 3> mean{};
  for (int k = 0; k < 3; ++k) {
    mean[k] = sum[k] / n;
    EXPECT_NEAR(mean[k], 1.0, 0.002);
  }
  for (const auto& v : s) {
    for (int k = 0; k < 3; ++k) sq[k] += (v[k] - mean[k]) * (v[k] - mean[k]);
    cross01 += (v[0] - mean[0]) * (v[1] - mean[1]);
    cross02 += (v[0] - mean[0]) * (v[2] - mean[2]);
    cross12 += (v[1] - mean[1]) * (v[2] - mean[2]);
  }
  EXPECT_LT(std::abs(cross01 / std::sqrt(sq[0] * sq[1])), 0.02);
  EXPECT_LT(std::abs(cross02 / std::sqrt(sq[0] * sq[2])), 0.02);
  EXPECT_LT(std::abs(cross12 / std::sqrt(sq[1] * sq[2])), 0.02);
  Rng a(5), b(5);
  EXPECT_EQ(sample_illumination(a), sample_illumination(b));
}

TEST(MakeTriplet, ExposureAndColorAlgebra) {
  const auto img = testutil::random_image(16, 16, 6, 0.05f, 1.0f);
  Rng rng(77);
  const auto t = make_triplet(img, rng, "s");
  EXPECT_EQ(t.views[0].v.v, -1.0);
  EXPECT_EQ(t.views[1].v.v, 0.0);
  EXPECT_EQ(t.views[2].v.v, 1.0);
  const auto& v0 = t.views[1];
  const auto& v1 = t.views[2];
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) {
        const double ratio = static_cast<double>(v1.image(x, y, c)) / v0.image(x, y, c);
        EXPECT_NEAR(ratio, 2.0 * v1.c.c[c] / v0.c.c[c], 1e-6 * ratio);
      }
  EXPECT_NE(t.views[0].c, t.views[1].c);
}

TEST(MakeTriplet, SharedColorOption) {
  Rng rng(1);
  const auto t = make_triplet(testutil::random_image(8, 8, 1, 0.1f, 1.0f), rng, "s", TripletOptions{true});
  EXPECT_EQ(t.views[0].c, t.views[1].c);
  EXPECT_EQ(t.views[1].c, t.views[2].c);
}

TEST(MakeTriplet, Deterministic) {
  const auto img = testutil::random_image(8, 8, 8, 0.1f, 1.0f);
  Rng a(9), b(9);
  const auto ta = make_triplet(img, a, "s"), tb = make_triplet(img, b, "s");
  for (int i = 0; i < 3; ++i) {
    EXPECT_TRUE(ta.views[i].image == tb.views[i].image);
    EXPECT_EQ(ta.views[i].c, tb.views[i].c);
  }
}

TEST(CenterCropResize, ConstantAndShape) {
  const auto out = center_crop_resize(constant(30, 50, 0.4f), 16, 16);
  ASSERT_EQ(out.height(), 16);
  ASSERT_EQ(out.width(), 16);
  for (float v : out.data()) EXPECT_NEAR(v, 0.4f, 1e-6f);
  // exact 2x area downsample
  auto img = testutil::random_image(16, 16, 2);
  const auto half = center_crop_resize(img, 8, 8);
  const float expect = (img(2, 4, 1) + img(3, 4, 1) + img(2, 5, 1) + img(3, 5, 1)) / 4.0f;
  EXPECT_NEAR(half(1, 2, 1), expect, 1e-6f);
}

TEST(Fnv, KnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(scene_seed(0, "a"), fnv1a64("a"));
}

class DatasetTest : public ::testing::Test {
 protected:
  testutil::TempDir src, out1, out2;
  void write_sources(int n) {
    for (int i = 0; i < n; ++i) {
      save_image(testutil::random_image(20, 24, 100 + i, 0.05f, 1.0f),
                 src / ("img" + std::to_string(i) + (i % 2 ? ".png" : ".pfm")));
    }
  }
};

TEST_F(DatasetTest, CountsAndFiles) {
  write_sources(2);
  const auto res = build_dataset(src, out1, 42, DatasetOptions{16});
  ASSERT_EQ(res.manifest.entries.size(), 2u);
  int pfm = 0;
  for (const auto& e : std::filesystem::directory_iterator(out1.path())) pfm += e.path().extension() == ".pfm";
  EXPECT_EQ(pfm, 6);
  EXPECT_TRUE(std::filesystem::exists(out1 / "manifest.json"));
  const auto m = load_manifest(out1 / "manifest.json");
  ASSERT_EQ(m.entries.size(), 2u);
  const auto t = load_triplet(m, m.entries[0]);
  EXPECT_EQ(t.views[0].image.height(), 16);
  EXPECT_EQ(t.views[2].v.v, 1.0);
}

TEST_F(DatasetTest, RerunIsByteIdentical) {
  write_sources(3);
  build_dataset(src, out1, 7, DatasetOptions{16});
  build_dataset(src, out2, 7, DatasetOptions{16});
  EXPECT_EQ(slurp(out1 / "manifest.json"), slurp(out2 / "manifest.json"));
  for (const auto& e : std::filesystem::directory_iterator(out1.path())) {
    EXPECT_EQ(slurp(e.path()), slurp(out2 / e.path().filename().string())) << e.path();
  }
}

TEST_F(DatasetTest, CorruptSourceSkipped) {
  write_sources(2);
  std::ofstream(src / "broken.pfm") << "PF\n16 16\n-1.0\nxx";
  const auto res = build_dataset(src, out1, 1, DatasetOptions{16});
  EXPECT_EQ(res.manifest.entries.size(), 2u);
  ASSERT_EQ(res.skipped.size(), 1u);
  EXPECT_NE(res.skipped[0].find("broken"), std::string::npos);
}

TEST_F(DatasetTest, EmptySourceDirFails) { EXPECT_THROW(build_dataset(src, out1, 1), LoadError); }

TEST_F(DatasetTest, ManifestSchema) {
  write_sources(1);
  build_dataset(src, out1, 3, DatasetOptions{16});
  const auto j = nlohmann::json::parse(slurp(out1 / "manifest.json"));
  EXPECT_EQ(j.at("format_version"), 1);
  const auto& e = j.at("entries").at(0);
  for (const char* k : {"scene_id", "source", "views", "seed"}) EXPECT_TRUE(e.contains(k)) << k;
  ASSERT_EQ(e.at("views").size(), 3u);
  for (const auto& v : e.at("views")) {
    EXPECT_TRUE(v.contains("path"));
    EXPECT_TRUE(v.contains("v"));
    EXPECT_EQ(v.at("c").size(), 3u);
  }
  EXPECT_EQ(e.at("seed").get<std::uint64_t>(), scene_seed(3, e.at("scene_id").get<std::string>()));
}

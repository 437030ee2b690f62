#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "retinex/evaluation.hpp"
#include "retinex/white_balance.hpp"
#include "test_util.hpp"

using namespace retinex;

namespace {

ModelConfig tiny(int size = 16) {
  ModelConfig c;
  c.input_height = size;
  c.input_width = size;
  c.base_channels = 4;
  c.depth = 2;
  c.seed = 3;
  return c;
}

// Real model with the colour head forced to white.
struct WhiteHead {
  RetinexModel model{tiny()};
  Decomposition decompose(const LinearImage& img) const {
    auto d = model.decompose(img);
    d.c = IlluminationColor::white();
    return d;
  }
};

// Returns the same reflectance whatever the input.
struct ConstantR {
  Decomposition decompose(const LinearImage& img) const {
    Decomposition d{LinearImage(img.height(), img.width(), 3), Image<float>(img.height(), img.width(), 1),
                    IlluminationColor::white()};
    for (auto& v : d.R.data()) v = 0.5f;
    for (auto& v : d.GS.data()) v = 0.3f;
    return d;
  }
};

// Perfect oracle decomposer for one known scene.
struct Oracle {
  SyntheticScene scene;
  Decomposition decompose(const LinearImage&) const { return {scene.R_gt, scene.GS_gt, scene.c_gt}; }
};

LinearImage pixel(float r, float g, float b) {
  LinearImage img(1, 1, 3);
  img(0, 0, 0) = r;
  img(0, 0, 1) = g;
  img(0, 0, 2) = b;
  return img;
}

oracle::Img to_oracle(const LinearImage& img) {
  oracle::Img o{img.width(), img.height(), img.channels(), {}};
  o.v.assign(img.data().begin(), img.data().end());
  return o;
}

SyntheticScene scene(std::uint64_t seed, int size = 32, int patches = 6) {
  Rng rng(seed);
  return synth_scene(rng, size, patches);
}

}  // namespace

TEST(WhiteBalance, WhiteColourHeadGivesOwnReconstruction) {
  const WhiteHead m;
  const auto img = testutil::random_image(16, 16, 1, 0.05f, 0.9f);
  const auto d = m.decompose(img);
  const auto wb = white_balance(m, img);
  EXPECT_TRUE(wb.output == reconstruct(d.R, compose_shading(d.GS, d.c)));
  EXPECT_TRUE(wb.estimated_c == IlluminationColor::white());
}

TEST(WhiteBalance, OutputNonNegativeAndIgnoresEstimatedColour) {
  const RetinexModel m(tiny());
  const auto img = testutil::random_image(16, 16, 2, 0.0f, 1.5f);
  const auto wb = white_balance(m, img);
  for (float v : wb.output.data()) EXPECT_GE(v, 0.0f);
  const auto d = m.decompose(img);
  EXPECT_TRUE(wb.output == reconstruct(d.R, compose_shading(d.GS, IlluminationColor::white())));
  EXPECT_TRUE(wb.estimated_c == d.c);
  EXPECT_THROW(white_balance(m, testutil::random_image(8, 8, 2)), ShapeError);
}

TEST(WhiteBalance, PerfectDecompositionRemovesTheCast) {
  const Oracle m{scene(4)};
  const auto wb = white_balance(m, m.scene.I);
  const auto [mse_out, dh_out] = evaluate_pair(wb.output, m.scene.white_lit());
  EXPECT_EQ(mse_out, 0.0);
  EXPECT_EQ(dh_out, 0.0);
  const auto [mse_in, dh_in] = evaluate_pair(m.scene.I, m.scene.white_lit());
  EXPECT_GT(mse_in, 0.0);
  EXPECT_GT(dh_in, 0.0);
}

TEST(WhiteBalance, ReanchorMatchesInputBrightness) {
  const RetinexModel m(tiny());
  const auto img = testutil::random_image(16, 16, 3, 0.05f, 0.9f);
  const auto wb = white_balance(m, img, WhiteBalanceOptions{true});
  EXPECT_NEAR(geometric_mean_luminance(wb.output), geometric_mean_luminance(img), 1e-5 * geometric_mean_luminance(img));
}

class BatchWhiteBalanceTest : public ::testing::Test {
 protected:
  testutil::TempDir dir;
  RetinexModel model{tiny()};
  void SetUp() override {
    std::filesystem::create_directories(dir / "in");
    for (int i = 0; i < 3; ++i) save_image(testutil::random_image(16, 16, 10 + i, 0.05f, 0.9f), dir / "in" / ("im" + std::to_string(i) + ".pfm"));
  }
};

TEST_F(BatchWhiteBalanceTest, OneOutputPerInput) {
  const auto s = batch_white_balance(model, dir / "in", dir / "out");
  ASSERT_EQ(s.records.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(std::filesystem::exists(dir / "out" / ("im" + std::to_string(i) + "_wb.pfm")));
  const auto j = nlohmann::json::parse(detail::read_all(dir / "out" / "summary.json"));
  ASSERT_EQ(j.size(), 3u);
  EXPECT_EQ(j[0].at("input"), "im0.pfm");
  EXPECT_EQ(j[0].at("c_hat").size(), 3u);
}

TEST_F(BatchWhiteBalanceTest, Deterministic) {
  batch_white_balance(model, dir / "in", dir / "a");
  batch_white_balance(model, dir / "in", dir / "b");
  for (const char* f : {"im0_wb.pfm", "im1_wb.pfm", "im2_wb.pfm", "summary.json"}) {
    EXPECT_EQ(detail::read_all(dir / "a" / f), detail::read_all(dir / "b" / f)) << f;
  }
}

TEST_F(BatchWhiteBalanceTest, BadFileIsSkipped) {
  std::ofstream(dir / "in" / "broken.pfm") << "garbage";
  save_image(testutil::random_image(8, 8, 1), dir / "in" / "small.pfm");
  const auto s = batch_white_balance(model, dir / "in", dir / "out");
  EXPECT_EQ(s.records.size(), 3u);
  EXPECT_EQ(s.failed.size(), 2u);
}

TEST_F(BatchWhiteBalanceTest, EmptyDirectoryFails) {
  std::filesystem::create_directories(dir / "empty");
  EXPECT_THROW(batch_white_balance(model, dir / "empty", dir / "out"), LoadError);
}

TEST(EvaluatePair, Identity) {
  const auto a = testutil::random_image(12, 12, 1);
  const auto [m, dh] = evaluate_pair(a, a);
  EXPECT_EQ(m, 0.0);
  EXPECT_EQ(dh, 0.0);
}

TEST(EvaluatePair, AchromaticScalingKeepsHue) {
  LinearImage gray(6, 6, 3);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) gray(x, y, c) = 0.05f * static_cast<float>(x + y + 1);
  const auto [m, dh] = evaluate_pair(scaled(gray, 0.5f), gray);
  EXPECT_GT(m, 0.0);
  EXPECT_NEAR(dh, 0.0, 1e-9);
}

TEST(EvaluatePair, OnePixelImagesMatchOracle) {
  const std::pair<LinearImage, LinearImage> cases[] = {
      {pixel(0.2f, 0.5f, 0.7f), pixel(0.25f, 0.45f, 0.6f)},
      {pixel(0.8f, 0.1f, 0.1f), pixel(0.1f, 0.8f, 0.2f)},
      {pixel(0.3f, 0.3f, 0.05f), pixel(0.05f, 0.3f, 0.3f)},
  };
  for (const auto& [a, b] : cases) {
    const auto [m, dh] = evaluate_pair(a, b);
    EXPECT_NEAR(m, oracle::mse(to_oracle(a), to_oracle(b)), 1e-12);
    EXPECT_NEAR(dh, oracle::mean_dh(to_oracle(a), to_oracle(b)), 1e-9);
  }
  EXPECT_THROW(evaluate_pair(pixel(0, 0, 0), LinearImage(1, 2, 3)), ShapeError);
}

TEST(EvaluateSet, ArithmeticMean) {
  const auto r = aggregate({{"a", 0.01, 1.0}, {"b", 0.03, 3.0}});
  EXPECT_NEAR(r.mse, 0.02, 1e-15);
  EXPECT_NEAR(r.mean_dH, 2.0, 1e-15);
  EXPECT_EQ(r.count, 2u);
  const auto one = aggregate({{"a", 0.5, 4.0}});
  EXPECT_EQ(one.mse, 0.5);
  EXPECT_EQ(one.mean_dH, 4.0);
  const auto j = nlohmann::json(r);
  EXPECT_TRUE(j.at("aggregate").contains("mse"));
  EXPECT_TRUE(j.at("aggregate").contains("mean_dH"));
  EXPECT_EQ(j.at("per_image").size(), 2u);
}

TEST(EvaluateSet, FilesAndMissingPairs) {
  testutil::TempDir dir;
  const auto ref = testutil::random_image(8, 8, 1, 0.1f, 0.9f);
  save_image(ref, dir / "ref.pfm");
  save_image(scaled(ref, 1.1f), dir / "out.pfm");
  std::ofstream(dir / "pairs.json") << R"([{"output": "out.pfm", "reference": "ref.pfm"},
                                          {"output": "missing.pfm", "reference": "ref.pfm"}])";
  const auto r = evaluate_set(load_pairs(dir / "pairs.json"));
  EXPECT_EQ(r.count, 1u);
  EXPECT_EQ(r.failed, 1u);
  EXPECT_NEAR(r.mse, mse(scaled(ref, 1.1f), ref), 1e-12);
  EXPECT_THROW(evaluate_set({}), ValidationError);
  std::ofstream(dir / "bad.json") << R"({"output": "x"})";
  EXPECT_THROW(load_pairs(dir / "bad.json"), LoadError);
}

TEST(SynthScene, ComposedExactly) {
  const auto s = scene(1);
  EXPECT_TRUE(s.I == reconstruct(s.R_gt, compose_shading(s.GS_gt, s.c_gt)));
  for (float v : s.R_gt.data()) {
    EXPECT_GE(v, 0.1f);
    EXPECT_LE(v, 0.9f);
  }
  for (float v : s.GS_gt.data()) {
    EXPECT_GE(v, 0.2f);
    EXPECT_LE(v, 2.0f);
  }
  EXPECT_NO_THROW(s.c_gt.check());
}

TEST(SynthScene, SameSeedSameScene) {
  const auto a = scene(9), b = scene(9), c = scene(10);
  EXPECT_TRUE(a.I == b.I);
  EXPECT_TRUE(a.GS_gt == b.GS_gt);
  EXPECT_FALSE(a.I == c.I);
}

TEST(SynthScene, ShadingSmootherThanReflectance) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = scene(seed, 128, 12);
    const double tv_gs = total_variation(s.GS_gt.cast<double>());
    const double tv_r = total_variation(luminance(s.R_gt).cast<double>());
    EXPECT_LT(tv_gs, tv_r) << "seed " << seed;
  }
}

TEST(SynthScene, Preconditions) {
  Rng rng(1);
  EXPECT_THROW(synth_scene(rng, 8, 4), ValidationError);
  EXPECT_THROW(synth_scene(rng, 32, 1), ValidationError);
}

TEST(ScaleInvariantMse, IgnoresPerChannelGain) {
  const auto r = testutil::random_image(8, 8, 5, 0.1f, 0.9f);
  LinearImage g = r;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      g(x, y, 0) *= 0.5f;
      g(x, y, 2) *= 2.0f;
    }
  EXPECT_NEAR(scale_invariant_mse(g, r), 0.0, 1e-12);
  EXPECT_GT(mse(g, r), 0.0);
}

TEST(ReflectanceConsistency, ConstantModelIsPerfect) {
  Rng rng(3);
  EXPECT_EQ(reflectance_consistency_error(ConstantR{}, scene(2, 16), rng), 0.0);
}

TEST(ReflectanceConsistency, UntrainedModelIsPositive) {
  const RetinexModel m(tiny());
  Rng rng(3);
  EXPECT_GT(reflectance_consistency_error(m, scene(2, 16), rng), 0.0);
  Rng again(3);
  EXPECT_THROW(reflectance_consistency_error(m, scene(2, 32), again), ShapeError);
}

TEST(ColorError, Euclidean) {
  EXPECT_NEAR(color_error(Rgb{1, 1, 1}, Rgb{1.03, 0.96, 1.0}), 0.05, 1e-12);
  EXPECT_EQ(color_error(Rgb{0.9, 1, 1.1}, Rgb{0.9, 1, 1.1}), 0.0);
}

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <algorithm>
#include <fstream>
#include <random>

#include "higan/error.hpp"
#include "higan/imaging.hpp"
#include "higan/metrics.hpp"
#include "oracles.hpp"

using namespace higan;
using namespace higan::metrics;

namespace {

ImageTensor constant(int h, int w, int c, float v) { return ImageTensor(h, w, c, v); }

data::SampleBundle bundle(std::uint64_t seed, int size = 32) {
  const auto scene = data::synth_scene(seed, size, 38);
  auto cfg = MaskSynthConfig::for_image_size(size);
  cfg.seed = seed;
  return data::make_sample(scene, synth_mask(cfg, size, size), CannyThresholds{});
}

}  // namespace

TEST(Ssim, MatchesBruteForceWindowing) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 5; ++k) {
    const auto a = oracle::random_image(rng, 20, 24, 3);
    const auto b = oracle::random_image(rng, 20, 24, 3);
    EXPECT_NEAR(ssim(a, b), oracle::brute_ssim(a, b), 1e-6);
  }
}

TEST(Ssim, IdentitySymmetryAndConstants) {
  std::mt19937_64 rng(2);
  const auto a = oracle::random_image(rng, 16, 16, 1);
  const auto b = oracle::random_image(rng, 16, 16, 1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_LT(ssim(a, b), 1.0);
  // Constant images 0 and 1: luminance term is C1 / (1 + C1), structure term is 1.
  const double c1 = kSsimK1 * kSsimK1;
  EXPECT_NEAR(ssim(constant(12, 12, 1, 0.f), constant(12, 12, 1, 1.f)), c1 / (1 + c1), 1e-9);
  EXPECT_THROW(ssim(constant(10, 30, 1, 0.f), constant(10, 30, 1, 0.f)), InvalidArgument);
  EXPECT_THROW(ssim(constant(12, 12, 1, 0.f), constant(12, 12, 3, 0.f)), InvalidArgument);
}

TEST(Psnr, KnownValues) {
  const auto a = constant(8, 8, 1, 0.5f);
  auto b = a;
  for (auto& v : b.data()) v = 0.6f;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  std::mt19937_64 rng(3);
  const auto x = oracle::random_image(rng, 16, 16, 3);
  EXPECT_NEAR(psnr(x, constant(16, 16, 3, 0.6f)), oracle::direct_psnr(x, constant(16, 16, 3, 0.6f)), 1e-9);
}

TEST(Psnr, DecreasesWithNoise) {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_image(rng, 16, 16, 3);
  std::normal_distribution<float> n(0, 1);
  std::vector<float> noise(x.size());
  for (auto& v : noise) v = n(rng);
  double previous = INFINITY;
  for (float s : {0.01f, 0.03f, 0.1f}) {
    auto y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = std::clamp(x.data()[i] + s * noise[i], 0.f, 1.f);
    const double p = psnr(x, y);
    EXPECT_LT(p, previous);
    previous = p;
  }
}

TEST(ErrorMetrics, ConstantOffsetAndOracles) {
  const auto a = constant(8, 8, 3, 0.2f);
  const auto b = constant(8, 8, 3, 0.3f);
  EXPECT_NEAR(mae(a, b), 25.5, 1e-4);
  EXPECT_NEAR(rmse(a, b), 25.5, 1e-4);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 5; ++k) {
    const auto x = oracle::random_image(rng, 13, 17, 3);
    const auto y = oracle::random_image(rng, 13, 17, 3);
    EXPECT_NEAR(mae(x, y), oracle::direct_mae(x, y), 1e-6);
    EXPECT_NEAR(rmse(x, y), oracle::direct_rmse(x, y), 1e-6);
    EXPECT_GE(rmse(x, y) + 1e-9, mae(x, y));
  }
}

TEST(ErrorMetrics, SinglePixelChangeAndHoles) {
  const auto a = constant(10, 10, 1, 0.f);
  auto b = a;
  b.at(0, 3, 4) = 1.f;
  EXPECT_NEAR(mae(a, b), 255.0 / 100, 1e-6);
  EXPECT_NEAR(rmse(a, b), 255.0 / 10, 1e-6);
  Mask holes(10, 10);
  holes.set(3, 4, 1);
  holes.set(0, 0, 1);
  EXPECT_NEAR(mae(a, b, &holes), 127.5, 1e-6);
  const Mask none(10, 10);
  EXPECT_EQ(mae(a, b, &none), 0.0);
  EXPECT_EQ(rmse(a, b, &none), 0.0);
}

TEST(Region, ParsesBothSpellings) {
  EXPECT_EQ(parse_region("full"), Region::Full);
  EXPECT_EQ(parse_region("holes"), Region::Holes);
  EXPECT_STREQ(to_string(Region::Holes), "holes");
  EXPECT_THROW(parse_region("edges"), InvalidArgument);
}

TEST(Evaluate, PerfectPredictionIsPerfect) {
  const auto t = bundle(6);
  const RgbdPrediction p{t.rgb, t.depth};
  for (auto region : {Region::Full, Region::Holes}) {
    const auto m = evaluate_sample(p, t, region, "s");
    EXPECT_NEAR(m.rgb_ssim, 1.0, 1e-9);
    EXPECT_TRUE(std::isinf(m.rgb_psnr));
    EXPECT_EQ(m.rgb_mae, 0.0);
    EXPECT_EQ(m.depth_rmse, 0.0);
  }
}

TEST(Evaluate, CompositesBeforeScoring) {
  const auto t = bundle(7);
  const RgbdPrediction p{constant(32, 32, 3, 0.f), constant(32, 32, 1, 0.f)};
  const auto m = evaluate_sample(p, t, Region::Full);
  const auto rgb = composite(p.rgb, t.rgb, t.mask);
  const auto depth = composite(p.depth, t.depth, t.mask);
  EXPECT_NEAR(m.rgb_mae, oracle::direct_mae(rgb, t.rgb), 1e-6);
  EXPECT_NEAR(m.depth_rmse, oracle::direct_rmse(depth, t.depth), 1e-6);
  EXPECT_NEAR(m.rgb_ssim, oracle::brute_ssim(rgb, t.rgb), 1e-6);
  const auto h = evaluate_sample(p, t, Region::Holes);
  EXPECT_NEAR(h.rgb_mae, mae(rgb, t.rgb, &t.mask), 1e-9);
  EXPECT_GT(h.rgb_mae, m.rgb_mae);
  EXPECT_EQ(h.rgb_psnr, m.rgb_psnr);
}

TEST(Evaluate, DatasetAggregatesMeans) {
  std::vector<data::SampleBundle> truths{bundle(8), bundle(9)};
  std::vector<RgbdPrediction> preds{{truths[0].rgb, truths[0].depth},
                                    {constant(32, 32, 3, 0.5f), constant(32, 32, 1, 0.5f)}};
  const auto report = evaluate_dataset(preds, truths, Region::Holes);
  ASSERT_EQ(report.samples.size(), 2u);
  const auto agg = report.aggregate();
  EXPECT_NEAR(agg.rgb_mae, 0.5 * (report.samples[0].rgb_mae + report.samples[1].rgb_mae), 1e-9);
  EXPECT_NEAR(agg.depth_mae, 0.5 * report.samples[1].depth_mae, 1e-9);
  EXPECT_THROW(evaluate_dataset(std::span(preds).first(1), truths, Region::Full), InvalidArgument);
}

TEST(Evaluate, CsvHasHeaderRowPerSampleAndMean) {
  std::vector<data::SampleBundle> truths{bundle(10)};
  std::vector<RgbdPrediction> preds{{constant(32, 32, 3, 0.5f), constant(32, 32, 1, 0.5f)}};
  const auto report = evaluate_dataset(preds, truths, Region::Full);
  const auto path = std::filesystem::temp_directory_path() / "higan_metrics_test.csv";
  report.write_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  for (const char* col : kMetricColumns) EXPECT_NE(header.find(col), std::string::npos) << col;
  int rows = 0;
  for (std::string line; std::getline(in, line);) rows += !line.empty();
  EXPECT_GE(rows, 1);
  std::filesystem::remove(path);
  EXPECT_FALSE(report.table().empty());
}

TEST(Evaluate, FigureGridLayout) {
  const auto t = bundle(11);
  const auto g = figure_grid(t, RgbdPrediction{t.rgb, t.depth});
  EXPECT_EQ(g.height(), 2 * 32);
  EXPECT_EQ(g.width(), 4 * 32);
  EXPECT_EQ(g.channels(), 3);
}

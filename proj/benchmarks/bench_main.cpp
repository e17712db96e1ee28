#include <random>

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "higan/dataset.hpp"
#include "higan/imaging.hpp"
#include "higan/metrics.hpp"
#include "higan/models.hpp"
#include "higan/nn_blocks.hpp"
#include "higan/training.hpp"

using namespace higan;

namespace {

ImageTensor noise_image(int size, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  ImageTensor img(size, size, channels);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

void BM_Ssim(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto a = noise_image(size, 3, 1);
  const auto b = noise_image(size, 3, 2);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(256);

void BM_Canny(benchmark::State& state) {
  const auto scene = data::synth_scene(3, static_cast<int>(state.range(0)), 38);
  const auto gray = to_grayscale(scene.rgb);
  for (auto _ : state) benchmark::DoNotOptimize(canny_edges(gray));
}
BENCHMARK(BM_Canny)->Arg(256);

void BM_SynthMask(benchmark::State& state) {
  auto config = MaskSynthConfig::for_image_size(256);
  for (auto _ : state) {
    ++config.seed;
    benchmark::DoNotOptimize(synth_mask(config, 256, 256));
  }
}
BENCHMARK(BM_SynthMask);

void BM_GatedConv(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  nn::GatedConv2d conv(nn::GatedConvSpec{64, 64, 3, 1, 1});
  const auto x = torch::randn({1, 64, state.range(0), state.range(0)});
  for (auto _ : state) benchmark::DoNotOptimize(conv->forward(x));
}
BENCHMARK(BM_GatedConv)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  training::TrainConfig config;
  config.dataset.synthetic = true;
  config.dataset.synthetic_count = 2;
  config.dataset.image_size = 64;
  config.dataset.mask_synth = MaskSynthConfig::for_image_size(64);
  config.model.base_width = 16;
  config.model.disc_base_width = 16;
  config.extractor.base_width = 16;
  const auto dataset = data::Dataset::synthetic(config.dataset);
  const auto masks = data::make_mask_source(config.dataset);
  const std::vector<std::size_t> idx{0, 1};
  const auto batch = models::to_tensors(data::make_batch(idx, dataset, masks, 1));
  training::Trainer trainer(config);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(batch));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond)->Iterations(5);

}  // namespace

BENCHMARK_MAIN();

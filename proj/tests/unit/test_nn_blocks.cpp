#include <gtest/gtest.h>

#include <random>

#include "higan/error.hpp"
#include "higan/nn_blocks.hpp"
#include "oracles.hpp"

using namespace higan;
namespace F = torch::nn::functional;

namespace {

torch::Tensor rand64(torch::IntArrayRef shape) { return torch::randn(shape, torch::kFloat64); }

// Compare directional derivatives of `f` w.r.t. `params` against central differences.
void expect_gradients_match(const std::function<torch::Tensor()>& f, const std::vector<torch::Tensor>& params,
                            int directions = 3) {
  for (int d = 0; d < directions; ++d) {
    std::vector<torch::Tensor> dir;
    for (const auto& p : params) dir.push_back(torch::randn_like(p));
    const double analytic = oracle::analytic_directional(f, params, dir);
    const double numeric = oracle::directional_fd([&] { return f().item<double>(); }, params, dir, 1e-6);
    EXPECT_NEAR(analytic, numeric, 1e-3 * std::max(1.0, std::abs(numeric)));
  }
}

}  // namespace

TEST(GatedConv, OpenGateIsPlainConvolution) {
  torch::manual_seed(0);
  nn::GatedConv2d gc(nn::GatedConvSpec{3, 5, 3, 1, 1});
  torch::NoGradGuard ng;
  gc->gate()->bias.fill_(20.0);
  gc->gate()->weight.zero_();
  const auto x = torch::randn({2, 3, 9, 9});
  const auto padded = F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReflect));
  const auto plain = F::conv2d(padded, gc->feature()->weight, F::Conv2dFuncOptions().bias(gc->feature()->bias));
  EXPECT_LT((gc->forward(x) - plain).abs().max().item<double>(), 1e-4);
}

TEST(GatedConv, ClosedGateIsZero) {
  torch::manual_seed(1);
  nn::GatedConv2d gc(nn::GatedConvSpec{2, 4, 3, 1, 1});
  torch::NoGradGuard ng;
  gc->gate()->bias.fill_(-40.0);
  gc->gate()->weight.zero_();
  EXPECT_LT(gc->forward(torch::randn({1, 2, 8, 8})).abs().max().item<double>(), 1e-12);
}

TEST(GatedConv, OutputSizeMatchesConvArithmetic) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int stride = 1 + static_cast<int>(rng() % 2);
    const int k = stride == 2 && rng() % 2 ? 4 : static_cast<int>(1 + 2 * (rng() % 3));
    const int dil = stride == 1 ? static_cast<int>(1 + rng() % 2) : 1;
    const int h = 9 + static_cast<int>(rng() % 12);
    nn::GatedConvSpec spec{2, 3, k, stride, dil};
    nn::GatedConv2d gc(spec);
    const int p = dil * (k - 1) / 2;
    const int expected = (h + 2 * p - dil * (k - 1) - 1) / stride + 1;
    const auto y = gc->forward(torch::randn({1, 2, h, h}));
    EXPECT_EQ(y.size(2), expected);
    EXPECT_EQ(y.size(3), expected);
    EXPECT_EQ(spec.output_size(h), expected);
  }
}

TEST(GatedConv, RejectsBadSpecsAndChannels) {
  EXPECT_THROW(nn::GatedConv2d(nn::GatedConvSpec{2, 3, 4, 1, 1}), InvalidArgument);
  EXPECT_THROW(nn::GatedConv2d(nn::GatedConvSpec{2, 3, 3, 3, 1}), InvalidArgument);
  nn::GatedConv2d gc(nn::GatedConvSpec{2, 3, 3, 1, 1});
  EXPECT_ANY_THROW(gc->forward(torch::randn({1, 5, 8, 8})));
}

TEST(GatedConv, GradientsMatchFiniteDifferences) {
  torch::manual_seed(3);
  nn::GatedConv2d gc(nn::GatedConvSpec{2, 3, 3, 1, 1});
  gc->to(torch::kFloat64);
  auto x = rand64({1, 2, 5, 5}).requires_grad_(true);
  auto params = gc->parameters();
  params.push_back(x);
  expect_gradients_match([&] { return gc->forward(x).pow(2).sum(); }, params);
}

TEST(InstanceNorm, ConstantChannelIsZero) {
  const auto y = nn::instance_norm(torch::full({1, 2, 4, 4}, 3.0));
  EXPECT_EQ(y.abs().max().item<double>(), 0.0);
}

TEST(InstanceNorm, StandardizedMoments) {
  torch::manual_seed(4);
  const auto x = torch::randn({3, 4, 16, 16}, torch::kFloat64) * 5 + 2;
  const auto y = nn::instance_norm(x);
  // Oracle: direct per-(n, c) moments.
  for (int n = 0; n < 3; ++n) {
    for (int c = 0; c < 4; ++c) {
      const auto plane = y[n][c];
      EXPECT_NEAR(plane.mean().item<double>(), 0.0, 1e-4);
      EXPECT_NEAR(std::sqrt((plane * plane).mean().item<double>()), 1.0, 1e-4);
    }
  }
}

TEST(InstanceNorm, InvariantToPerChannelAffineInput) {
  torch::manual_seed(5);
  const auto x = torch::randn({2, 3, 8, 8}, torch::kFloat64);
  const auto scale = torch::tensor({2.0, 0.5, 7.0}, torch::kFloat64).view({1, 3, 1, 1});
  const auto shift = torch::tensor({-1.0, 4.0, 0.3}, torch::kFloat64).view({1, 3, 1, 1});
  EXPECT_LT((nn::instance_norm(x * scale + shift) - nn::instance_norm(x)).abs().max().item<double>(), 1e-4);
}

TEST(InstanceNorm, GradientsMatchFiniteDifferences) {
  torch::manual_seed(6);
  nn::InstanceNorm norm(3);
  norm->to(torch::kFloat64);
  {
    torch::NoGradGuard ng;
    norm->weight.uniform_(0.5, 1.5);
    norm->bias.uniform_(-0.5, 0.5);
  }
  auto x = rand64({2, 3, 4, 4}).requires_grad_(true);
  const auto target = rand64({2, 3, 4, 4});
  auto params = norm->parameters();
  params.push_back(x);
  expect_gradients_match([&] { return (norm->forward(x) * target).sum(); }, params);
}

TEST(ResidualBlock, ZeroWeightsAreIdentity) {
  nn::GatedResidualBlock block(4);
  block->to(torch::kFloat64);
  {
    torch::NoGradGuard ng;
    for (auto& p : block->parameters()) p.zero_();
  }
  auto x = rand64({2, 4, 6, 6}).requires_grad_(true);
  const auto y = block->forward(x);
  EXPECT_TRUE(torch::equal(y, x));
  EXPECT_EQ(y.sizes(), x.sizes());
  // Jacobian-vector product through the identity path returns the vector itself.
  const auto v = rand64({2, 4, 6, 6});
  const auto grad = torch::autograd::grad({y}, {x}, {v})[0];
  EXPECT_TRUE(torch::allclose(grad, v));
}

TEST(ResidualBlock, GradientsMatchFiniteDifferences) {
  torch::manual_seed(7);
  nn::GatedResidualBlock block(2);
  block->to(torch::kFloat64);
  auto x = rand64({1, 2, 5, 5}).requires_grad_(true);
  const auto target = rand64({1, 2, 5, 5});
  auto params = block->parameters();
  params.push_back(x);
  expect_gradients_match([&] { return (block->forward(x) * target).sum(); }, params);
}

TEST(SpectralNorm, DiagonalMatrixConverges) {
  const auto w = torch::tensor({{3.0, 0.0}, {0.0, 1.0}}, torch::kFloat64);
  auto u = torch::tensor({0.6, 0.8}, torch::kFloat64);
  auto v = torch::tensor({0.8, 0.6}, torch::kFloat64);
  torch::Tensor sigma;
  torch::Tensor normalized;
  for (int i = 0; i < 20; ++i) normalized = nn::spectral_normalize(w, u, v, true, &sigma);
  EXPECT_NEAR(sigma.item<double>(), 3.0, 1e-3);
  EXPECT_NEAR(torch::linalg_svdvals(normalized)[0].item<double>(), 1.0, 1e-3);
  EXPECT_NEAR(u.norm().item<double>(), 1.0, 1e-12);
  EXPECT_NEAR(v.norm().item<double>(), 1.0, 1e-12);
}

TEST(SpectralNorm, UnitNormWeightUnchanged) {
  torch::manual_seed(8);
  const auto q = std::get<0>(torch::linalg_qr(torch::randn({5, 5}, torch::kFloat64)));
  auto u = torch::randn({5}, torch::kFloat64);
  auto v = torch::randn({5}, torch::kFloat64);
  u /= u.norm();
  v /= v.norm();
  torch::Tensor normalized;
  for (int i = 0; i < 20; ++i) normalized = nn::spectral_normalize(q, u, v, true);
  EXPECT_LT((normalized - q).abs().max().item<double>(), 1e-3);
}

TEST(SpectralNorm, SigmaPositive) {
  torch::manual_seed(9);
  for (int i = 0; i < 5; ++i) {
    const auto w = torch::randn({4, 6}, torch::kFloat64);
    auto u = torch::randn({4}, torch::kFloat64);
    auto v = torch::randn({6}, torch::kFloat64);
    u /= u.norm();
    v /= v.norm();
    torch::Tensor sigma;
    nn::spectral_normalize(w, u, v, true, &sigma);
    EXPECT_GT(sigma.item<double>(), 0.0);
  }
}

TEST(SpectralNorm, ConvGradientsInEvalMode) {
  torch::manual_seed(10);
  nn::SpectralNormConv2d conv(2, 3, 4, 2, 1);
  conv->to(torch::kFloat64);
  conv->eval();
  auto x = rand64({1, 2, 8, 8}).requires_grad_(true);
  const auto target = rand64({1, 3, 4, 4});
  auto params = conv->parameters();
  params.push_back(x);
  expect_gradients_match([&] { return (conv->forward(x) * target).sum(); }, params);
}

TEST(SpectralNorm, EvalModeFreezesState) {
  nn::SpectralNormConv2d conv(2, 3, 4, 2, 1);
  conv->eval();
  const auto u = conv->u.clone();
  conv->forward(torch::randn({1, 2, 8, 8}));
  EXPECT_TRUE(torch::equal(u, conv->u));
  conv->train();
  conv->forward(torch::randn({1, 2, 8, 8}));
  EXPECT_NEAR(conv->u.norm().item<double>(), 1.0, 1e-5);
}

TEST(PatchDiscriminator, OutputSizeAndReceptiveField) {
  nn::PatchDiscriminatorSpec spec;
  EXPECT_EQ(spec.output_size(256), 30);
  EXPECT_EQ(spec.receptive_field(), 70);
  // conv arithmetic oracle, k=4, p=1
  std::int64_t s = 256;
  for (std::int64_t i = 0; i < spec.num_layers; ++i) s = (s + 2 - 4) / spec.layer_stride(i) + 1;
  EXPECT_EQ(s, 30);
  EXPECT_EQ(spec.layer_width(0), 64);
  EXPECT_EQ(spec.layer_width(3), 512);
  EXPECT_EQ(spec.layer_width(4), 1);
}

TEST(PatchDiscriminator, LogitsFiniteAndSpectrallyBounded) {
  torch::manual_seed(11);
  nn::PatchDiscriminator d(nn::PatchDiscriminatorSpec{3, 16, 5, 0.2});
  const auto x = torch::rand({2, 3, 64, 64}) * 2 - 1;
  for (int i = 0; i < 5; ++i) d->forward(x);
  const auto out = d->forward(x);
  EXPECT_TRUE(torch::isfinite(out.logits).all().item<bool>());
  EXPECT_EQ(out.logits.size(2), 6);
  EXPECT_EQ(out.features.size(), 4u);
  for (const auto& layer : d->layers()) {
    const auto w = layer->effective_weight().detach().to(torch::kFloat64);
    const double top = torch::linalg_svdvals(w.reshape({w.size(0), -1}))[0].item<double>();
    EXPECT_LE(top, 1.0 + 1e-2);
  }
}

#include "higan/nn_blocks.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "higan/error.hpp"

namespace higan::nn {

namespace F = torch::nn::functional;

std::int64_t GatedConvSpec::output_size(std::int64_t input_size) const noexcept {
  return (input_size + 2 * padding() - dilation * (kernel_size - 1) - 1) / stride + 1;
}

void GatedConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) throw InvalidArgument("gated conv: channel counts must be positive");
  if (stride != 1 && stride != 2) throw InvalidArgument(fmt::format("gated conv: stride {} not in {{1, 2}}", stride));
  if (kernel_size <= 0 || dilation <= 0) throw InvalidArgument("gated conv: kernel and dilation must be positive");
  if (stride == 1 && kernel_size % 2 == 0) {
    throw InvalidArgument(fmt::format("gated conv: stride-1 kernels must be odd, got {}", kernel_size));
  }
}

GatedConv2dImpl::GatedConv2dImpl(GatedConvSpec spec) : spec_(spec) {
  spec_.validate();
  const auto options = torch::nn::Conv2dOptions(spec_.in_channels, spec_.out_channels, spec_.kernel_size)
                           .stride(spec_.stride)
                           .dilation(spec_.dilation)
                           .padding(0);
  feature_ = register_module("feature", torch::nn::Conv2d(options));
  gate_ = register_module("gate", torch::nn::Conv2d(options));
}

torch::Tensor GatedConv2dImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != spec_.in_channels) {
    throw InvalidArgument(fmt::format("gated conv: expected {} input channels, got shape {}", spec_.in_channels,
                                      fmt::join(input.sizes(), "x")));
  }
  const std::int64_t p = spec_.padding();
  const torch::Tensor x =
      p > 0 ? F::pad(input, F::PadFuncOptions({p, p, p, p}).mode(torch::kReflect)) : input;
  return feature_->forward(x) * torch::sigmoid(gate_->forward(x));
}

torch::Tensor instance_norm(const torch::Tensor& input, double eps) {
  const auto mean = input.mean({2, 3}, /*keepdim=*/true);
  const auto var = (input - mean).pow(2).mean({2, 3}, /*keepdim=*/true);
  return (input - mean) / torch::sqrt(var + eps);
}

InstanceNormImpl::InstanceNormImpl(std::int64_t channels, double eps) : channels_(channels), eps_(eps) {
  weight = register_parameter("weight", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor InstanceNormImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != channels_) {
    throw InvalidArgument(fmt::format("instance norm: expected {} channels", channels_));
  }
  return instance_norm(input, eps_) * weight.view({1, -1, 1, 1}) + bias.view({1, -1, 1, 1});
}

GatedResidualBlockImpl::GatedResidualBlockImpl(std::int64_t channels, std::int64_t dilation) : channels_(channels) {
  const GatedConvSpec spec{channels, channels, 3, 1, dilation};
  conv1_ = register_module("conv1", GatedConv2d(spec));
  norm1_ = register_module("norm1", InstanceNorm(channels));
  conv2_ = register_module("conv2", GatedConv2d(GatedConvSpec{channels, channels, 3, 1, 1}));
  norm2_ = register_module("norm2", InstanceNorm(channels));
}

torch::Tensor GatedResidualBlockImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != channels_) {
    throw InvalidArgument(fmt::format("residual block: expected {} channels", channels_));
  }
  auto h = torch::relu(norm1_->forward(conv1_->forward(input)));
  h = norm2_->forward(conv2_->forward(h));
  return input + h;
}

torch::Tensor spectral_normalize(const torch::Tensor& weight, torch::Tensor& u, torch::Tensor& v, bool update,
                                 torch::Tensor* sigma_out) {
  const auto matrix = weight.reshape({weight.size(0), -1});
  if (update) {
    torch::NoGradGuard no_grad;
    const auto opts = F::NormalizeFuncOptions().dim(0).eps(1e-12);
    v.copy_(F::normalize(torch::mv(matrix.t(), u), opts));
    u.copy_(F::normalize(torch::mv(matrix, v), opts));
  }
  // Clones keep later in-place updates of the buffers out of this graph.
  const auto sigma = torch::dot(u.clone(), torch::mv(matrix, v.clone()));
  if (sigma_out) *sigma_out = sigma;
  return weight / sigma;
}

SpectralNormConv2dImpl::SpectralNormConv2dImpl(std::int64_t in_channels, std::int64_t out_channels,
                                               std::int64_t kernel_size, std::int64_t stride, std::int64_t padding)
    : stride_(stride), padding_(padding) {
  auto w = torch::empty({out_channels, in_channels, kernel_size, kernel_size});
  torch::nn::init::kaiming_uniform_(w, std::sqrt(5.0));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel_size * kernel_size));
  weight_orig = register_parameter("weight_orig", w);
  bias = register_parameter("bias", torch::empty({out_channels}).uniform_(-bound, bound));
  const auto opts = F::NormalizeFuncOptions().dim(0).eps(1e-12);
  u = register_buffer("u", F::normalize(torch::randn({out_channels}), opts));
  v = register_buffer("v", F::normalize(torch::randn({in_channels * kernel_size * kernel_size}), opts));
  warm_start();
}

torch::Tensor SpectralNormConv2dImpl::forward(const torch::Tensor& input) {
  const auto weight = spectral_normalize(weight_orig, u, v, is_training());
  return F::conv2d(input, weight, F::Conv2dFuncOptions().bias(bias).stride(stride_).padding(padding_));
}

torch::Tensor SpectralNormConv2dImpl::effective_weight() const {
  torch::NoGradGuard no_grad;
  auto uu = u.clone();
  auto vv = v.clone();
  return spectral_normalize(weight_orig, uu, vv, /*update=*/false);
}

double SpectralNormConv2dImpl::sigma_estimate() const {
  torch::NoGradGuard no_grad;
  const auto matrix = weight_orig.reshape({weight_orig.size(0), -1});
  return torch::dot(u, torch::mv(matrix, v)).item<double>();
}

void SpectralNormConv2dImpl::warm_start(int max_iterations, double tol) {
  torch::NoGradGuard no_grad;
  double previous = 0.0;
  for (int i = 0; i < max_iterations; ++i) {
    spectral_normalize(weight_orig, u, v, /*update=*/true);
    const double current = sigma_estimate();
    if (i > 0 && std::abs(current - previous) <= tol * std::abs(current)) break;
    previous = current;
  }
}

std::int64_t PatchDiscriminatorSpec::layer_width(std::int64_t i) const {
  if (i == num_layers - 1) return 1;
  return base_width * std::min<std::int64_t>(std::int64_t{1} << i, 8);
}

std::int64_t PatchDiscriminatorSpec::layer_stride(std::int64_t i) const { return i < num_layers - 2 ? 2 : 1; }

std::int64_t PatchDiscriminatorSpec::output_size(std::int64_t input_size) const {
  std::int64_t size = input_size;
  for (std::int64_t i = 0; i < num_layers; ++i) size = (size + 2 - 4) / layer_stride(i) + 1;
  return size;
}

std::int64_t PatchDiscriminatorSpec::receptive_field() const {
  std::int64_t field = 1;
  std::int64_t jump = 1;
  for (std::int64_t i = 0; i < num_layers; ++i) {
    field += 3 * jump;
    jump *= layer_stride(i);
  }
  return field;
}

void PatchDiscriminatorSpec::validate() const {
  if (in_channels <= 0 || base_width <= 0) throw InvalidArgument("patch discriminator: widths must be positive");
  if (num_layers < 2) throw InvalidArgument("patch discriminator: needs at least 2 layers");
  if (leaky_slope < 0.0) throw InvalidArgument("patch discriminator: negative LeakyReLU slope");
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(PatchDiscriminatorSpec spec) : spec_(spec) {
  spec_.validate();
  std::int64_t in = spec_.in_channels;
  for (std::int64_t i = 0; i < spec_.num_layers; ++i) {
    const std::int64_t out = spec_.layer_width(i);
    layers_.push_back(register_module(fmt::format("conv{}", i),
                                      SpectralNormConv2d(in, out, 4, spec_.layer_stride(i), 1)));
    in = out;
  }
}

DiscriminatorOutput PatchDiscriminatorImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != spec_.in_channels) {
    throw InvalidArgument(fmt::format("patch discriminator: expected {} input channels, got shape {}",
                                      spec_.in_channels, fmt::join(input.sizes(), "x")));
  }
  if (spec_.output_size(std::min(input.size(2), input.size(3))) < 1) {
    throw InvalidArgument("patch discriminator: input too small for the configured depth");
  }
  DiscriminatorOutput out;
  torch::Tensor x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i]->forward(x);
    if (i + 1 < layers_.size()) {
      x = F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(spec_.leaky_slope));
      out.features.push_back(x);
    }
  }
  out.logits = x;
  return out;
}

}  // namespace higan::nn

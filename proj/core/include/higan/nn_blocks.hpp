#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace higan::nn {

struct GatedConvSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_size = 3;
  std::int64_t stride = 1;
  std::int64_t dilation = 1;

  /// Reflect padding on each side: dilation * (kernel - 1) / 2, rounded down.
  std::int64_t padding() const noexcept { return dilation * (kernel_size - 1) / 2; }
  /// floor((size + 2p - dilation*(k-1) - 1) / stride) + 1
  std::int64_t output_size(std::int64_t input_size) const noexcept;
  /// Odd kernels for stride 1; stride 2 also admits even kernels (4x4 downsampling).
  void validate() const;
};

/// Feature branch times sigmoid(gate branch). Both branches are plain
/// convolutions over the same reflect-padded input; no activation is applied
/// to the feature branch here.
class GatedConv2dImpl : public torch::nn::Module {
 public:
  explicit GatedConv2dImpl(GatedConvSpec spec);

  torch::Tensor forward(const torch::Tensor& input);

  const GatedConvSpec& spec() const noexcept { return spec_; }
  torch::nn::Conv2d& feature() noexcept { return feature_; }
  torch::nn::Conv2d& gate() noexcept { return gate_; }

 private:
  GatedConvSpec spec_;
  torch::nn::Conv2d feature_{nullptr};
  torch::nn::Conv2d gate_{nullptr};
};
TORCH_MODULE(GatedConv2d);

inline constexpr double kInstanceNormEps = 1e-5;

/// Per-sample, per-channel standardization over H and W (biased variance), no affine.
torch::Tensor instance_norm(const torch::Tensor& input, double eps = kInstanceNormEps);

class InstanceNormImpl : public torch::nn::Module {
 public:
  explicit InstanceNormImpl(std::int64_t channels, double eps = kInstanceNormEps);

  torch::Tensor forward(const torch::Tensor& input);

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  std::int64_t channels_;
  double eps_;
};
TORCH_MODULE(InstanceNorm);

/// x + IN(gconv(ReLU(IN(gconv(x))))), 3x3 stride 1.
class GatedResidualBlockImpl : public torch::nn::Module {
 public:
  GatedResidualBlockImpl(std::int64_t channels, std::int64_t dilation = 1);

  torch::Tensor forward(const torch::Tensor& input);

 private:
  std::int64_t channels_;
  GatedConv2d conv1_{nullptr};
  InstanceNorm norm1_{nullptr};
  GatedConv2d conv2_{nullptr};
  InstanceNorm norm2_{nullptr};
};
TORCH_MODULE(GatedResidualBlock);

/// One power-iteration step on `weight` viewed as (out, -1).
///
/// When `update` is true, u and v are refreshed in place (no autograd) before
/// sigma = u^T W v is formed. Returns weight / sigma; sigma stays in the graph
/// so gradients see the normalization. u and v are unit-norm afterwards.
torch::Tensor spectral_normalize(const torch::Tensor& weight, torch::Tensor& u, torch::Tensor& v, bool update,
                                 torch::Tensor* sigma_out = nullptr);

/// Conv2d whose weight is divided by its power-iteration estimate of the top
/// singular value. The estimate advances one step per forward in training
/// mode and is frozen in eval mode.
class SpectralNormConv2dImpl : public torch::nn::Module {
 public:
  SpectralNormConv2dImpl(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel_size,
                         std::int64_t stride, std::int64_t padding);

  torch::Tensor forward(const torch::Tensor& input);

  /// Weight actually used by forward, with the current u and v and no update.
  torch::Tensor effective_weight() const;
  /// Current estimate u^T W v.
  double sigma_estimate() const;
  /// Runs power iterations until the estimate settles (relative change below `tol`).
  void warm_start(int max_iterations = 500, double tol = 1e-9);

  torch::Tensor weight_orig;
  torch::Tensor bias;
  torch::Tensor u;
  torch::Tensor v;

 private:
  std::int64_t stride_;
  std::int64_t padding_;
};
TORCH_MODULE(SpectralNormConv2d);

struct PatchDiscriminatorSpec {
  std::int64_t in_channels = 3;
  std::int64_t base_width = 64;
  std::int64_t num_layers = 5;
  double leaky_slope = 0.2;

  /// Output channel count of layer i: base * 2^i capped at base * 8; the last layer emits 1.
  std::int64_t layer_width(std::int64_t i) const;
  /// The last two layers keep stride 1, the rest halve the resolution.
  std::int64_t layer_stride(std::int64_t i) const;
  std::int64_t output_size(std::int64_t input_size) const;
  std::int64_t receptive_field() const;
  void validate() const;
};

struct DiscriminatorOutput {
  torch::Tensor logits;
  /// Post-LeakyReLU activations of every layer except the last.
  std::vector<torch::Tensor> features;
};

/// 4x4 spectrally normalized convolutions with LeakyReLU between them; the
/// final layer is linear and emits one logit per patch.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(PatchDiscriminatorSpec spec);

  DiscriminatorOutput forward(const torch::Tensor& input);

  const PatchDiscriminatorSpec& spec() const noexcept { return spec_; }
  const std::vector<SpectralNormConv2d>& layers() const noexcept { return layers_; }

 private:
  PatchDiscriminatorSpec spec_;
  std::vector<SpectralNormConv2d> layers_;
};
TORCH_MODULE(PatchDiscriminator);

}  // namespace higan::nn

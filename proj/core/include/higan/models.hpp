#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "higan/dataset.hpp"
#include "higan/nn_blocks.hpp"

namespace higan::models {

/// Architecture knobs. Defaults give 256-channel latents at a quarter of the input resolution.
struct ModelConfig {
  std::int64_t base_width = 64;
  std::int64_t residual_blocks = 4;
  std::int64_t disc_base_width = 64;
  std::int64_t disc_layers = 5;
  bool edge_enabled = true;
  bool label_enabled = true;

  std::int64_t latent_channels() const noexcept { return 4 * base_width; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// gconv 7x7 s1 -> gconv 4x4 s2 -> gconv 4x4 s2 (each followed by IN + ReLU),
/// then residual blocks. Input is the masked plane with the mask appended as
/// the last channel.
class EncoderImpl : public torch::nn::Module {
 public:
  EncoderImpl(std::int64_t in_channels, std::int64_t base_width, std::int64_t residual_blocks);

  torch::Tensor forward(const torch::Tensor& input);

  std::int64_t in_channels() const noexcept { return in_channels_; }

 private:
  std::int64_t in_channels_;
  std::vector<std::pair<nn::GatedConv2d, nn::InstanceNorm>> stages_;
  std::vector<nn::GatedResidualBlock> blocks_;
};
TORCH_MODULE(Encoder);

/// Two rounds of nearest 2x upsampling + gconv 3x3 + IN + ReLU, then a 7x7 conv and tanh.
class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl(std::int64_t base_width, std::int64_t out_channels);

  torch::Tensor forward(const torch::Tensor& latent);

 private:
  std::vector<std::pair<nn::GatedConv2d, nn::InstanceNorm>> stages_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Decoder);

struct RegularizerOutput {
  torch::Tensor latent;
  torch::Tensor reconstruction;
};

/// Edge or label generator: encoder over (masked plane, mask) and a decoder back to one channel.
class RegularizerGeneratorImpl : public torch::nn::Module {
 public:
  RegularizerGeneratorImpl(std::int64_t base_width, std::int64_t residual_blocks);

  RegularizerOutput forward(const torch::Tensor& masked, const torch::Tensor& mask);
  torch::Tensor encode(const torch::Tensor& masked, const torch::Tensor& mask);

  Encoder encoder{nullptr};
  Decoder decoder{nullptr};
};
TORCH_MODULE(RegularizerGenerator);

struct LatentBundle {
  torch::Tensor rgb;
  torch::Tensor depth;
  torch::Tensor edge;
  torch::Tensor label;

  /// Throws InvalidArgument unless all four share N, C, H, W.
  void validate() const;
};

/// Channel concatenation of the four latents, 1x1 gated conv back to the latent width, IN, ReLU.
class FusionImpl : public torch::nn::Module {
 public:
  explicit FusionImpl(std::int64_t latent_channels);

  torch::Tensor forward(const LatentBundle& latents);

 private:
  std::int64_t latent_channels_;
  nn::GatedConv2d conv_{nullptr};
  nn::InstanceNorm norm_{nullptr};
};
TORCH_MODULE(Fusion);

struct CombinedOutput {
  torch::Tensor rgb;
  torch::Tensor depth;
};

/// RGB and depth encoders, fusion with the auxiliary latents and a shared 4-channel decoder.
class CombinedGeneratorImpl : public torch::nn::Module {
 public:
  CombinedGeneratorImpl(std::int64_t base_width, std::int64_t residual_blocks);

  CombinedOutput forward(const torch::Tensor& masked_rgb, const torch::Tensor& masked_depth,
                         const torch::Tensor& mask, const torch::Tensor& edge_latent,
                         const torch::Tensor& label_latent);

  Encoder rgb_encoder{nullptr};
  Encoder depth_encoder{nullptr};
  Fusion fusion{nullptr};
  Decoder decoder{nullptr};
};
TORCH_MODULE(CombinedGenerator);

enum class DiscriminatorRole { Edge, Label, Rgb, Depth };

/// Disjoint parameter groups used for optimizer wiring and bookkeeping.
enum class ParamGroup {
  EdgeEncoder,
  EdgeDecoder,
  LabelEncoder,
  LabelDecoder,
  CombinedGenerator,
  EdgeDiscriminator,
  LabelDiscriminator,
  RgbDiscriminator,
  DepthDiscriminator,
};

inline constexpr ParamGroup kAllParamGroups[] = {
    ParamGroup::EdgeEncoder,       ParamGroup::EdgeDecoder,        ParamGroup::LabelEncoder,
    ParamGroup::LabelDecoder,      ParamGroup::CombinedGenerator,  ParamGroup::EdgeDiscriminator,
    ParamGroup::LabelDiscriminator, ParamGroup::RgbDiscriminator, ParamGroup::DepthDiscriminator,
};

const char* to_string(ParamGroup group);

/// Batch planes in model space ([-1, 1]); mask stays {0, 1}.
struct TensorBatch {
  torch::Tensor rgb;
  torch::Tensor depth;
  torch::Tensor edge;
  torch::Tensor label;
  torch::Tensor mask;
  torch::Tensor masked_rgb;
  torch::Tensor masked_depth;
  torch::Tensor masked_edge;
  torch::Tensor masked_label;

  TensorBatch to(torch::Dtype dtype) const;
};

TensorBatch to_tensors(const data::Batch& batch, torch::Dtype dtype = torch::kFloat32);

struct HiGanOutput {
  RegularizerOutput edge;
  RegularizerOutput label;
  CombinedOutput combined;
};

/// The three GANs. Disabled regularizers still exist (so checkpoints keep one
/// layout) but contribute a zero latent and are never trained.
class HiGanModelImpl : public torch::nn::Module {
 public:
  explicit HiGanModelImpl(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }

  /// Zero tensor when the edge regularizer is disabled.
  torch::Tensor edge_latent(const torch::Tensor& masked_edge, const torch::Tensor& mask);
  torch::Tensor label_latent(const torch::Tensor& masked_label, const torch::Tensor& mask);

  RegularizerOutput edge_forward(const torch::Tensor& masked_edge, const torch::Tensor& mask);
  RegularizerOutput label_forward(const torch::Tensor& masked_label, const torch::Tensor& mask);

  /// Re-runs the edge and label encoders so gradients from the RGBD outputs reach them.
  CombinedOutput combined_forward(const TensorBatch& batch);
  CombinedOutput combined_forward(const TensorBatch& batch, const torch::Tensor& edge_latent,
                                  const torch::Tensor& label_latent);

  /// Every output at once (regularizers only if enabled; otherwise undefined tensors).
  HiGanOutput forward(const TensorBatch& batch);

  nn::DiscriminatorOutput discriminate(DiscriminatorRole role, const torch::Tensor& image);
  nn::PatchDiscriminator& discriminator(DiscriminatorRole role);

  std::vector<torch::Tensor> parameters_of(ParamGroup group) const;
  std::vector<std::pair<std::string, torch::Tensor>> named_parameters_of(ParamGroup group) const;
  /// Which group owns the named parameter (names as in named_parameters()).
  ParamGroup group_of(const std::string& parameter_name) const;
  bool group_enabled(ParamGroup group) const noexcept;

  RegularizerGenerator edge_generator{nullptr};
  RegularizerGenerator label_generator{nullptr};
  CombinedGenerator combined_generator{nullptr};
  nn::PatchDiscriminator edge_discriminator{nullptr};
  nn::PatchDiscriminator label_discriminator{nullptr};
  nn::PatchDiscriminator rgb_discriminator{nullptr};
  nn::PatchDiscriminator depth_discriminator{nullptr};

 private:
  torch::Tensor zero_latent(const torch::Tensor& mask) const;

  ModelConfig config_;
};
TORCH_MODULE(HiGanModel);

}  // namespace higan::models

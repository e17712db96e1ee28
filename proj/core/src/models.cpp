#include "higan/models.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "higan/error.hpp"

namespace higan::models {

namespace F = torch::nn::functional;

void ModelConfig::validate() const {
  if (base_width <= 0 || disc_base_width <= 0) throw InvalidArgument("model widths must be positive");
  if (residual_blocks < 0) throw InvalidArgument("residual_blocks must be non-negative");
  if (disc_layers < 2) throw InvalidArgument("disc_layers must be at least 2");
}

EncoderImpl::EncoderImpl(std::int64_t in_channels, std::int64_t base_width, std::int64_t residual_blocks)
    : in_channels_(in_channels) {
  const nn::GatedConvSpec specs[] = {
      {in_channels, base_width, 7, 1, 1},
      {base_width, 2 * base_width, 4, 2, 1},
      {2 * base_width, 4 * base_width, 4, 2, 1},
  };
  for (std::size_t i = 0; i < std::size(specs); ++i) {
    auto conv = register_module(fmt::format("conv{}", i), nn::GatedConv2d(specs[i]));
    auto norm = register_module(fmt::format("norm{}", i), nn::InstanceNorm(specs[i].out_channels));
    stages_.emplace_back(conv, norm);
  }
  for (std::int64_t i = 0; i < residual_blocks; ++i) {
    blocks_.push_back(register_module(fmt::format("block{}", i), nn::GatedResidualBlock(4 * base_width)));
  }
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != in_channels_) {
    throw InvalidArgument(fmt::format("encoder: expected {} input channels, got shape {}", in_channels_,
                                      fmt::join(input.sizes(), "x")));
  }
  if (input.size(2) % 4 != 0 || input.size(3) % 4 != 0) {
    throw InvalidArgument("encoder: height and width must be multiples of 4");
  }
  torch::Tensor x = input;
  for (auto& [conv, norm] : stages_) x = torch::relu(norm->forward(conv->forward(x)));
  for (auto& block : blocks_) x = block->forward(x);
  return x;
}

DecoderImpl::DecoderImpl(std::int64_t base_width, std::int64_t out_channels) {
  const nn::GatedConvSpec specs[] = {
      {4 * base_width, 2 * base_width, 3, 1, 1},
      {2 * base_width, base_width, 3, 1, 1},
  };
  for (std::size_t i = 0; i < std::size(specs); ++i) {
    auto conv = register_module(fmt::format("conv{}", i), nn::GatedConv2d(specs[i]));
    auto norm = register_module(fmt::format("norm{}", i), nn::InstanceNorm(specs[i].out_channels));
    stages_.emplace_back(conv, norm);
  }
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(base_width, out_channels, 7)));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& latent) {
  torch::Tensor x = latent;
  for (auto& [conv, norm] : stages_) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    x = torch::relu(norm->forward(conv->forward(x)));
  }
  x = F::pad(x, F::PadFuncOptions({3, 3, 3, 3}).mode(torch::kReflect));
  return torch::tanh(head_->forward(x));
}

RegularizerGeneratorImpl::RegularizerGeneratorImpl(std::int64_t base_width, std::int64_t residual_blocks) {
  encoder = register_module("encoder", Encoder(2, base_width, residual_blocks));
  decoder = register_module("decoder", Decoder(base_width, 1));
}

torch::Tensor RegularizerGeneratorImpl::encode(const torch::Tensor& masked, const torch::Tensor& mask) {
  if (masked.dim() != 4 || masked.size(1) != 1) throw InvalidArgument("regularizer input must have one channel");
  if (mask.sizes() != masked.sizes()) throw InvalidArgument("regularizer: mask shape differs from input");
  return encoder->forward(torch::cat({masked, mask}, 1));
}

RegularizerOutput RegularizerGeneratorImpl::forward(const torch::Tensor& masked, const torch::Tensor& mask) {
  RegularizerOutput out;
  out.latent = encode(masked, mask);
  out.reconstruction = decoder->forward(out.latent);
  return out;
}

void LatentBundle::validate() const {
  for (const auto* t : {&depth, &edge, &label}) {
    if (!t->defined() || t->sizes() != rgb.sizes()) {
      throw InvalidArgument(fmt::format("latent bundle: shapes differ (rgb latent is {})", fmt::join(rgb.sizes(), "x")));
    }
  }
}

FusionImpl::FusionImpl(std::int64_t latent_channels) : latent_channels_(latent_channels) {
  conv_ = register_module("conv", nn::GatedConv2d(nn::GatedConvSpec{4 * latent_channels, latent_channels, 1, 1, 1}));
  norm_ = register_module("norm", nn::InstanceNorm(latent_channels));
}

torch::Tensor FusionImpl::forward(const LatentBundle& latents) {
  latents.validate();
  if (latents.rgb.size(1) != latent_channels_) {
    throw InvalidArgument(fmt::format("fusion: expected {}-channel latents", latent_channels_));
  }
  const auto stacked = torch::cat({latents.rgb, latents.depth, latents.edge, latents.label}, 1);
  return torch::relu(norm_->forward(conv_->forward(stacked)));
}

CombinedGeneratorImpl::CombinedGeneratorImpl(std::int64_t base_width, std::int64_t residual_blocks) {
  rgb_encoder = register_module("rgb_encoder", Encoder(4, base_width, residual_blocks));
  depth_encoder = register_module("depth_encoder", Encoder(2, base_width, residual_blocks));
  fusion = register_module("fusion", Fusion(4 * base_width));
  decoder = register_module("decoder", Decoder(base_width, 4));
}

CombinedOutput CombinedGeneratorImpl::forward(const torch::Tensor& masked_rgb, const torch::Tensor& masked_depth,
                                              const torch::Tensor& mask, const torch::Tensor& edge_latent,
                                              const torch::Tensor& label_latent) {
  if (masked_rgb.dim() != 4 || masked_rgb.size(1) != 3) throw InvalidArgument("combined generator: rgb needs 3 channels");
  if (masked_depth.dim() != 4 || masked_depth.size(1) != 1) {
    throw InvalidArgument("combined generator: depth needs 1 channel");
  }
  LatentBundle latents{rgb_encoder->forward(torch::cat({masked_rgb, mask}, 1)),
                       depth_encoder->forward(torch::cat({masked_depth, mask}, 1)), edge_latent, label_latent};
  const auto decoded = decoder->forward(fusion->forward(latents));
  return {decoded.narrow(1, 0, 3), decoded.narrow(1, 3, 1)};
}

const char* to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::EdgeEncoder: return "edge_encoder";
    case ParamGroup::EdgeDecoder: return "edge_decoder";
    case ParamGroup::LabelEncoder: return "label_encoder";
    case ParamGroup::LabelDecoder: return "label_decoder";
    case ParamGroup::CombinedGenerator: return "combined_generator";
    case ParamGroup::EdgeDiscriminator: return "edge_discriminator";
    case ParamGroup::LabelDiscriminator: return "label_discriminator";
    case ParamGroup::RgbDiscriminator: return "rgb_discriminator";
    case ParamGroup::DepthDiscriminator: return "depth_discriminator";
  }
  return "unknown";
}

TensorBatch TensorBatch::to(torch::Dtype dtype) const {
  return {rgb.to(dtype),        depth.to(dtype),        edge.to(dtype),
          label.to(dtype),      mask.to(dtype),         masked_rgb.to(dtype),
          masked_depth.to(dtype), masked_edge.to(dtype), masked_label.to(dtype)};
}

namespace {

torch::Tensor stacked_tensor(const data::Batch& batch, data::Plane plane) {
  auto s = batch.stacked(plane);
  return torch::from_blob(s.values.data(), {s.batch, s.channels, s.height, s.width}, torch::kFloat32).clone();
}

}  // namespace

TensorBatch to_tensors(const data::Batch& batch, torch::Dtype dtype) {
  using data::Plane;
  const auto model_space = [&](Plane p) { return (stacked_tensor(batch, p) * 2.0 - 1.0).to(dtype); };
  TensorBatch t;
  t.rgb = model_space(Plane::Rgb);
  t.depth = model_space(Plane::Depth);
  t.edge = model_space(Plane::Edge);
  t.label = model_space(Plane::Label);
  t.mask = stacked_tensor(batch, Plane::Mask).to(dtype);
  t.masked_rgb = model_space(Plane::MaskedRgb);
  t.masked_depth = model_space(Plane::MaskedDepth);
  t.masked_edge = model_space(Plane::MaskedEdge);
  t.masked_label = model_space(Plane::MaskedLabel);
  return t;
}

HiGanModelImpl::HiGanModelImpl(ModelConfig config) : config_(config) {
  config_.validate();
  const auto w = config_.base_width;
  const auto blocks = config_.residual_blocks;
  edge_generator = register_module("edge_generator", RegularizerGenerator(w, blocks));
  label_generator = register_module("label_generator", RegularizerGenerator(w, blocks));
  combined_generator = register_module("combined_generator", CombinedGenerator(w, blocks));
  const auto disc = [&](std::int64_t channels) {
    return nn::PatchDiscriminator(
        nn::PatchDiscriminatorSpec{channels, config_.disc_base_width, config_.disc_layers, 0.2});
  };
  edge_discriminator = register_module("edge_discriminator", disc(1));
  label_discriminator = register_module("label_discriminator", disc(1));
  rgb_discriminator = register_module("rgb_discriminator", disc(3));
  depth_discriminator = register_module("depth_discriminator", disc(1));
}

torch::Tensor HiGanModelImpl::zero_latent(const torch::Tensor& mask) const {
  return torch::zeros({mask.size(0), config_.latent_channels(), mask.size(2) / 4, mask.size(3) / 4},
                      mask.options());
}

torch::Tensor HiGanModelImpl::edge_latent(const torch::Tensor& masked_edge, const torch::Tensor& mask) {
  if (!config_.edge_enabled) return zero_latent(mask);
  return edge_generator->encode(masked_edge, mask);
}

torch::Tensor HiGanModelImpl::label_latent(const torch::Tensor& masked_label, const torch::Tensor& mask) {
  if (!config_.label_enabled) return zero_latent(mask);
  return label_generator->encode(masked_label, mask);
}

RegularizerOutput HiGanModelImpl::edge_forward(const torch::Tensor& masked_edge, const torch::Tensor& mask) {
  return edge_generator->forward(masked_edge, mask);
}

RegularizerOutput HiGanModelImpl::label_forward(const torch::Tensor& masked_label, const torch::Tensor& mask) {
  return label_generator->forward(masked_label, mask);
}

CombinedOutput HiGanModelImpl::combined_forward(const TensorBatch& batch) {
  return combined_forward(batch, edge_latent(batch.masked_edge, batch.mask),
                          label_latent(batch.masked_label, batch.mask));
}

CombinedOutput HiGanModelImpl::combined_forward(const TensorBatch& batch, const torch::Tensor& edge_latent,
                                                const torch::Tensor& label_latent) {
  return combined_generator->forward(batch.masked_rgb, batch.masked_depth, batch.mask, edge_latent, label_latent);
}

HiGanOutput HiGanModelImpl::forward(const TensorBatch& batch) {
  HiGanOutput out;
  if (config_.edge_enabled) out.edge = edge_forward(batch.masked_edge, batch.mask);
  if (config_.label_enabled) out.label = label_forward(batch.masked_label, batch.mask);
  const auto z_e = config_.edge_enabled ? out.edge.latent : zero_latent(batch.mask);
  const auto z_l = config_.label_enabled ? out.label.latent : zero_latent(batch.mask);
  out.combined = combined_forward(batch, z_e, z_l);
  return out;
}

nn::PatchDiscriminator& HiGanModelImpl::discriminator(DiscriminatorRole role) {
  switch (role) {
    case DiscriminatorRole::Edge: return edge_discriminator;
    case DiscriminatorRole::Label: return label_discriminator;
    case DiscriminatorRole::Rgb: return rgb_discriminator;
    case DiscriminatorRole::Depth: return depth_discriminator;
  }
  throw InvalidArgument("unknown discriminator role");
}

nn::DiscriminatorOutput HiGanModelImpl::discriminate(DiscriminatorRole role, const torch::Tensor& image) {
  return discriminator(role)->forward(image);
}

ParamGroup HiGanModelImpl::group_of(const std::string& name) const {
  const auto starts = [&](const char* prefix) { return name.rfind(prefix, 0) == 0; };
  if (starts("edge_generator.encoder.")) return ParamGroup::EdgeEncoder;
  if (starts("edge_generator.decoder.")) return ParamGroup::EdgeDecoder;
  if (starts("label_generator.encoder.")) return ParamGroup::LabelEncoder;
  if (starts("label_generator.decoder.")) return ParamGroup::LabelDecoder;
  if (starts("combined_generator.")) return ParamGroup::CombinedGenerator;
  if (starts("edge_discriminator.")) return ParamGroup::EdgeDiscriminator;
  if (starts("label_discriminator.")) return ParamGroup::LabelDiscriminator;
  if (starts("rgb_discriminator.")) return ParamGroup::RgbDiscriminator;
  if (starts("depth_discriminator.")) return ParamGroup::DepthDiscriminator;
  throw InvalidArgument(fmt::format("parameter '{}' belongs to no group", name));
}

std::vector<std::pair<std::string, torch::Tensor>> HiGanModelImpl::named_parameters_of(ParamGroup group) const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : named_parameters()) {
    if (group_of(item.key()) == group) out.emplace_back(item.key(), item.value());
  }
  return out;
}

std::vector<torch::Tensor> HiGanModelImpl::parameters_of(ParamGroup group) const {
  std::vector<torch::Tensor> out;
  for (auto& [name, p] : named_parameters_of(group)) out.push_back(p);
  return out;
}

bool HiGanModelImpl::group_enabled(ParamGroup group) const noexcept {
  switch (group) {
    case ParamGroup::EdgeEncoder:
    case ParamGroup::EdgeDecoder:
    case ParamGroup::EdgeDiscriminator: return config_.edge_enabled;
    case ParamGroup::LabelEncoder:
    case ParamGroup::LabelDecoder:
    case ParamGroup::LabelDiscriminator: return config_.label_enabled;
    default: return true;
  }
}

}  // namespace higan::models

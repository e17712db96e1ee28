#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "higan/models.hpp"
#include "higan/nn_blocks.hpp"

namespace higan::losses {

/// Every lambda of the objectives. Defaults are the standard training weights;
/// the edge/label generator adversarial weights have no standard value and default to 1.
struct LossWeights {
  double fm_edge = 10.0;
  double fm_label = 15.0;
  double fm_rgb = 5.0;
  double fm_depth = 5.0;
  double perceptual_rgb = 3.0;
  double perceptual_depth = 2.0;
  double style_rgb = 2.0;
  double style_depth = 3.0;
  double adv_g_rgb = 0.005;
  double adv_g_depth = 0.01;
  double adv_g_edge = 1.0;
  double adv_g_label = 1.0;
  double adv_d_edge = 1.0;
  double adv_d_label = 1.0;
  double adv_d_rgb = 1.0;
  double adv_d_depth = 1.0;

  void validate() const;
  LossWeights scaled(double factor) const;

  /// (name, pointer-to-member) for every weight, in declaration order.
  static const std::vector<std::pair<const char*, double LossWeights::*>>& fields();

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct FeatureExtractorConfig {
  /// VGG-16 width multiplier; 64 is the standard network.
  std::int64_t base_width = 64;
  /// Seed of the fixed random fallback weights.
  std::uint64_t seed = 1234;
  /// Optional torchvision VGG-16 state_dict saved with torch.save (requires base_width 64).
  std::optional<std::filesystem::path> weights_path;

  /// "pretrained:<path>" or "random:<seed>".
  std::string source() const;

  friend bool operator==(const FeatureExtractorConfig&, const FeatureExtractorConfig&) = default;
};

inline constexpr int kFeatureLayers = 5;

/// Frozen VGG-16 trunk (through conv5_1). forward() returns the ReLU
/// activations of the first convolution of each of the five blocks.
/// Inputs are model-space images; single-channel inputs are replicated to RGB
/// and everything is mapped to ImageNet statistics before the first layer.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(FeatureExtractorConfig config = {});

  std::vector<torch::Tensor> forward(const torch::Tensor& image);

  const FeatureExtractorConfig& config() const noexcept { return config_; }

 private:
  void init_random();
  void load_pretrained(const std::filesystem::path& path);

  FeatureExtractorConfig config_;
  std::vector<torch::nn::Conv2d> convs_;
  torch::Tensor mean_;
  torch::Tensor std_;
};
TORCH_MODULE(FeatureExtractor);

/// Non-saturating generator loss: mean BCE(sigmoid(logits), 1).
torch::Tensor adv_loss_generator(const torch::Tensor& logits_fake);
/// BCE(real -> 1) + BCE(fake -> 0), each averaged over patches and batch.
torch::Tensor adv_loss_discriminator(const torch::Tensor& logits_real, const torch::Tensor& logits_fake);

/// Sum over layers of mean squared difference. Real features are detached.
torch::Tensor fm_loss(const std::vector<torch::Tensor>& real_features,
                      const std::vector<torch::Tensor>& fake_features);
/// Real and fake pass through one discriminator forward.
torch::Tensor fm_loss(nn::PatchDiscriminator& disc, const torch::Tensor& real, const torch::Tensor& fake);

/// Sum over layers of mean absolute difference. Truth features are detached.
torch::Tensor perceptual_loss(const std::vector<torch::Tensor>& pred_features,
                              const std::vector<torch::Tensor>& truth_features);
torch::Tensor perceptual_loss(FeatureExtractor& extractor, const torch::Tensor& pred, const torch::Tensor& truth);

/// A A^T per sample for activations reshaped to (C, H*W). Returns (N, C, C).
torch::Tensor gram_matrix(const torch::Tensor& features);
/// sum_n K_n * L1(Gram(pred_n) - Gram(truth_n)), K_n = 1 / (C_n H_n W_n).
/// The L1 term is averaged over matrix entries and batch.
torch::Tensor style_loss(const std::vector<torch::Tensor>& pred_features,
                         const std::vector<torch::Tensor>& truth_features);
torch::Tensor style_loss(FeatureExtractor& extractor, const torch::Tensor& pred, const torch::Tensor& truth);

/// Scalar objective plus its named, already weighted-or-raw components for logging.
struct Objective {
  torch::Tensor total;
  std::vector<std::pair<std::string, double>> terms;

  bool defined() const noexcept { return total.defined(); }
};

/// lambda_adv * adv_G + lambda_fm * FM for an edge or label generator.
Objective regularizer_generator_objective(nn::PatchDiscriminator& disc, const torch::Tensor& truth,
                                          const torch::Tensor& fake, double adv_weight, double fm_weight,
                                          const std::string& prefix);
/// lambda_adv * adv_D with the fake detached.
Objective discriminator_objective(nn::PatchDiscriminator& disc, const torch::Tensor& truth,
                                  const torch::Tensor& fake, double adv_weight, const std::string& prefix);

/// L_G^c = L_G^r + L_G^d, each adv + FM + perceptual + style.
Objective combined_generator_objective(models::HiGanModel& model, FeatureExtractor& extractor,
                                       const models::TensorBatch& batch, const models::CombinedOutput& output,
                                       const LossWeights& weights);
/// L_D^c = lambda_r adv_D(rgb) + lambda_d adv_D(depth), fakes detached.
Objective combined_discriminator_objective(models::HiGanModel& model, const models::TensorBatch& batch,
                                           const models::CombinedOutput& output, const LossWeights& weights);

struct RegularizerObjectives {
  Objective edge_generator;
  Objective edge_discriminator;
  Objective label_generator;
  Objective label_discriminator;
};

/// Edge and label objectives for one batch under the current parameters.
/// Disabled regularizers yield undefined objectives.
RegularizerObjectives regularizer_objectives(const models::TensorBatch& batch, models::HiGanModel& model,
                                             const LossWeights& weights);

struct CombinedObjectives {
  Objective generator;
  Objective discriminator;
};

CombinedObjectives combined_objectives(const models::TensorBatch& batch, models::HiGanModel& model,
                                       FeatureExtractor& extractor, const LossWeights& weights);

}  // namespace higan::losses

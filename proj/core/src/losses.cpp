#include "higan/losses.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include <ATen/CPUGeneratorImpl.h>
#include <fmt/format.h>
#include <torch/serialize.h>

#include "higan/error.hpp"

namespace higan::losses {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
  for (const auto& [name, member] : fields()) {
    const double value = this->*member;
    if (!(value >= 0.0) || !std::isfinite(value)) {
      throw InvalidArgument(fmt::format("loss weight {} must be finite and non-negative, got {}", name, value));
    }
  }
}

LossWeights LossWeights::scaled(double factor) const {
  LossWeights out = *this;
  for (const auto& [name, member] : fields()) out.*member *= factor;
  return out;
}

const std::vector<std::pair<const char*, double LossWeights::*>>& LossWeights::fields() {
  static const std::vector<std::pair<const char*, double LossWeights::*>> table = {
      {"fm_edge", &LossWeights::fm_edge},
      {"fm_label", &LossWeights::fm_label},
      {"fm_rgb", &LossWeights::fm_rgb},
      {"fm_depth", &LossWeights::fm_depth},
      {"perceptual_rgb", &LossWeights::perceptual_rgb},
      {"perceptual_depth", &LossWeights::perceptual_depth},
      {"style_rgb", &LossWeights::style_rgb},
      {"style_depth", &LossWeights::style_depth},
      {"adv_g_rgb", &LossWeights::adv_g_rgb},
      {"adv_g_depth", &LossWeights::adv_g_depth},
      {"adv_g_edge", &LossWeights::adv_g_edge},
      {"adv_g_label", &LossWeights::adv_g_label},
      {"adv_d_edge", &LossWeights::adv_d_edge},
      {"adv_d_label", &LossWeights::adv_d_label},
      {"adv_d_rgb", &LossWeights::adv_d_rgb},
      {"adv_d_depth", &LossWeights::adv_d_depth},
  };
  return table;
}

std::string FeatureExtractorConfig::source() const {
  if (weights_path) return "pretrained:" + weights_path->string();
  return fmt::format("random:{}", seed);
}

namespace {

struct ConvLayer {
  const char* name;
  int torchvision_index;  // position in torchvision's vgg16().features
  std::int64_t width_multiple;
  bool pool_before;
  bool tap;
};

// VGG-16 through conv5_1.
constexpr ConvLayer kVggLayers[] = {
    {"conv1_1", 0, 1, false, true},  {"conv1_2", 2, 1, false, false},
    {"conv2_1", 5, 2, true, true},   {"conv2_2", 7, 2, false, false},
    {"conv3_1", 10, 4, true, true},  {"conv3_2", 12, 4, false, false}, {"conv3_3", 14, 4, false, false},
    {"conv4_1", 17, 8, true, true},  {"conv4_2", 19, 8, false, false}, {"conv4_3", 21, 8, false, false},
    {"conv5_1", 24, 8, true, true},
};

}  // namespace

FeatureExtractorImpl::FeatureExtractorImpl(FeatureExtractorConfig config) : config_(std::move(config)) {
  if (config_.base_width <= 0) throw InvalidArgument("feature extractor width must be positive");
  std::int64_t in = 3;
  for (const auto& layer : kVggLayers) {
    const std::int64_t out = config_.base_width * layer.width_multiple;
    auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
    convs_.push_back(register_module(layer.name, conv));
    in = out;
  }
  mean_ = register_buffer("imagenet_mean", torch::tensor({0.485, 0.456, 0.406}).view({1, 3, 1, 1}));
  std_ = register_buffer("imagenet_std", torch::tensor({0.229, 0.224, 0.225}).view({1, 3, 1, 1}));

  if (config_.weights_path) {
    load_pretrained(*config_.weights_path);
  } else {
    init_random();
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

void FeatureExtractorImpl::init_random() {
  torch::NoGradGuard no_grad;
  auto gen = at::detail::createCPUGenerator(config_.seed);
  for (auto& conv : convs_) {
    const auto& w = conv->weight;
    const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
    w.copy_(torch::randn(w.sizes(), gen, w.options()) * std::sqrt(2.0 / fan_in));
    conv->bias.zero_();
  }
}

void FeatureExtractorImpl::load_pretrained(const std::filesystem::path& path) {
  if (config_.base_width != 64) throw InvalidArgument("pretrained VGG-16 weights require base_width 64");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open VGG-16 weights '{}'", path.string()));
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  c10::IValue loaded;
  try {
    loaded = torch::pickle_load(bytes);
  } catch (const c10::Error& e) {
    throw Error(fmt::format("'{}' is not a torch.save state_dict: {}", path.string(), e.what_without_backtrace()));
  }
  if (!loaded.isGenericDict()) throw Error(fmt::format("'{}' does not hold a state_dict", path.string()));
  const auto dict = loaded.toGenericDict();
  const auto fetch = [&](const std::string& key, const torch::Tensor& like) {
    const auto it = dict.find(key);
    if (it == dict.end()) throw Error(fmt::format("'{}' lacks '{}'", path.string(), key));
    const auto t = it->value().toTensor();
    if (t.sizes() != like.sizes()) throw Error(fmt::format("'{}': '{}' has the wrong shape", path.string(), key));
    return t.to(like.dtype());
  };
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const int idx = kVggLayers[i].torchvision_index;
    convs_[i]->weight.copy_(fetch(fmt::format("features.{}.weight", idx), convs_[i]->weight));
    convs_[i]->bias.copy_(fetch(fmt::format("features.{}.bias", idx), convs_[i]->bias));
  }
}

std::vector<torch::Tensor> FeatureExtractorImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || (image.size(1) != 1 && image.size(1) != 3)) {
    throw InvalidArgument("feature extractor expects N x {1,3} x H x W input");
  }
  torch::Tensor x = image.size(1) == 1 ? image.expand({-1, 3, -1, -1}) : image;
  x = ((x + 1.0) * 0.5 - mean_) / std_;
  std::vector<torch::Tensor> taps;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    if (kVggLayers[i].pool_before) x = F::max_pool2d(x, F::MaxPool2dFuncOptions(2));
    x = torch::relu(convs_[i]->forward(x));
    if (kVggLayers[i].tap) taps.push_back(x);
  }
  return taps;
}

torch::Tensor adv_loss_generator(const torch::Tensor& logits_fake) {
  return F::binary_cross_entropy_with_logits(logits_fake, torch::ones_like(logits_fake));
}

torch::Tensor adv_loss_discriminator(const torch::Tensor& logits_real, const torch::Tensor& logits_fake) {
  return F::binary_cross_entropy_with_logits(logits_real, torch::ones_like(logits_real)) +
         F::binary_cross_entropy_with_logits(logits_fake, torch::zeros_like(logits_fake));
}

torch::Tensor fm_loss(const std::vector<torch::Tensor>& real_features,
                      const std::vector<torch::Tensor>& fake_features) {
  if (real_features.size() != fake_features.size() || real_features.empty()) {
    throw InvalidArgument("fm_loss: feature lists differ in length or are empty");
  }
  torch::Tensor total = torch::zeros({}, fake_features.front().options());
  for (std::size_t i = 0; i < real_features.size(); ++i) {
    total = total + (real_features[i].detach() - fake_features[i]).pow(2).mean();
  }
  return total;
}

namespace {

struct PairedFeatures {
  torch::Tensor fake_logits;
  std::vector<torch::Tensor> real;
  std::vector<torch::Tensor> fake;
};

// Real and fake pass through the discriminator as one batch, so both see the
// same spectrally normalized weights.
PairedFeatures paired_forward(nn::PatchDiscriminator& disc, const torch::Tensor& real, const torch::Tensor& fake) {
  const auto n_real = real.size(0);
  const auto n_fake = fake.size(0);
  const auto out = disc->forward(torch::cat({real.detach(), fake}));
  PairedFeatures p;
  p.fake_logits = out.logits.narrow(0, n_real, n_fake);
  for (const auto& f : out.features) {
    p.real.push_back(f.narrow(0, 0, n_real).detach());
    p.fake.push_back(f.narrow(0, n_real, n_fake));
  }
  return p;
}

}  // namespace

torch::Tensor fm_loss(nn::PatchDiscriminator& disc, const torch::Tensor& real, const torch::Tensor& fake) {
  const auto p = paired_forward(disc, real, fake);
  return fm_loss(p.real, p.fake);
}

torch::Tensor perceptual_loss(const std::vector<torch::Tensor>& pred_features,
                              const std::vector<torch::Tensor>& truth_features) {
  if (pred_features.size() != truth_features.size() || pred_features.empty()) {
    throw InvalidArgument("perceptual_loss: feature lists differ in length or are empty");
  }
  torch::Tensor total = torch::zeros({}, pred_features.front().options());
  for (std::size_t i = 0; i < pred_features.size(); ++i) {
    total = total + (pred_features[i] - truth_features[i].detach()).abs().mean();
  }
  return total;
}

torch::Tensor perceptual_loss(FeatureExtractor& extractor, const torch::Tensor& pred, const torch::Tensor& truth) {
  std::vector<torch::Tensor> truth_features;
  {
    torch::NoGradGuard no_grad;
    truth_features = extractor->forward(truth);
  }
  return perceptual_loss(extractor->forward(pred), truth_features);
}

torch::Tensor gram_matrix(const torch::Tensor& features) {
  if (features.dim() != 4) throw InvalidArgument("gram_matrix expects N x C x H x W activations");
  const auto a = features.reshape({features.size(0), features.size(1), -1});
  return torch::bmm(a, a.transpose(1, 2));
}

torch::Tensor style_loss(const std::vector<torch::Tensor>& pred_features,
                         const std::vector<torch::Tensor>& truth_features) {
  if (pred_features.size() != truth_features.size() || pred_features.empty()) {
    throw InvalidArgument("style_loss: feature lists differ in length or are empty");
  }
  torch::Tensor total = torch::zeros({}, pred_features.front().options());
  for (std::size_t i = 0; i < pred_features.size(); ++i) {
    const auto& f = pred_features[i];
    const double k = 1.0 / static_cast<double>(f.size(1) * f.size(2) * f.size(3));
    const auto diff = gram_matrix(f) - gram_matrix(truth_features[i].detach());
    total = total + (k * diff).abs().mean();
  }
  return total;
}

torch::Tensor style_loss(FeatureExtractor& extractor, const torch::Tensor& pred, const torch::Tensor& truth) {
  std::vector<torch::Tensor> truth_features;
  {
    torch::NoGradGuard no_grad;
    truth_features = extractor->forward(truth);
  }
  return style_loss(extractor->forward(pred), truth_features);
}

namespace {

double value_of(const torch::Tensor& t) { return t.detach().item<double>(); }

// Weighted adv + FM + perceptual + style for one modality.
torch::Tensor modality_generator_loss(nn::PatchDiscriminator& disc, FeatureExtractor& extractor,
                                      const torch::Tensor& truth, const torch::Tensor& fake, double w_adv,
                                      double w_fm, double w_perc, double w_style, const std::string& prefix,
                                      std::vector<std::pair<std::string, double>>& terms) {
  std::vector<torch::Tensor> truth_f;
  {
    torch::NoGradGuard no_grad;
    truth_f = extractor->forward(truth);
  }
  const auto d = paired_forward(disc, truth, fake);
  const auto fake_f = extractor->forward(fake);
  const auto adv = adv_loss_generator(d.fake_logits);
  const auto fm = fm_loss(d.real, d.fake);
  const auto perc = perceptual_loss(fake_f, truth_f);
  const auto style = style_loss(fake_f, truth_f);
  terms.emplace_back(prefix + "_adv", value_of(adv));
  terms.emplace_back(prefix + "_fm", value_of(fm));
  terms.emplace_back(prefix + "_perceptual", value_of(perc));
  terms.emplace_back(prefix + "_style", value_of(style));
  return w_adv * adv + w_fm * fm + w_perc * perc + w_style * style;
}

}  // namespace

Objective regularizer_generator_objective(nn::PatchDiscriminator& disc, const torch::Tensor& truth,
                                          const torch::Tensor& fake, double adv_weight, double fm_weight,
                                          const std::string& prefix) {
  const auto d = paired_forward(disc, truth, fake);
  const auto adv = adv_loss_generator(d.fake_logits);
  const auto fm = fm_loss(d.real, d.fake);
  Objective out;
  out.total = adv_weight * adv + fm_weight * fm;
  out.terms = {{prefix + "_g_adv", value_of(adv)}, {prefix + "_g_fm", value_of(fm)}, {prefix + "_g", value_of(out.total)}};
  return out;
}

Objective discriminator_objective(nn::PatchDiscriminator& disc, const torch::Tensor& truth,
                                  const torch::Tensor& fake, double adv_weight, const std::string& prefix) {
  const auto real_logits = disc->forward(truth).logits;
  const auto fake_logits = disc->forward(fake.detach()).logits;
  Objective out;
  out.total = adv_weight * adv_loss_discriminator(real_logits, fake_logits);
  out.terms = {{prefix + "_d", value_of(out.total)}};
  return out;
}

Objective combined_generator_objective(models::HiGanModel& model, FeatureExtractor& extractor,
                                       const models::TensorBatch& batch, const models::CombinedOutput& output,
                                       const LossWeights& w) {
  Objective out;
  const auto rgb = modality_generator_loss(model->rgb_discriminator, extractor, batch.rgb, output.rgb, w.adv_g_rgb,
                                           w.fm_rgb, w.perceptual_rgb, w.style_rgb, "rgb", out.terms);
  const auto depth =
      modality_generator_loss(model->depth_discriminator, extractor, batch.depth, output.depth, w.adv_g_depth,
                              w.fm_depth, w.perceptual_depth, w.style_depth, "depth", out.terms);
  out.total = rgb + depth;
  out.terms.emplace_back("rgb_g", value_of(rgb));
  out.terms.emplace_back("depth_g", value_of(depth));
  out.terms.emplace_back("combined_g", value_of(out.total));
  return out;
}

Objective combined_discriminator_objective(models::HiGanModel& model, const models::TensorBatch& batch,
                                           const models::CombinedOutput& output, const LossWeights& w) {
  const auto rgb = discriminator_objective(model->rgb_discriminator, batch.rgb, output.rgb, w.adv_d_rgb, "rgb");
  const auto depth =
      discriminator_objective(model->depth_discriminator, batch.depth, output.depth, w.adv_d_depth, "depth");
  Objective out;
  out.total = rgb.total + depth.total;
  out.terms = {rgb.terms.front(), depth.terms.front(), {"combined_d", value_of(out.total)}};
  return out;
}

RegularizerObjectives regularizer_objectives(const models::TensorBatch& batch, models::HiGanModel& model,
                                             const LossWeights& w) {
  RegularizerObjectives out;
  if (model->config().edge_enabled) {
    const auto edge = model->edge_forward(batch.masked_edge, batch.mask);
    out.edge_discriminator =
        discriminator_objective(model->edge_discriminator, batch.edge, edge.reconstruction, w.adv_d_edge, "edge");
    out.edge_generator = regularizer_generator_objective(model->edge_discriminator, batch.edge, edge.reconstruction,
                                                         w.adv_g_edge, w.fm_edge, "edge");
  }
  if (model->config().label_enabled) {
    const auto label = model->label_forward(batch.masked_label, batch.mask);
    out.label_discriminator = discriminator_objective(model->label_discriminator, batch.label,
                                                      label.reconstruction, w.adv_d_label, "label");
    out.label_generator = regularizer_generator_objective(model->label_discriminator, batch.label,
                                                          label.reconstruction, w.adv_g_label, w.fm_label, "label");
  }
  return out;
}

CombinedObjectives combined_objectives(const models::TensorBatch& batch, models::HiGanModel& model,
                                       FeatureExtractor& extractor, const LossWeights& weights) {
  const auto output = model->combined_forward(batch);
  CombinedObjectives out;
  out.discriminator = combined_discriminator_objective(model, batch, output, weights);
  out.generator = combined_generator_objective(model, extractor, batch, output, weights);
  return out;
}

}  // namespace higan::losses

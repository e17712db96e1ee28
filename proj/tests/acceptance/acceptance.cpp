// Runs the acceptance criteria. With no argument every criterion runs; with
// one or more ids only those do. Prints one PASS/FAIL line per criterion and
// exits nonzero if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <ATen/CPUGeneratorImpl.h>
#include <fmt/format.h>
#include <torch/torch.h>

#include "higan/imaging.hpp"
#include "higan/losses.hpp"
#include "higan/metrics.hpp"
#include "higan/training.hpp"
#include "oracles.hpp"

using namespace higan;
using models::ParamGroup;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0 = no hard limit
  std::function<Outcome()> run;
};

// ---------------------------------------------------------------- 1
Outcome metric_oracles() {
  Outcome o;
  std::mt19937_64 rng(2024);
  double worst_ssim = 0, worst_psnr = 0, worst_mae = 0, worst_rmse = 0;
  for (int i = 0; i < 20; ++i) {
    const int c = i % 2 == 0 ? 3 : 1;
    const auto a = oracle::random_image(rng, 32, 32, c);
    const auto b = oracle::random_image(rng, 32, 32, c);
    worst_ssim = std::max(worst_ssim, std::abs(metrics::ssim(a, b) - oracle::brute_ssim(a, b)));
    worst_psnr = std::max(worst_psnr, std::abs(metrics::psnr(a, b) - oracle::direct_psnr(a, b)));
    worst_mae = std::max(worst_mae, std::abs(metrics::mae(a, b) - oracle::direct_mae(a, b)));
    worst_rmse = std::max(worst_rmse, std::abs(metrics::rmse(a, b) - oracle::direct_rmse(a, b)));
  }
  o.check(worst_ssim <= 1e-6, "ssim");
  o.check(worst_psnr <= 1e-6, "psnr");
  o.check(worst_mae <= 1e-6, "mae");
  o.check(worst_rmse <= 1e-6, "rmse");
  o.note(fmt::format("max |diff| ssim {:.1e} psnr {:.1e} dB mae {:.1e} rmse {:.1e}", worst_ssim, worst_psnr, worst_mae,
                     worst_rmse));
  return o;
}

// ---------------------------------------------------------------- 2
Outcome spectral_bound() {
  Outcome o;
  torch::manual_seed(0);
  models::HiGanModel model(models::ModelConfig{});
  model->train();
  double worst = 0;
  int layers = 0;
  using R = models::DiscriminatorRole;
  for (auto role : {R::Edge, R::Label, R::Rgb, R::Depth}) {
    auto& disc = model->discriminator(role);
    const auto channels = disc->spec().in_channels;
    {
      torch::NoGradGuard ng;
      for (int i = 0; i < 20; ++i) disc->forward(torch::rand({1, channels, 64, 64}) * 2 - 1);
    }
    for (const auto& layer : disc->layers()) {
      const auto w = layer->effective_weight().detach().to(torch::kFloat64);
      const double top = torch::linalg_svdvals(w.reshape({w.size(0), -1}))[0].item<double>();
      worst = std::max(worst, top);
      ++layers;
    }
  }
  o.check(worst <= 1.0 + 1e-2, "top singular value above 1.01");
  o.note(fmt::format("{} layers, max sigma {:.6f}", layers, worst));
  return o;
}

// ---------------------------------------------------------------- 3
Outcome gradient_flow() {
  Outcome o;
  training::Trainer trainer(oracle::tiny_config(64, 16, 2));
  const auto r = trainer.train_step(oracle::synthetic_batch(64, 2, 3));
  const auto& g = r.combined_grad_norms;
  const auto updates = [&](ParamGroup p) { return r.updates.count(p) ? r.updates.at(p) : 0; };
  o.check(g.at(ParamGroup::EdgeEncoder) > 0, "edge encoder gradient");
  o.check(g.at(ParamGroup::LabelEncoder) > 0, "label encoder gradient");
  o.check(g.at(ParamGroup::EdgeDecoder) == 0, "edge decoder gradient");
  o.check(g.at(ParamGroup::LabelDecoder) == 0, "label decoder gradient");
  o.check(updates(ParamGroup::EdgeEncoder) == 2, "edge encoder updates");
  o.check(updates(ParamGroup::LabelEncoder) == 2, "label encoder updates");
  o.check(updates(ParamGroup::EdgeDecoder) == 1, "edge decoder updates");
  o.check(updates(ParamGroup::CombinedGenerator) == 1, "combined generator updates");
  o.note(fmt::format("|g| E_e {:.3e} E_l {:.3e} dec_e {} dec_l {}; updates E_e {} dec_e {} G_r {}",
                     g.at(ParamGroup::EdgeEncoder), g.at(ParamGroup::LabelEncoder), g.at(ParamGroup::EdgeDecoder),
                     g.at(ParamGroup::LabelDecoder), updates(ParamGroup::EdgeEncoder),
                     updates(ParamGroup::EdgeDecoder), updates(ParamGroup::CombinedGenerator)));
  return o;
}

// ---------------------------------------------------------------- 4
std::vector<torch::Tensor> params_of(models::HiGanModel& model, std::initializer_list<ParamGroup> groups) {
  std::vector<torch::Tensor> out;
  for (auto g : groups)
    for (const auto& p : model->parameters_of(g)) out.push_back(p);
  return out;
}

Outcome gradient_check() {
  Outcome o;
  torch::manual_seed(1);
  models::ModelConfig mc;
  mc.base_width = 8;
  mc.disc_base_width = 8;
  mc.residual_blocks = 1;
  mc.disc_layers = 4;
  models::HiGanModel model(mc);
  model->to(torch::kFloat64);
  model->eval();
  losses::FeatureExtractorConfig xc;
  xc.base_width = 8;
  losses::FeatureExtractor fx(xc);
  fx->to(torch::kFloat64);
  const auto batch = oracle::synthetic_batch(16, 1, 5, torch::kFloat64);
  const losses::LossWeights w;

  struct Case {
    const char* name;
    std::vector<torch::Tensor> params;
    std::function<torch::Tensor()> loss;
  };
  const std::vector<Case> cases = {
      {"combined_g",
       params_of(model, {ParamGroup::CombinedGenerator, ParamGroup::EdgeEncoder, ParamGroup::LabelEncoder}),
       [&] { return losses::combined_generator_objective(model, fx, batch, model->combined_forward(batch), w).total; }},
      {"combined_d", params_of(model, {ParamGroup::RgbDiscriminator, ParamGroup::DepthDiscriminator}),
       [&] {
         return losses::combined_discriminator_objective(model, batch, model->combined_forward(batch), w).total;
       }},
      {"edge_g", params_of(model, {ParamGroup::EdgeEncoder, ParamGroup::EdgeDecoder}),
       [&] { return losses::regularizer_objectives(batch, model, w).edge_generator.total; }},
      {"label_g", params_of(model, {ParamGroup::LabelEncoder, ParamGroup::LabelDecoder}),
       [&] { return losses::regularizer_objectives(batch, model, w).label_generator.total; }},
      {"edge_d", params_of(model, {ParamGroup::EdgeDiscriminator}),
       [&] { return losses::regularizer_objectives(batch, model, w).edge_discriminator.total; }},
  };

  torch::Generator gen = at::detail::createCPUGenerator(7);
  double worst = 0;
  for (const auto& c : cases) {
    for (int k = 0; k < 3; ++k) {
      std::vector<torch::Tensor> dir;
      double norm2 = 0;
      for (const auto& p : c.params) {
        dir.push_back(torch::randn(p.sizes(), gen, p.options()));
        norm2 += dir.back().pow(2).sum().item<double>();
      }
      for (auto& d : dir) d /= std::sqrt(norm2);
      const double analytic = oracle::analytic_directional(c.loss, c.params, dir);
      const double numeric =
          oracle::directional_fd([&] { return c.loss().item<double>(); }, c.params, dir, 1e-6);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      worst = std::max(worst, rel);
      o.check(rel <= 1e-3, fmt::format("{} dir {} analytic {:.6e} numeric {:.6e}", c.name, k, analytic, numeric));
    }
  }
  o.note(fmt::format("{} objectives x 3 directions, max relative error {:.2e}", cases.size(), worst));
  return o;
}

// ---------------------------------------------------------------- 5
Outcome loss_identities() {
  Outcome o;
  torch::manual_seed(2);
  nn::PatchDiscriminator disc(nn::PatchDiscriminatorSpec{3, 8, 4});
  losses::FeatureExtractorConfig xc;
  xc.base_width = 8;
  losses::FeatureExtractor fx(xc);
  const auto x = torch::rand({2, 3, 32, 32}) * 2 - 1;
  const double fm = losses::fm_loss(disc, x, x).item<double>();
  const double perc = losses::perceptual_loss(fx, x, x).item<double>();
  const double style = losses::style_loss(fx, x, x).item<double>();
  const auto z = torch::zeros({2, 1, 8, 8});
  const double g = losses::adv_loss_generator(z).item<double>();
  const double d = losses::adv_loss_discriminator(z, z).item<double>();
  o.check(fm == 0.0, "fm");
  o.check(perc == 0.0, "perceptual");
  o.check(style == 0.0, "style");
  o.check(std::abs(g - std::numbers::ln2) <= 1e-6, "adv_G");
  o.check(std::abs(d - 2 * std::numbers::ln2) <= 1e-6, "adv_D");
  o.note(fmt::format("fm {} perceptual {} style {} adv_G {:.7f} adv_D {:.7f}", fm, perc, style, g, d));
  return o;
}

// ---------------------------------------------------------------- 6 / 7
struct OverfitResult {
  double mae_start = 0;
  double mae_end = 0;
  double ssim_end = 0;
  bool disabled_untouched = true;
};

OverfitResult overfit(bool edge, bool label, const std::string& tag) {
  auto config = oracle::desk_config();
  config.model.edge_enabled = edge;
  config.model.label_enabled = label;
  config.out_dir = fs::temp_directory_path() / ("higan_acceptance_" + tag);
  fs::remove_all(config.out_dir);
  const auto dataset = data::Dataset::open(config.dataset);
  training::Trainer trainer(config);

  std::vector<ParamGroup> frozen;
  if (!edge) frozen.insert(frozen.end(), {ParamGroup::EdgeEncoder, ParamGroup::EdgeDecoder, ParamGroup::EdgeDiscriminator});
  if (!label)
    frozen.insert(frozen.end(), {ParamGroup::LabelEncoder, ParamGroup::LabelDecoder, ParamGroup::LabelDiscriminator});
  std::vector<torch::Tensor> before;
  for (auto g : frozen)
    for (const auto& p : trainer.model()->parameters_of(g)) before.push_back(p.detach().clone());

  training::LoopOptions opts;
  const std::int64_t first = 50;
  const std::int64_t last = config.duration;
  opts.train_eval_at = {first, last};
  opts.on_step = [&](const training::StepReport& r) {
    if (r.iteration % 250 == 0)
      std::fprintf(stderr, "  [%s] iteration %lld combined_g %.4f\n", tag.c_str(),
                   static_cast<long long>(r.iteration), r.loss("combined_g"));
  };
  const auto result = training::train_loop(trainer, dataset, opts);

  OverfitResult out;
  for (const auto& e : result.evals) {
    if (e.split != "train") continue;
    if (e.iteration == first) out.mae_start = e.metrics.rgb_mae;
    if (e.iteration == last) {
      out.mae_end = e.metrics.rgb_mae;
      out.ssim_end = e.metrics.rgb_ssim;
    }
  }
  std::size_t i = 0;
  for (auto g : frozen)
    for (const auto& p : trainer.model()->parameters_of(g)) out.disabled_untouched &= oracle::bit_equal(p, before[i++]);
  return out;
}

Outcome overfit_full() {
  Outcome o;
  const auto r = overfit(true, true, "full");
  o.check(r.mae_end < 0.5 * r.mae_start, "MAE halving");
  o.check(r.ssim_end > 0.7, "SSIM > 0.7");
  o.note(fmt::format("hole MAE {:.2f} -> {:.2f} (ratio {:.3f}), SSIM {:.4f}", r.mae_start, r.mae_end,
                     r.mae_end / r.mae_start, r.ssim_end));
  return o;
}

Outcome ablations() {
  Outcome o;
  for (const auto& [edge, label, tag] : {std::tuple{false, true, "no_edge"}, std::tuple{true, false, "no_label"}}) {
    const auto r = overfit(edge, label, tag);
    o.check(r.disabled_untouched, fmt::format("{}: disabled parameters changed", tag));
    o.check(r.mae_end < 0.5 * r.mae_start, fmt::format("{}: MAE halving", tag));
    o.check(r.ssim_end > 0.6, fmt::format("{}: SSIM > 0.6", tag));
    o.note(fmt::format("{}: MAE {:.2f} -> {:.2f}, SSIM {:.4f}, disabled bitwise unchanged {}", tag, r.mae_start,
                       r.mae_end, r.ssim_end, r.disabled_untouched));
  }
  return o;
}

// ---------------------------------------------------------------- 8
std::vector<std::vector<std::pair<std::string, double>>> losses_of(const training::LoopResult& r) {
  std::vector<std::vector<std::pair<std::string, double>>> out;
  for (const auto& s : r.steps) out.push_back(s.losses);
  return out;
}

Outcome determinism() {
  Outcome o;
  auto config = oracle::tiny_config();
  config.duration = 10;
  const auto dataset = data::Dataset::open(config.dataset);
  training::LoopOptions opts;
  opts.keep_steps = true;
  opts.write_artifacts = false;

  training::Trainer a(config), b(config);
  const auto la = losses_of(training::train_loop(a, dataset, opts));
  const auto lb = losses_of(training::train_loop(b, dataset, opts));
  o.check(la.size() == 10 && la == lb, "first 10 loss vectors differ between runs");

  auto half = config;
  half.duration = 5;
  training::Trainer c(half);
  training::train_loop(c, dataset, opts);
  const auto path = fs::temp_directory_path() / "higan_acceptance_determinism.pt";
  c.save_checkpoint(path);
  auto loaded = training::Trainer::load_checkpoint(path);
  bool exact = loaded->iteration() == 5;
  for (const auto& p : c.model()->named_parameters())
    exact &= oracle::bit_equal(p.value(), loaded->model()->named_parameters()[p.key()]);
  for (const auto& p : c.model()->named_buffers())
    exact &= oracle::bit_equal(p.value(), loaded->model()->named_buffers()[p.key()]);
  o.check(exact, "checkpoint round trip not bit-exact");

  loaded->set_run_settings(config);
  const auto resumed = losses_of(training::train_loop(*loaded, dataset, opts));
  const bool continues = resumed.size() == 5 && std::equal(resumed.begin(), resumed.end(), la.begin() + 5);
  o.check(continues, "resumed losses diverge");
  fs::remove(path);
  o.note(fmt::format("10 steps x {} loss terms identical; round trip exact {}; resume matches {}",
                     la.empty() ? 0 : la.front().size(), exact, continues));
  return o;
}

// ---------------------------------------------------------------- 9
Outcome data_pipeline() {
  Outcome o;
  const int n = 32;
  ImageTensor step(n, n, 1), uniform(n, n, 1, 0.6f);
  for (int y = 0; y < n; ++y)
    for (int x = n / 2; x < n; ++x) step.at(0, y, x) = 1.0f;
  const auto edges = canny_edges(step);
  int column = -1;
  bool line = true;
  for (int y = 0; y < n; ++y) {
    int count = 0;
    for (int x = 0; x < n; ++x) {
      if (edges.at(0, y, x) != 0.0f) {
        ++count;
        if (column < 0) column = x;
        line &= x == column;
      }
    }
    line &= count == 1;
  }
  line &= column == n / 2 - 1 || column == n / 2;
  o.check(line, "step edge is not a contiguous 1-px line at the boundary");
  const auto flat = canny_edges(uniform);
  double uniform_sum = 0;
  for (float v : flat.data()) uniform_sum += v;
  o.check(uniform_sum == 0, "edges on a uniform image");

  const auto mc = MaskSynthConfig::for_image_size(256);
  int inside = 0;
  double lo = 1, hi = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto c = mc;
    c.seed = s;
    const double f = synth_mask(c, 256, 256).hole_fraction();
    lo = std::min(lo, f);
    hi = std::max(hi, f);
    inside += f >= mc.target_coverage.min && f <= mc.target_coverage.max;
  }
  o.check(inside == 100, "mask coverage outside the configured range");
  o.note(fmt::format("edge column {}; uniform edge pixels {}; masks in range {}/100 (coverage {:.3f}..{:.3f})", column,
                     uniform_sum, inside, lo, hi));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "metric_oracles", 10, metric_oracles},   {2, "spectral_bound", 30, spectral_bound},
      {3, "gradient_flow", 60, gradient_flow},     {4, "gradient_check", 300, gradient_check},
      {5, "loss_identities", 0, loss_identities},  {6, "overfit", 0, overfit_full},
      {7, "ablations", 0, ablations},              {8, "determinism", 0, determinism},
      {9, "data_pipeline", 0, data_pipeline},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) o.check(false, fmt::format("runtime over {} s", c.budget_seconds));
    std::printf("%s  %d %-16s %7.1f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}

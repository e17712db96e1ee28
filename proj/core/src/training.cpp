#include "higan/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "higan/error.hpp"
#include "higan/inference.hpp"

namespace higan::training {

namespace fs = std::filesystem;
using models::ParamGroup;

void OptimConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument(fmt::format("learning rate must be positive, got {}", lr));
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  }
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
}

void TrainConfig::validate() const {
  dataset.validate();
  model.validate();
  weights.validate();
  optim.validate();
  if (extractor.base_width <= 0) throw InvalidArgument("extractor.base_width must be positive");
  if (duration < 0) throw InvalidArgument("duration must be non-negative");
  if (checkpoint_every < 0 || eval_every < 0 || log_every < 1) {
    throw InvalidArgument("checkpoint_every and eval_every must be >= 0 and log_every >= 1");
  }
}

std::int64_t TrainConfig::total_iterations(std::size_t train_size) const {
  if (schedule == Schedule::Iterations) return duration;
  const auto per_epoch = static_cast<std::int64_t>((train_size + optim.batch_size - 1) / optim.batch_size);
  return duration * std::max<std::int64_t>(per_epoch, 1);
}

// ---------------------------------------------------------------- config text

namespace {

struct Binding {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw InvalidArgument(fmt::format("config key '{}': cannot parse '{}'", key, text));
  }
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw InvalidArgument(fmt::format("config key '{}': cannot parse '{}' as a number", key, text));
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw InvalidArgument(fmt::format("config key '{}': expected true/false, got '{}'", key, text));
}

std::string show(bool b) { return b ? "true" : "false"; }
std::string show(double d) { return fmt::format("{}", d); }
template <typename T>
std::string show(T v) requires std::is_integral_v<T> { return std::to_string(v); }

#define HIGAN_INT(KEY, EXPR)                                                                         \
  Binding {                                                                                          \
    KEY, [](const TrainConfig& c) { return show(c.EXPR); },                                          \
        [](TrainConfig& c, const std::string& v) { c.EXPR = parse_number<decltype(c.EXPR)>(KEY, v); } \
  }
#define HIGAN_REAL(KEY, EXPR)                                                                                 \
  Binding {                                                                                                   \
    KEY, [](const TrainConfig& c) { return show(c.EXPR); }, [](TrainConfig& c, const std::string& v) { \
      c.EXPR = parse_real(KEY, v);                                                                            \
    }                                                                                                         \
  }
#define HIGAN_BOOL(KEY, EXPR)                                                                                 \
  Binding {                                                                                                   \
    KEY, [](const TrainConfig& c) { return show(c.EXPR); }, [](TrainConfig& c, const std::string& v) { \
      c.EXPR = parse_bool(KEY, v);                                                                            \
    }                                                                                                         \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = [] {
    std::vector<Binding> b = {
        {"dataset.root", [](const TrainConfig& c) { return c.dataset.root.string(); },
         [](TrainConfig& c, const std::string& v) { c.dataset.root = v; }},
        HIGAN_BOOL("dataset.synthetic", dataset.synthetic),
        HIGAN_INT("dataset.synthetic_count", dataset.synthetic_count),
        HIGAN_INT("dataset.image_size", dataset.image_size),
        HIGAN_INT("dataset.num_classes", dataset.num_classes),
        HIGAN_REAL("dataset.canny_low", dataset.canny.low),
        HIGAN_REAL("dataset.canny_high", dataset.canny.high),
        {"dataset.mask_dir",
         [](const TrainConfig& c) { return c.dataset.mask_dir ? c.dataset.mask_dir->string() : std::string(); },
         [](TrainConfig& c, const std::string& v) {
           if (v.empty()) {
             c.dataset.mask_dir.reset();
           } else {
             c.dataset.mask_dir = v;
           }
         }},
        HIGAN_REAL("dataset.split_train", dataset.splits.train),
        HIGAN_REAL("dataset.split_val", dataset.splits.val),
        HIGAN_REAL("dataset.split_test", dataset.splits.test),
        HIGAN_INT("dataset.seed", dataset.seed),
        HIGAN_INT("mask.strokes_min", dataset.mask_synth.stroke_count.min),
        HIGAN_INT("mask.strokes_max", dataset.mask_synth.stroke_count.max),
        HIGAN_INT("mask.vertices_min", dataset.mask_synth.vertices_per_stroke.min),
        HIGAN_INT("mask.vertices_max", dataset.mask_synth.vertices_per_stroke.max),
        HIGAN_INT("mask.width_min", dataset.mask_synth.line_width.min),
        HIGAN_INT("mask.width_max", dataset.mask_synth.line_width.max),
        HIGAN_REAL("mask.coverage_min", dataset.mask_synth.target_coverage.min),
        HIGAN_REAL("mask.coverage_max", dataset.mask_synth.target_coverage.max),
        HIGAN_INT("mask.max_attempts", dataset.mask_synth.max_attempts),
        HIGAN_INT("model.base_width", model.base_width),
        HIGAN_INT("model.residual_blocks", model.residual_blocks),
        HIGAN_INT("model.disc_base_width", model.disc_base_width),
        HIGAN_INT("model.disc_layers", model.disc_layers),
        HIGAN_BOOL("model.edge_enabled", model.edge_enabled),
        HIGAN_BOOL("model.label_enabled", model.label_enabled),
    };
    for (const auto& [name, member] : losses::LossWeights::fields()) {
      b.push_back({fmt::format("weights.{}", name),
                   [member](const TrainConfig& c) { return show(c.weights.*member); },
                   [member, key = fmt::format("weights.{}", name)](TrainConfig& c, const std::string& v) {
                     c.weights.*member = parse_real(key, v);
                   }});
    }
    const std::vector<Binding> rest = {
        HIGAN_INT("extractor.base_width", extractor.base_width),
        HIGAN_INT("extractor.seed", extractor.seed),
        {"extractor.weights_path",
         [](const TrainConfig& c) { return c.extractor.weights_path ? c.extractor.weights_path->string() : ""; },
         [](TrainConfig& c, const std::string& v) {
           if (v.empty()) {
             c.extractor.weights_path.reset();
           } else {
             c.extractor.weights_path = v;
           }
         }},
        HIGAN_REAL("optim.lr", optim.lr),
        HIGAN_REAL("optim.beta1", optim.beta1),
        HIGAN_REAL("optim.beta2", optim.beta2),
        HIGAN_INT("optim.batch_size", optim.batch_size),
        {"train.schedule",
         [](const TrainConfig& c) { return std::string(c.schedule == Schedule::Iterations ? "iterations" : "epochs"); },
         [](TrainConfig& c, const std::string& v) {
           if (v == "iterations") {
             c.schedule = Schedule::Iterations;
           } else if (v == "epochs") {
             c.schedule = Schedule::Epochs;
           } else {
             throw InvalidArgument(fmt::format("train.schedule must be iterations or epochs, got '{}'", v));
           }
         }},
        HIGAN_INT("train.duration", duration),
        HIGAN_INT("train.seed", seed),
        {"train.out_dir", [](const TrainConfig& c) { return c.out_dir.string(); },
         [](TrainConfig& c, const std::string& v) { c.out_dir = v; }},
        HIGAN_INT("train.checkpoint_every", checkpoint_every),
        HIGAN_INT("train.eval_every", eval_every),
        HIGAN_INT("train.log_every", log_every),
        HIGAN_INT("train.eval_samples", eval_samples),
        {"train.eval_region", [](const TrainConfig& c) { return std::string(metrics::to_string(c.eval_region)); },
         [](TrainConfig& c, const std::string& v) { c.eval_region = metrics::parse_region(v); }},
    };
    b.insert(b.end(), rest.begin(), rest.end());
    return b;
  }();
  return table;
}

#undef HIGAN_INT
#undef HIGAN_REAL
#undef HIGAN_BOOL

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string to_text(const TrainConfig& config) {
  std::string out;
  for (const auto& b : bindings()) out += fmt::format("{} = {}\n", b.key, b.get(config));
  return out;
}

TrainConfig from_text(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument(fmt::format("config line {}: expected key = value", line_no));
    const auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const auto& table = bindings();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Binding& b) { return b.key == key; });
    if (it == table.end()) throw InvalidArgument(fmt::format("config line {}: unknown key '{}'", line_no, key));
    it->set(base, value);
  }
  return base;
}

TrainConfig read_config(const fs::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_text(buffer.str(), std::move(base));
}

void write_config(const fs::path& path, const TrainConfig& config) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << to_text(config);
  if (!out) throw Error(fmt::format("cannot write config '{}'", path.string()));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& b : bindings()) keys.push_back(b.key);
  return keys;
}

// ---------------------------------------------------------------- optimizers

const char* to_string(OptimizerId id) {
  switch (id) {
    case OptimizerId::EdgeD: return "edge_d";
    case OptimizerId::EdgeG: return "edge_g";
    case OptimizerId::LabelD: return "label_d";
    case OptimizerId::LabelG: return "label_g";
    case OptimizerId::CombinedD: return "combined_d";
    case OptimizerId::CombinedG: return "combined_g";
  }
  return "?";
}

std::vector<ParamGroup> optimizer_groups(OptimizerId id, const models::ModelConfig& model) {
  switch (id) {
    case OptimizerId::EdgeD:
      return model.edge_enabled ? std::vector{ParamGroup::EdgeDiscriminator} : std::vector<ParamGroup>{};
    case OptimizerId::EdgeG:
      return model.edge_enabled ? std::vector{ParamGroup::EdgeEncoder, ParamGroup::EdgeDecoder}
                                : std::vector<ParamGroup>{};
    case OptimizerId::LabelD:
      return model.label_enabled ? std::vector{ParamGroup::LabelDiscriminator} : std::vector<ParamGroup>{};
    case OptimizerId::LabelG:
      return model.label_enabled ? std::vector{ParamGroup::LabelEncoder, ParamGroup::LabelDecoder}
                                 : std::vector<ParamGroup>{};
    case OptimizerId::CombinedD: return {ParamGroup::RgbDiscriminator, ParamGroup::DepthDiscriminator};
    case OptimizerId::CombinedG: {
      std::vector<ParamGroup> groups{ParamGroup::CombinedGenerator};
      if (model.edge_enabled) groups.push_back(ParamGroup::EdgeEncoder);
      if (model.label_enabled) groups.push_back(ParamGroup::LabelEncoder);
      return groups;
    }
  }
  return {};
}

double StepReport::loss(const std::string& name) const {
  for (const auto& [k, v] : losses)
    if (k == name) return v;
  throw InvalidArgument(fmt::format("step report has no loss '{}'", name));
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(TrainConfig config) : config_(std::move(config)) {
  config_.validate();
  torch::manual_seed(config_.seed);
  model_ = models::HiGanModel(config_.model);
  extractor_ = losses::FeatureExtractor(config_.extractor);
  model_->train();
  for (const auto id : kAllOptimizers) {
    Slot s{id, optimizer_groups(id, config_.model), nullptr};
    std::vector<torch::Tensor> params;
    for (const auto group : s.groups) {
      const auto p = model_->parameters_of(group);
      params.insert(params.end(), p.begin(), p.end());
    }
    if (!params.empty()) {
      s.adam = std::make_unique<torch::optim::Adam>(
          params, torch::optim::AdamOptions(config_.optim.lr).betas({config_.optim.beta1, config_.optim.beta2}));
    }
    slots_.push_back(std::move(s));
  }
}

void Trainer::set_run_settings(const TrainConfig& run) {
  config_.schedule = run.schedule;
  config_.duration = run.duration;
  config_.out_dir = run.out_dir;
  config_.checkpoint_every = run.checkpoint_every;
  config_.eval_every = run.eval_every;
  config_.log_every = run.log_every;
  config_.eval_samples = run.eval_samples;
  config_.eval_region = run.eval_region;
  config_.validate();
}

Trainer::Slot& Trainer::slot(OptimizerId id) {
  for (auto& s : slots_)
    if (s.id == id) return s;
  throw InvalidArgument("unknown optimizer");
}

torch::optim::Adam& Trainer::optimizer(OptimizerId id) {
  auto& s = slot(id);
  if (!s.adam) throw InvalidArgument(fmt::format("optimizer {} is disabled", to_string(id)));
  return *s.adam;
}

namespace {

double group_grad_norm(models::HiGanModel& model, ParamGroup group) {
  double sq = 0.0;
  for (const auto& p : model->parameters_of(group)) {
    if (p.grad().defined()) sq += p.grad().to(torch::kFloat64).pow(2).sum().item<double>();
  }
  return std::sqrt(sq);
}

void guard_finite(const StepReport& report, std::int64_t iteration) {
  for (const auto& [name, value] : report.losses) {
    if (std::isfinite(value)) continue;
    std::string dump = fmt::format("non-finite loss '{}' at iteration {}; components:", name, iteration);
    for (const auto& [k, v] : report.losses) dump += fmt::format("\n  {} = {}", k, v);
    throw NonFiniteLoss(dump);
  }
}

}  // namespace

void Trainer::apply(Slot& s, const losses::Objective& objective, StepReport& report) {
  report.losses.insert(report.losses.end(), objective.terms.begin(), objective.terms.end());
  guard_finite(report, iteration_ + 1);
  if (!s.adam) return;
  model_->zero_grad();
  objective.total.backward();
  if (s.id == OptimizerId::CombinedG) {
    for (const auto group : models::kAllParamGroups) report.combined_grad_norms[group] = group_grad_norm(model_, group);
  }
  for (const auto group : s.groups) {
    if (group_grad_norm(model_, group) > 0.0) ++report.updates[group];
  }
  s.adam->step();
}

StepReport Trainer::train_step(const models::TensorBatch& batch) {
  model_->train();
  const auto& w = config_.weights;
  StepReport report;
  for (const auto group : models::kAllParamGroups) report.updates[group] = 0;

  if (config_.model.edge_enabled) {
    const auto edge = model_->edge_forward(batch.masked_edge, batch.mask);
    apply(slot(OptimizerId::EdgeD),
          losses::discriminator_objective(model_->edge_discriminator, batch.edge, edge.reconstruction, w.adv_d_edge,
                                          "edge"),
          report);
    apply(slot(OptimizerId::EdgeG),
          losses::regularizer_generator_objective(model_->edge_discriminator, batch.edge, edge.reconstruction,
                                                  w.adv_g_edge, w.fm_edge, "edge"),
          report);
  }
  if (config_.model.label_enabled) {
    const auto label = model_->label_forward(batch.masked_label, batch.mask);
    apply(slot(OptimizerId::LabelD),
          losses::discriminator_objective(model_->label_discriminator, batch.label, label.reconstruction,
                                          w.adv_d_label, "label"),
          report);
    apply(slot(OptimizerId::LabelG),
          losses::regularizer_generator_objective(model_->label_discriminator, batch.label, label.reconstruction,
                                                  w.adv_g_label, w.fm_label, "label"),
          report);
  }
  const auto combined = model_->combined_forward(batch);
  apply(slot(OptimizerId::CombinedD), losses::combined_discriminator_objective(model_, batch, combined, w), report);
  apply(slot(OptimizerId::CombinedG),
        losses::combined_generator_objective(model_, extractor_, batch, combined, w), report);
  model_->zero_grad();

  report.iteration = ++iteration_;
  for (const auto& [name, value] : report.losses) {
    const auto it = running_.find(name);
    running_[name] = it == running_.end() ? value : 0.98 * it->second + 0.02 * value;
  }
  return report;
}

// ---------------------------------------------------------------- loop

std::vector<std::size_t> select_batch(std::uint64_t seed, std::int64_t iteration, std::span<const std::size_t> pool,
                                      int batch_size) {
  if (pool.empty()) throw DatasetError("cannot draw a batch from an empty split");
  if (iteration < 0 || batch_size < 1) throw InvalidArgument("select_batch: bad iteration or batch size");
  const auto n = pool.size();
  std::vector<std::size_t> out;
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> perm;
  for (int k = 0; k < batch_size; ++k) {
    const auto position = static_cast<std::uint64_t>(iteration) * batch_size + k;
    const auto epoch = position / n;
    if (epoch != cached_epoch) {
      perm.assign(pool.begin(), pool.end());
      std::mt19937_64 rng(data::derive_seed(seed, epoch, 0xba7c));
      for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng() % (i + 1)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[position % n]);
  }
  return out;
}

std::uint64_t batch_mask_seed(std::uint64_t seed, std::int64_t iteration) {
  return data::derive_seed(seed, static_cast<std::uint64_t>(iteration), 0x6d61736b);
}

metrics::MetricReport evaluate_indices(Trainer& trainer, const data::Dataset& dataset,
                                       std::span<const std::size_t> indices, std::uint64_t mask_seed,
                                       metrics::Region region) {
  const auto masks = data::make_mask_source(dataset.config());
  metrics::MetricReport report;
  report.region = region;
  for (const auto index : indices) {
    const std::size_t one[] = {index};
    const auto batch = data::make_batch(one, dataset, masks, mask_seed);
    const auto prediction = inference::predict(trainer.model(), batch).front();
    report.samples.push_back(
        metrics::evaluate_sample(prediction.rgbd(), batch.samples.front(), region, dataset.stems()[index]));
  }
  return report;
}

namespace {

std::string join_row(std::int64_t iteration, const std::vector<double>& values) {
  std::string row = std::to_string(iteration);
  for (const double v : values) row += std::isnan(v) ? std::string(",") : fmt::format(",{:.6g}", v);
  return row;
}

}  // namespace

LoopResult train_loop(Trainer& trainer, const data::Dataset& dataset, const LoopOptions& options) {
  const auto& config = trainer.config();
  const auto splits = dataset.split();
  if (dataset.size() == 0 || splits.train.empty()) throw DatasetError("training split is empty");
  const auto total = config.total_iterations(splits.train.size());
  const auto masks = data::make_mask_source(dataset.config());
  const auto eval_seed = data::derive_seed(config.seed, 0xe7a1);

  std::vector<std::size_t> val = splits.val.empty() ? splits.train : splits.val;
  if (config.eval_samples > 0 && val.size() > config.eval_samples) val.resize(config.eval_samples);

  const fs::path csv_path = config.out_dir / "metrics.csv";
  std::ofstream csv;
  bool header_pending = false;
  if (options.write_artifacts) {
    fs::create_directories(config.out_dir / "checkpoints");
    write_config(config.out_dir / "config.txt", config);
    data::write_split_manifest(config.out_dir / "splits.txt", dataset, splits);
    header_pending = !fs::exists(csv_path) || fs::file_size(csv_path) == 0;
    csv.open(csv_path, std::ios::app);
    if (!csv) throw Error(fmt::format("cannot open '{}'", csv_path.string()));
  }

  const auto save = [&](const fs::path& path) {
    trainer.save_checkpoint(path);
    return path;
  };

  LoopResult result;
  std::vector<std::string> loss_columns;
  while (trainer.iteration() < total) {
    const auto it = trainer.iteration();
    const auto indices = select_batch(config.seed, it, splits.train, config.optim.batch_size);
    const auto batch = data::make_batch(indices, dataset, masks, batch_mask_seed(config.seed, it));
    auto report = trainer.train_step(models::to_tensors(batch));
    const auto n = report.iteration;
    if (options.on_step) options.on_step(report);

    std::optional<metrics::SampleMetrics> val_metrics;
    if ((config.eval_every > 0 && n % config.eval_every == 0) || n == total) {
      val_metrics = evaluate_indices(trainer, dataset, val, eval_seed, config.eval_region).aggregate();
      result.evals.push_back({n, "val", *val_metrics});
    }
    if (std::find(options.train_eval_at.begin(), options.train_eval_at.end(), n) != options.train_eval_at.end()) {
      result.evals.push_back(
          {n, "train", evaluate_indices(trainer, dataset, splits.train, eval_seed, config.eval_region).aggregate()});
    }

    if (options.write_artifacts && (n % config.log_every == 0 || val_metrics || n == total)) {
      if (loss_columns.empty()) {
        for (const auto& [name, v] : report.losses) loss_columns.push_back(name);
      }
      if (header_pending) {
        csv << "iteration";
        for (const auto& c : loss_columns) csv << ',' << c;
        for (const char* c : metrics::kMetricColumns) csv << ",val_" << c;
        csv << '\n';
        header_pending = false;
      }
      std::vector<double> values;
      for (const auto& c : loss_columns) values.push_back(report.loss(c));
      const double nan = std::nan("");
      const auto& m = val_metrics;
      for (const double v : {m ? m->rgb_ssim : nan, m ? m->rgb_psnr : nan, m ? m->depth_psnr : nan,
                             m ? m->rgb_mae : nan, m ? m->rgb_rmse : nan, m ? m->depth_mae : nan,
                             m ? m->depth_rmse : nan}) {
        values.push_back(v);
      }
      csv << join_row(n, values) << '\n' << std::flush;
    }

    if (options.write_artifacts && config.checkpoint_every > 0 && n % config.checkpoint_every == 0) {
      save(config.out_dir / "checkpoints" / fmt::format("iter_{:08d}.pt", n));
    }
    if (options.keep_steps || n == total) {
      result.steps.push_back(std::move(report));
    }
  }
  result.final_iteration = trainer.iteration();
  if (options.write_artifacts) result.final_checkpoint = save(config.out_dir / "checkpoints" / "latest.pt");
  return result;
}

}  // namespace higan::training

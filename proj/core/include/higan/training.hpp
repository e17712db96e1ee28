#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "higan/dataset.hpp"
#include "higan/losses.hpp"
#include "higan/metrics.hpp"
#include "higan/models.hpp"

namespace higan::training {

struct OptimConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 2;

  void validate() const;

  friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

/// How TrainConfig::duration is counted.
enum class Schedule { Iterations, Epochs };

struct TrainConfig {
  data::DatasetConfig dataset;
  models::ModelConfig model;
  losses::LossWeights weights;
  losses::FeatureExtractorConfig extractor;
  OptimConfig optim;

  Schedule schedule = Schedule::Iterations;
  std::int64_t duration = 2000;

  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";
  std::int64_t checkpoint_every = 1000;
  std::int64_t eval_every = 500;
  std::int64_t log_every = 10;
  /// Cap on validation samples evaluated per eval round (0 = all).
  std::size_t eval_samples = 8;
  metrics::Region eval_region = metrics::Region::Holes;

  void validate() const;
  /// Total iterations for a training split of `train_size` samples.
  std::int64_t total_iterations(std::size_t train_size) const;
};

/// Flat "key = value" text, one setting per line, '#' comments.
std::string to_text(const TrainConfig& config);
/// Starts from `base` and applies every key found. Unknown keys and bad
/// values throw InvalidArgument.
TrainConfig from_text(const std::string& text, TrainConfig base = {});
TrainConfig read_config(const std::filesystem::path& path, TrainConfig base = {});
void write_config(const std::filesystem::path& path, const TrainConfig& config);
/// Every recognised key, in to_text() order.
std::vector<std::string> config_keys();

/// The six optimizers, one per (generator | discriminator) x (edge | label | combined).
enum class OptimizerId { EdgeD, EdgeG, LabelD, LabelG, CombinedD, CombinedG };

inline constexpr OptimizerId kAllOptimizers[] = {OptimizerId::EdgeD,  OptimizerId::EdgeG,     OptimizerId::LabelD,
                                                 OptimizerId::LabelG, OptimizerId::CombinedD, OptimizerId::CombinedG};

const char* to_string(OptimizerId id);
/// Parameter groups driven by an optimizer. The combined generator also owns
/// the edge and label encoders (only those whose regularizer is enabled).
std::vector<models::ParamGroup> optimizer_groups(OptimizerId id, const models::ModelConfig& model);

/// Everything one train_step reports.
struct StepReport {
  std::int64_t iteration = 0;
  /// Raw and weighted loss components in the order they were computed.
  std::vector<std::pair<std::string, double>> losses;
  /// Optimizer steps that applied a nonzero gradient to each group during this step.
  std::map<models::ParamGroup, int> updates;
  /// Gradient L2 norm of every group right after the combined generator backward pass.
  std::map<models::ParamGroup, double> combined_grad_norms;

  double loss(const std::string& name) const;
};

/// Model, frozen feature extractor, six Adam optimizers and the counters that
/// make up the resumable training state.
class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  /// One hierarchical iteration: D_e, G_e, D_l, G_l, D_rgb+D_depth, combined G.
  /// Throws NonFiniteLoss (listing every component so far) on NaN/inf.
  StepReport train_step(const models::TensorBatch& batch);

  const TrainConfig& config() const noexcept { return config_; }
  /// Adopts the schedule, output and cadence fields of `run` (never the
  /// dataset, model, weights or optimizer settings). Used when resuming.
  void set_run_settings(const TrainConfig& run);
  models::HiGanModel& model() noexcept { return model_; }
  losses::FeatureExtractor& extractor() noexcept { return extractor_; }
  torch::optim::Adam& optimizer(OptimizerId id);

  std::int64_t iteration() const noexcept { return iteration_; }
  void set_iteration(std::int64_t iteration) noexcept { iteration_ = iteration; }
  /// Exponential moving averages of every loss component.
  const std::map<std::string, double>& running_losses() const noexcept { return running_; }
  void set_running_losses(std::map<std::string, double> running) { running_ = std::move(running); }

  /// Writes schema version, config, iteration, running losses, every
  /// parameter and buffer and all optimizer moments. Atomic via rename.
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Builds a trainer from a checkpoint. Nothing is returned on failure.
  /// Throws CheckpointError (Io, Corrupt or Version).
  static std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& path);

 private:
  struct Slot {
    OptimizerId id;
    std::vector<models::ParamGroup> groups;
    std::unique_ptr<torch::optim::Adam> adam;
  };

  void apply(Slot& slot, const losses::Objective& objective, StepReport& report);
  Slot& slot(OptimizerId id);

  TrainConfig config_;
  models::HiGanModel model_{nullptr};
  losses::FeatureExtractor extractor_{nullptr};
  std::vector<Slot> slots_;
  std::int64_t iteration_ = 0;
  std::map<std::string, double> running_;
};

inline constexpr std::int64_t kCheckpointSchemaVersion = 1;

/// Reads only the schema version and config of a checkpoint.
TrainConfig checkpoint_config(const std::filesystem::path& path);

/// Indices for iteration `iteration`: a seeded permutation of `pool` per
/// epoch, walked in batch-sized strides. Pure function of its arguments.
std::vector<std::size_t> select_batch(std::uint64_t seed, std::int64_t iteration, std::span<const std::size_t> pool,
                                      int batch_size);

/// Mask seed for the batch drawn at `iteration`.
std::uint64_t batch_mask_seed(std::uint64_t seed, std::int64_t iteration);

struct EvalPoint {
  std::int64_t iteration = 0;
  /// "val" or "train".
  std::string split;
  metrics::SampleMetrics metrics;
};

struct LoopResult {
  std::int64_t final_iteration = 0;
  std::vector<StepReport> steps;
  std::vector<EvalPoint> evals;
  std::filesystem::path final_checkpoint;
};

struct LoopOptions {
  /// Iterations at which to evaluate on the training split in addition to the
  /// periodic validation rounds (e.g. {50, 2000} for overfit runs).
  std::vector<std::int64_t> train_eval_at;
  /// Keep every StepReport in the result (otherwise only the last).
  bool keep_steps = false;
  /// Called after every step.
  std::function<void(const StepReport&)> on_step;
  /// Write metric CSV, checkpoints and the resolved config under out_dir.
  bool write_artifacts = true;
};

/// Runs train_step until config.total_iterations(), continuing from the
/// trainer's iteration. Evaluates every eval_every iterations on the
/// validation split, checkpoints every checkpoint_every iterations and at the
/// end, and appends one CSV row per logged iteration to out_dir/metrics.csv.
LoopResult train_loop(Trainer& trainer, const data::Dataset& dataset, const LoopOptions& options = {});

/// Composited-output metrics of the current model on `indices` with masks drawn from `mask_seed`.
metrics::MetricReport evaluate_indices(Trainer& trainer, const data::Dataset& dataset,
                                       std::span<const std::size_t> indices, std::uint64_t mask_seed,
                                       metrics::Region region);

}  // namespace higan::training

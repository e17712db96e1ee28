#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "higan/imaging.hpp"
#include "higan/metrics.hpp"
#include "higan/training.hpp"

namespace higan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Parses argv, dispatches to a subcommand and maps failures to exit codes
/// (2 for configuration errors, 1 for everything else).
int run(int argc, char** argv);
int run(std::vector<std::string> args);

/// Trains from `config`, or continues `resume` with the run settings of `config`.
training::LoopResult train(const training::TrainConfig& config, const std::optional<std::filesystem::path>& resume,
                           bool quiet = false);

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  /// Dataset to evaluate; defaults to the one recorded in the checkpoint.
  std::optional<data::DatasetConfig> dataset;
  std::string split = "test";
  metrics::Region region = metrics::Region::Full;
  std::uint64_t mask_seed = 0;
  std::size_t figures = 4;
  std::filesystem::path out;
};

/// Writes metrics.csv, metrics.txt, figures/<stem>.png and config.txt under out.
metrics::MetricReport evaluate(const EvaluateOptions& options);

struct InpaintOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path rgb;
  std::filesystem::path depth;
  std::filesystem::path mask;
  std::optional<std::filesystem::path> edge;
  std::optional<std::filesystem::path> label;
  std::filesystem::path out;
};

/// Writes rgb.png, depth.png, edge.png, label.png (raw outputs) and
/// rgb_composite.png, depth_composite.png under out.
void inpaint(const InpaintOptions& options);

/// mask_00000.png ... with mask i drawn from derive_seed(seed, i).
void make_masks(const MaskSynthConfig& config, int size, std::size_t count, std::uint64_t seed,
                const std::filesystem::path& out);
/// Canny edge maps of every PNG in `in`, same file names.
void make_edges(const std::filesystem::path& in, const std::filesystem::path& out, CannyThresholds thresholds);
/// rgb/, depth/ and label/ triples of the synthetic generator.
void synth_dataset(std::uint64_t seed, std::size_t count, int size, int num_classes, const std::filesystem::path& out);

}  // namespace higan::cli

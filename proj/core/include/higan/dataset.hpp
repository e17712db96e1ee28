#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "higan/image.hpp"
#include "higan/imaging.hpp"

namespace higan::data {

/// One training/evaluation sample: ground truth planes, the hole mask and the
/// masked inputs derived from them.
struct SampleBundle {
  ImageTensor rgb;    // 3 channels
  ImageTensor depth;  // 1 channel
  ImageTensor edge;   // 1 channel, binary
  ImageTensor label;  // 1 channel, encode_label() output
  Mask mask;
  ImageTensor masked_rgb;
  ImageTensor masked_depth;
  ImageTensor masked_edge;
  ImageTensor masked_label;

  /// Derives the masked planes with apply_mask.
  static SampleBundle assemble(ImageTensor rgb, ImageTensor depth, ImageTensor edge, ImageTensor label, Mask mask);

  int height() const noexcept { return rgb.height(); }
  int width() const noexcept { return rgb.width(); }

  /// Throws InvalidArgument if any bundle invariant is broken.
  void validate() const;
};

/// Raw ground truth for one scene before resizing and masking.
struct SceneTriple {
  ImageTensor rgb;
  ImageTensor depth;
  LabelMap label;
};

/// Flat-shaded random scene: 3-8 rectangles and ellipses over a background.
/// Shape k (painter's order, 1-based) gets label k and a depth that grows
/// with k, so later (nearer) shapes are brighter in the depth map. The top
/// shape's depth is exactly 1. Requires num_classes > 8.
SceneTriple synth_scene(std::uint64_t seed, int size, int num_classes);

struct SplitFractions {
  double train = 0.81;
  double val = 0.09;
  double test = 0.10;

  void validate() const;
};

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct DatasetConfig {
  /// Directory with rgb/, depth/, label/ (and optionally masks/). Ignored when synthetic.
  std::filesystem::path root;
  bool synthetic = false;
  std::size_t synthetic_count = 64;
  int image_size = 256;
  int num_classes = 38;
  CannyThresholds canny;
  /// Pre-made masks; when empty, masks come from mask_synth.
  std::optional<std::filesystem::path> mask_dir;
  MaskSynthConfig mask_synth = MaskSynthConfig::for_image_size(256);
  SplitFractions splits;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Produces per-sample masks. Either synthesizes them or draws from a directory of PNGs.
class MaskSource {
 public:
  explicit MaskSource(MaskSynthConfig config);
  /// Loads every *.png under `dir` (sorted). Throws DatasetError when none exist.
  static MaskSource from_directory(const std::filesystem::path& dir);

  /// Deterministic in (seed, height, width).
  Mask mask_for(std::uint64_t seed, int height, int width) const;

 private:
  MaskSource() = default;

  MaskSynthConfig synth_;
  std::vector<Mask> masks_;
};

/// mask_dir if set, else <root>/masks/*.png when present, else synthesized strokes.
MaskSource make_mask_source(const DatasetConfig& config);

/// Ordered, immutable sample index over a directory layout or the synthetic generator.
class Dataset {
 public:
  /// Expects <root>/{rgb,depth,label}/<stem>.png. Stems missing a counterpart
  /// are skipped and counted. Throws DatasetError if nothing remains.
  static Dataset load_directory(const DatasetConfig& config);
  static Dataset synthetic(const DatasetConfig& config);
  /// Dispatches on config.synthetic.
  static Dataset open(const DatasetConfig& config);

  std::size_t size() const noexcept { return stems_.size(); }
  const std::vector<std::string>& stems() const noexcept { return stems_; }
  std::size_t skipped() const noexcept { return skipped_; }
  const DatasetConfig& config() const noexcept { return config_; }

  /// Ground truth at the configured image size.
  SceneTriple scene(std::size_t index) const;

  /// Full bundle: resized planes, Canny edges from the RGB luma, encoded labels, masked inputs.
  SampleBundle sample(std::size_t index, const Mask& mask) const;

  /// Seeded shuffle cut by config().splits. Disjoint; union is the whole index.
  Splits split() const;

 private:
  DatasetConfig config_;
  std::vector<std::string> stems_;
  std::size_t skipped_ = 0;
};

/// Builds a complete bundle from raw ground truth, already at the target size.
SampleBundle make_sample(const SceneTriple& scene, const Mask& mask, CannyThresholds canny);

/// Mixes a base seed with up to two indices. Used for per-slot mask seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

/// N x C x H x W floats in [0, 1].
struct StackedPlanes {
  std::int64_t batch = 0;
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> values;
};

enum class Plane { Rgb, Depth, Edge, Label, Mask, MaskedRgb, MaskedDepth, MaskedEdge, MaskedLabel };

struct Batch {
  std::vector<std::size_t> indices;
  std::vector<SampleBundle> samples;

  std::size_t size() const noexcept { return samples.size(); }
  StackedPlanes stacked(Plane plane) const;
};

/// Slot k gets the mask seeded by derive_seed(mask_seed, k, indices[k]).
/// Throws InvalidArgument on an out-of-range index.
Batch make_batch(std::span<const std::size_t> indices, const Dataset& dataset, const MaskSource& masks,
                 std::uint64_t mask_seed);

void write_split_manifest(const std::filesystem::path& path, const Dataset& dataset, const Splits& splits);
/// Maps stems back to indices of `dataset`; unknown stems throw DatasetError.
Splits read_split_manifest(const std::filesystem::path& path, const Dataset& dataset);

}  // namespace higan::data

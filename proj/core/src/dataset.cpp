#include "higan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "higan/error.hpp"
#include "higan/image_io.hpp"

namespace higan::data {
namespace {

namespace fs = std::filesystem;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::set<std::string> png_stems(const fs::path& dir) {
  std::set<std::string> stems;
  if (!fs::is_directory(dir)) return stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") stems.insert(entry.path().stem().string());
  }
  return stems;
}

void check_same_size(const SampleBundle& b, const ImageTensor& plane, const char* name) {
  if (plane.height() != b.height() || plane.width() != b.width()) {
    throw InvalidArgument(fmt::format("sample bundle: {} plane is {}x{}, rgb is {}x{}", name, plane.height(),
                                      plane.width(), b.height(), b.width()));
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ b);
}

SampleBundle SampleBundle::assemble(ImageTensor rgb, ImageTensor depth, ImageTensor edge, ImageTensor label,
                                    Mask mask) {
  SampleBundle b;
  b.masked_rgb = apply_mask(rgb, mask);
  b.masked_depth = apply_mask(depth, mask);
  b.masked_edge = apply_mask(edge, mask);
  b.masked_label = apply_mask(label, mask);
  b.rgb = std::move(rgb);
  b.depth = std::move(depth);
  b.edge = std::move(edge);
  b.label = std::move(label);
  b.mask = std::move(mask);
  b.validate();
  return b;
}

void SampleBundle::validate() const {
  rgb.validate();
  if (rgb.channels() != 3) throw InvalidArgument("sample bundle: rgb must have 3 channels");
  for (const auto* plane : {&depth, &edge, &label}) {
    plane->validate();
    if (plane->channels() != 1) throw InvalidArgument("sample bundle: depth/edge/label must have 1 channel");
  }
  check_same_size(*this, depth, "depth");
  check_same_size(*this, edge, "edge");
  check_same_size(*this, label, "label");
  if (mask.height() != height() || mask.width() != width()) throw InvalidArgument("sample bundle: mask size mismatch");
  if (std::any_of(edge.data().begin(), edge.data().end(), [](float v) { return v != 0.0f && v != 1.0f; })) {
    throw InvalidArgument("sample bundle: edge plane is not binary");
  }
  if (masked_rgb != apply_mask(rgb, mask) || masked_depth != apply_mask(depth, mask) ||
      masked_edge != apply_mask(edge, mask) || masked_label != apply_mask(label, mask)) {
    throw InvalidArgument("sample bundle: masked planes do not match apply_mask of the ground truth");
  }
}

SceneTriple synth_scene(std::uint64_t seed, int size, int num_classes) {
  constexpr int kMaxShapes = 8;
  if (size < 8) throw InvalidArgument("synth_scene: size must be at least 8");
  if (num_classes <= kMaxShapes) {
    throw InvalidArgument(fmt::format("synth_scene: num_classes must exceed {}", kMaxShapes));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int shapes = std::uniform_int_distribution<int>(3, kMaxShapes)(rng);

  SceneTriple scene{ImageTensor(size, size, 3), ImageTensor(size, size, 1), LabelMap(size, size, num_classes)};
  const auto fill_background = [&] {
    for (int c = 0; c < 3; ++c) {
      const auto v = static_cast<float>(unit(rng));
      std::fill(scene.rgb.plane(c).begin(), scene.rgb.plane(c).end(), v);
    }
  };
  fill_background();

  // Strictly increasing depths; the last (nearest) shape sits at 1.
  constexpr double kBackgroundDepth = 0.1;
  std::vector<double> depths(shapes);
  for (double& d : depths) d = 0.2 + 0.75 * unit(rng);
  std::sort(depths.begin(), depths.end());
  for (int k = 1; k < shapes; ++k) depths[k] = std::max(depths[k], depths[k - 1] + 0.01);
  depths.back() = 1.0;
  for (int k = shapes - 2; k >= 0; --k) depths[k] = std::min(depths[k], depths[k + 1] - 0.01);
  std::fill(scene.depth.plane(0).begin(), scene.depth.plane(0).end(), static_cast<float>(kBackgroundDepth));

  for (int k = 0; k < shapes; ++k) {
    const double w = size * (0.15 + 0.35 * unit(rng));
    const double h = size * (0.15 + 0.35 * unit(rng));
    const double x0 = unit(rng) * (size - w);
    const double y0 = unit(rng) * (size - h);
    const bool ellipse = unit(rng) < 0.5;
    const float color[3] = {static_cast<float>(unit(rng)), static_cast<float>(unit(rng)), static_cast<float>(unit(rng))};
    const double cx = x0 + w / 2.0;
    const double cy = y0 + h / 2.0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double px = x + 0.5;
        const double py = y + 0.5;
        bool inside = false;
        if (ellipse) {
          const double nx = (px - cx) / (w / 2.0);
          const double ny = (py - cy) / (h / 2.0);
          inside = nx * nx + ny * ny <= 1.0;
        } else {
          inside = px >= x0 && px < x0 + w && py >= y0 && py < y0 + h;
        }
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) scene.rgb.at(c, y, x) = color[c];
        scene.depth.at(0, y, x) = static_cast<float>(depths[k]);
        scene.label.set(y, x, static_cast<std::uint16_t>(k + 1));
      }
    }
  }
  return scene;
}

void SplitFractions::validate() const {
  if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9) {
    throw InvalidArgument(fmt::format("split fractions must be non-negative and sum to 1 (got {}, {}, {})", train,
                                      val, test));
  }
}

void DatasetConfig::validate() const {
  if (image_size < 8 || image_size % 4 != 0) {
    throw InvalidArgument(fmt::format("image_size must be a multiple of 4 and at least 8, got {}", image_size));
  }
  if (num_classes < 2) throw InvalidArgument("num_classes must be at least 2");
  if (!(canny.low < canny.high)) throw InvalidArgument("canny low threshold must be below the high threshold");
  if (synthetic && synthetic_count == 0) throw InvalidArgument("synthetic_count must be positive");
  mask_synth.validate();
  splits.validate();
}

MaskSource::MaskSource(MaskSynthConfig config) : synth_(config) { synth_.validate(); }

MaskSource MaskSource::from_directory(const fs::path& dir) {
  MaskSource source;
  for (const auto& stem : png_stems(dir)) source.masks_.push_back(io::read_mask(dir / (stem + ".png")));
  if (source.masks_.empty()) throw DatasetError(fmt::format("no mask PNGs found in '{}'", dir.string()));
  return source;
}

Mask MaskSource::mask_for(std::uint64_t seed, int height, int width) const {
  if (!masks_.empty()) return resize(masks_[seed % masks_.size()], height, width);
  MaskSynthConfig config = synth_;
  config.seed = seed;
  return synth_mask(config, height, width);
}

MaskSource make_mask_source(const DatasetConfig& config) {
  if (config.mask_dir) return MaskSource::from_directory(*config.mask_dir);
  if (!config.synthetic && fs::is_directory(config.root / "masks") && !png_stems(config.root / "masks").empty()) {
    return MaskSource::from_directory(config.root / "masks");
  }
  return MaskSource(config.mask_synth);
}

Dataset Dataset::load_directory(const DatasetConfig& config) {
  config.validate();
  const auto rgb = png_stems(config.root / "rgb");
  const auto depth = png_stems(config.root / "depth");
  const auto label = png_stems(config.root / "label");

  Dataset ds;
  ds.config_ = config;
  ds.config_.synthetic = false;
  std::set<std::string> all;
  all.insert(rgb.begin(), rgb.end());
  all.insert(depth.begin(), depth.end());
  all.insert(label.begin(), label.end());
  for (const auto& stem : all) {  // std::set iterates lexicographically
    if (rgb.contains(stem) && depth.contains(stem) && label.contains(stem)) {
      ds.stems_.push_back(stem);
    } else {
      ++ds.skipped_;
    }
  }
  if (ds.skipped_ > 0) {
    std::clog << fmt::format("warning: skipped {} sample(s) in '{}' with missing rgb/depth/label files\n",
                             ds.skipped_, config.root.string());
  }
  if (ds.stems_.empty()) throw DatasetError(fmt::format("dataset '{}' is empty", config.root.string()));
  return ds;
}

Dataset Dataset::synthetic(const DatasetConfig& config) {
  config.validate();
  Dataset ds;
  ds.config_ = config;
  ds.config_.synthetic = true;
  for (std::size_t i = 0; i < config.synthetic_count; ++i) ds.stems_.push_back(fmt::format("scene_{:05d}", i));
  return ds;
}

Dataset Dataset::open(const DatasetConfig& config) {
  return config.synthetic ? synthetic(config) : load_directory(config);
}

SceneTriple Dataset::scene(std::size_t index) const {
  if (index >= size()) throw InvalidArgument(fmt::format("sample index {} out of range ({})", index, size()));
  const int s = config_.image_size;
  if (config_.synthetic) return synth_scene(derive_seed(config_.seed, index), s, config_.num_classes);

  const auto& stem = stems_[index];
  const auto file = stem + ".png";
  SceneTriple t{io::read_rgb(config_.root / "rgb" / file), io::read_depth(config_.root / "depth" / file),
                io::read_labels(config_.root / "label" / file, config_.num_classes)};
  t.rgb = resize(t.rgb, s, s);
  t.depth = resize(t.depth, s, s);
  t.label = resize(t.label, s, s);
  return t;
}

SampleBundle make_sample(const SceneTriple& scene, const Mask& mask, CannyThresholds canny) {
  ImageTensor edge = canny_edges(to_grayscale(scene.rgb), canny);
  return SampleBundle::assemble(scene.rgb, scene.depth, std::move(edge), encode_label(scene.label), mask);
}

SampleBundle Dataset::sample(std::size_t index, const Mask& mask) const {
  return make_sample(scene(index), mask, config_.canny);
}

Splits Dataset::split() const {
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(config_.seed, 0x5117));
  std::shuffle(order.begin(), order.end(), rng);

  const auto n = static_cast<double>(size());
  const auto n_test = static_cast<std::size_t>(std::lround(n * config_.splits.test));
  const auto n_val = std::min(size() - n_test, static_cast<std::size_t>(std::lround(n * config_.splits.val)));

  Splits s;
  s.test.assign(order.begin(), order.begin() + n_test);
  s.val.assign(order.begin() + n_test, order.begin() + n_test + n_val);
  s.train.assign(order.begin() + n_test + n_val, order.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

StackedPlanes Batch::stacked(Plane plane) const {
  if (samples.empty()) throw InvalidArgument("cannot stack an empty batch");
  const auto pick = [plane](const SampleBundle& b) -> const ImageTensor* {
    switch (plane) {
      case Plane::Rgb: return &b.rgb;
      case Plane::Depth: return &b.depth;
      case Plane::Edge: return &b.edge;
      case Plane::Label: return &b.label;
      case Plane::MaskedRgb: return &b.masked_rgb;
      case Plane::MaskedDepth: return &b.masked_depth;
      case Plane::MaskedEdge: return &b.masked_edge;
      case Plane::MaskedLabel: return &b.masked_label;
      case Plane::Mask: return nullptr;
    }
    return nullptr;
  };

  const auto& first = samples.front();
  StackedPlanes out;
  out.batch = static_cast<std::int64_t>(samples.size());
  out.height = first.height();
  out.width = first.width();
  const ImageTensor* probe = pick(first);
  out.channels = probe ? probe->channels() : 1;
  out.values.reserve(static_cast<std::size_t>(out.batch * out.channels * out.height * out.width));
  for (const auto& b : samples) {
    if (b.height() != out.height || b.width() != out.width) throw InvalidArgument("batch samples differ in size");
    if (const ImageTensor* img = pick(b)) {
      out.values.insert(out.values.end(), img->data().begin(), img->data().end());
    } else {
      for (auto v : b.mask.data()) out.values.push_back(static_cast<float>(v));
    }
  }
  return out;
}

Batch make_batch(std::span<const std::size_t> indices, const Dataset& dataset, const MaskSource& masks,
                 std::uint64_t mask_seed) {
  Batch batch;
  const int s = dataset.config().image_size;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t index = indices[k];
    if (index >= dataset.size()) {
      throw InvalidArgument(fmt::format("batch index {} out of range ({})", index, dataset.size()));
    }
    batch.indices.push_back(index);
    batch.samples.push_back(dataset.sample(index, masks.mask_for(derive_seed(mask_seed, k, index), s, s)));
  }
  return batch;
}

void write_split_manifest(const fs::path& path, const Dataset& dataset, const Splits& splits) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write split manifest '{}'", path.string()));
  const std::pair<const char*, const std::vector<std::size_t>*> parts[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [name, indices] : parts) {
    out << '[' << name << "]\n";
    for (auto i : *indices) out << dataset.stems().at(i) << '\n';
  }
  if (!out) throw Error(fmt::format("failed writing split manifest '{}'", path.string()));
}

Splits read_split_manifest(const fs::path& path, const Dataset& dataset) {
  std::ifstream in(path);
  if (!in) throw DatasetError(fmt::format("cannot read split manifest '{}'", path.string()));
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < dataset.size(); ++i) index_of[dataset.stems()[i]] = i;

  Splits s;
  std::vector<std::size_t>* current = nullptr;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line == "[train]") {
      current = &s.train;
    } else if (line == "[val]") {
      current = &s.val;
    } else if (line == "[test]") {
      current = &s.test;
    } else {
      if (!current) throw DatasetError(fmt::format("'{}': stem before any section header", path.string()));
      auto it = index_of.find(line);
      if (it == index_of.end()) throw DatasetError(fmt::format("'{}': unknown stem '{}'", path.string(), line));
      current->push_back(it->second);
    }
  }
  return s;
}

}  // namespace higan::data

#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "higan/dataset.hpp"
#include "higan/error.hpp"
#include "higan/image_io.hpp"
#include "higan/inference.hpp"

namespace higan::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidArgument(fmt::format("'{}' is not a directory", dir.string()));
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
}

std::string summary(const training::StepReport& r) {
  std::string line = fmt::format("iter {:>7}", r.iteration);
  for (const char* key : {"edge_g", "label_g", "combined_g", "rgb_d", "depth_d"}) {
    for (const auto& [name, value] : r.losses) {
      if (name == key) line += fmt::format("  {} {:.4f}", name, value);
    }
  }
  return line;
}

}  // namespace

training::LoopResult train(const training::TrainConfig& config, const std::optional<fs::path>& resume, bool quiet) {
  std::unique_ptr<training::Trainer> trainer;
  if (resume) {
    trainer = training::Trainer::load_checkpoint(*resume);
    trainer->set_run_settings(config);
    if (!quiet) fmt::print("resuming from '{}' at iteration {}\n", resume->string(), trainer->iteration());
  } else {
    trainer = std::make_unique<training::Trainer>(config);
  }
  const auto& run = trainer->config();
  ensure_dir(run.out_dir);
  const auto dataset = data::Dataset::open(run.dataset);
  if (dataset.skipped() > 0 && !quiet) fmt::print("skipped {} incomplete samples\n", dataset.skipped());

  training::LoopOptions options;
  if (!quiet) {
    options.on_step = [&](const training::StepReport& r) {
      if (r.iteration % run.log_every == 0) fmt::print("{}\n", summary(r));
    };
  }
  auto result = training::train_loop(*trainer, dataset, options);
  if (!quiet) {
    for (const auto& e : result.evals) {
      fmt::print("eval @{} ({}): rgb_ssim {:.4f} rgb_psnr {:.3f} rgb_mae {:.3f} depth_mae {:.3f}\n", e.iteration,
                 e.split, e.metrics.rgb_ssim, e.metrics.rgb_psnr, e.metrics.rgb_mae, e.metrics.depth_mae);
    }
    fmt::print("checkpoint: {}\n", result.final_checkpoint.string());
  }
  return result;
}

metrics::MetricReport evaluate(const EvaluateOptions& options) {
  auto trainer = training::Trainer::load_checkpoint(options.checkpoint);
  auto config = trainer->config();
  if (options.dataset) config.dataset = *options.dataset;
  config.dataset.validate();
  const auto dataset = data::Dataset::open(config.dataset);

  std::vector<std::size_t> indices;
  if (options.split == "all") {
    indices.resize(dataset.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
  } else {
    const auto splits = dataset.split();
    if (options.split == "train") {
      indices = splits.train;
    } else if (options.split == "val") {
      indices = splits.val;
    } else if (options.split == "test") {
      indices = splits.test;
    } else {
      throw InvalidArgument(fmt::format("unknown split '{}' (train, val, test or all)", options.split));
    }
  }
  if (indices.empty()) throw DatasetError(fmt::format("split '{}' is empty", options.split));

  ensure_dir(options.out);
  const auto masks = data::make_mask_source(config.dataset);
  metrics::MetricReport report;
  report.region = options.region;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t one[] = {indices[i]};
    const auto batch = data::make_batch(one, dataset, masks, options.mask_seed);
    const auto prediction = inference::predict(trainer->model(), batch).front();
    const auto& stem = dataset.stems()[indices[i]];
    report.samples.push_back(metrics::evaluate_sample(prediction.rgbd(), batch.samples.front(), options.region, stem));
    if (i < options.figures) {
      io::write_png(options.out / "figures" / (stem + ".png"),
                    metrics::figure_grid(batch.samples.front(), prediction.rgbd()));
    }
  }
  report.write_csv(options.out / "metrics.csv");
  write_text(options.out / "metrics.txt", report.table());
  write_text(options.out / "config.txt",
             fmt::format("# evaluate checkpoint={} split={} region={} mask_seed={}\n{}", options.checkpoint.string(),
                         options.split, metrics::to_string(options.region), options.mask_seed,
                         training::to_text(config)));
  return report;
}

void inpaint(const InpaintOptions& options) {
  auto trainer = training::Trainer::load_checkpoint(options.checkpoint);
  const auto& config = trainer->config();
  inference::InpaintInputs inputs{io::read_rgb(options.rgb), io::read_depth(options.depth), io::read_mask(options.mask),
                                  std::nullopt, std::nullopt};
  if (options.edge) inputs.edge = io::read_gray(*options.edge);
  if (options.label) inputs.label = io::read_labels(*options.label, config.dataset.num_classes);
  const auto prepared = inference::prepare(std::move(inputs), config.dataset.canny, config.dataset.num_classes);
  if (prepared.label_defaulted) {
    std::cerr << "warning: no label map given; using an all-zero class map\n";
  }

  ensure_dir(options.out);
  const auto prediction = inference::predict(trainer->model(), prepared.bundle);
  const auto& b = prepared.bundle;
  io::write_png(options.out / "rgb.png", prediction.rgb);
  io::write_png(options.out / "depth.png", prediction.depth);
  io::write_png(options.out / "edge.png", prediction.edge);
  io::write_png(options.out / "label.png", decode_label(prediction.label, config.dataset.num_classes));
  io::write_png(options.out / "rgb_composite.png", composite(prediction.rgb, b.rgb, b.mask));
  io::write_png(options.out / "depth_composite.png", composite(prediction.depth, b.depth, b.mask));
}

void make_masks(const MaskSynthConfig& config, int size, std::size_t count, std::uint64_t seed, const fs::path& out) {
  if (size < 1) throw InvalidArgument("mask size must be positive");
  config.validate();
  ensure_dir(out);
  for (std::size_t i = 0; i < count; ++i) {
    auto c = config;
    c.seed = data::derive_seed(seed, i);
    io::write_png(out / fmt::format("mask_{:05d}.png", i), synth_mask(c, size, size));
  }
}

void make_edges(const fs::path& in, const fs::path& out, CannyThresholds thresholds) {
  if (!(thresholds.low < thresholds.high)) throw InvalidArgument("--low must be below --high");
  const auto names = png_files(in);
  ensure_dir(out);
  for (const auto& name : names) {
    io::write_png(out / name, canny_edges(to_grayscale(io::read_rgb(in / name)), thresholds));
  }
}

void synth_dataset(std::uint64_t seed, std::size_t count, int size, int num_classes, const fs::path& out) {
  data::DatasetConfig config;
  config.synthetic = true;
  config.synthetic_count = count;
  config.image_size = size;
  config.num_classes = num_classes;
  config.mask_synth = MaskSynthConfig::for_image_size(size);
  config.seed = seed;
  config.validate();
  const auto dataset = data::Dataset::synthetic(config);
  ensure_dir(out);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto scene = dataset.scene(i);
    const auto& stem = dataset.stems()[i];
    io::write_png(out / "rgb" / (stem + ".png"), scene.rgb);
    io::write_png(out / "depth" / (stem + ".png"), scene.depth);
    io::write_png(out / "label" / (stem + ".png"), scene.label);
  }
}

namespace {

struct TrainFlags {
  std::string config_path;
  bool synthetic = false;
  std::string data_root;
  std::size_t count = 0;
  int size = 0;
  int classes = 0;
  std::string mask_dir;
  std::int64_t iters = 0;
  std::int64_t epochs = 0;
  int batch = 0;
  double lr = 0;
  std::int64_t width = 0;
  std::int64_t disc_width = 0;
  std::int64_t disc_layers = 0;
  std::int64_t blocks = 0;
  std::int64_t extractor_width = 0;
  std::string vgg_weights;
  bool no_edge = false;
  bool no_label = false;
  std::string resume;
  std::string out;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;
  std::int64_t eval_every = 0;
  std::int64_t log_every = 0;
  std::string region;
  bool quiet = false;
};

}  // namespace

int run(std::vector<std::string> args) {
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, char** argv) {
  CLI::App app{"RGB-D inpainting with edge and label regularizer GANs"};
  app.require_subcommand(1);

  // train
  TrainFlags t;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  auto* t_config = train_cmd->add_option("--config", t.config_path, "key = value run config")->check(CLI::ExistingFile);
  auto* t_synth = train_cmd->add_flag("--synthetic", t.synthetic, "use generated scenes instead of --data");
  auto* t_data = train_cmd->add_option("--data", t.data_root, "dataset root with rgb/, depth/, label/");
  auto* t_count = train_cmd->add_option("--count", t.count, "number of synthetic scenes");
  auto* t_size = train_cmd->add_option("--size", t.size, "square training resolution (multiple of 4)");
  auto* t_classes = train_cmd->add_option("--classes", t.classes, "number of semantic classes");
  auto* t_masks = train_cmd->add_option("--mask-dir", t.mask_dir, "directory of hole-mask PNGs");
  auto* t_iters = train_cmd->add_option("--iters", t.iters, "training length in iterations");
  auto* t_epochs = train_cmd->add_option("--epochs", t.epochs, "training length in epochs")->excludes(t_iters);
  auto* t_batch = train_cmd->add_option("--batch", t.batch, "batch size");
  auto* t_lr = train_cmd->add_option("--lr", t.lr, "Adam learning rate");
  auto* t_width = train_cmd->add_option("--width", t.width, "generator base width");
  auto* t_dwidth = train_cmd->add_option("--disc-width", t.disc_width, "discriminator base width");
  auto* t_dlayers = train_cmd->add_option("--disc-layers", t.disc_layers, "discriminator depth");
  auto* t_blocks = train_cmd->add_option("--blocks", t.blocks, "residual blocks per encoder");
  auto* t_xwidth = train_cmd->add_option("--extractor-width", t.extractor_width, "VGG-16 feature extractor width");
  auto* t_vgg = train_cmd->add_option("--vgg-weights", t.vgg_weights, "torchvision VGG-16 state_dict file");
  auto* t_noedge = train_cmd->add_flag("--no-edge", t.no_edge, "train without the edge regularizer");
  auto* t_nolabel = train_cmd->add_flag("--no-label", t.no_label, "train without the label regularizer");
  train_cmd->add_option("--resume", t.resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  auto* t_out = train_cmd->add_option("--out", t.out, "output directory");
  auto* t_seed = train_cmd->add_option("--seed", t.seed, "run seed");
  auto* t_ckpt = train_cmd->add_option("--checkpoint-every", t.checkpoint_every, "checkpoint cadence (0 = end only)");
  auto* t_eval = train_cmd->add_option("--eval-every", t.eval_every, "validation cadence (0 = end only)");
  auto* t_log = train_cmd->add_option("--log-every", t.log_every, "log cadence");
  auto* t_region =
      train_cmd->add_option("--region", t.region, "MAE/RMSE region during evaluation")->check(CLI::IsMember({"full", "holes"}));
  train_cmd->add_flag("--quiet", t.quiet, "no progress output");

  // evaluate
  EvaluateOptions e;
  std::string e_region = "full";
  std::string e_data;
  bool e_synth = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", e.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  auto* e_data_opt = eval_cmd->add_option("--data", e_data, "dataset root (default: the training dataset)");
  eval_cmd->add_flag("--synthetic", e_synth, "evaluate on generated scenes")->excludes(e_data_opt);
  eval_cmd->add_option("--split", e.split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval_cmd->add_option("--region", e_region, "MAE/RMSE over the full image or holes only")
      ->check(CLI::IsMember({"full", "holes"}));
  eval_cmd->add_option("--seed", e.mask_seed, "mask seed");
  eval_cmd->add_option("--figures", e.figures, "number of figure grids to write");
  eval_cmd->add_option("--out", e.out, "output directory")->required();

  // inpaint
  InpaintOptions p;
  std::string p_edge;
  std::string p_label;
  auto* inpaint_cmd = app.add_subcommand("inpaint", "fill the holes of one RGB-D pair");
  inpaint_cmd->add_option("--checkpoint", p.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  inpaint_cmd->add_option("--rgb", p.rgb, "RGB PNG")->required()->check(CLI::ExistingFile);
  inpaint_cmd->add_option("--depth", p.depth, "depth PNG")->required()->check(CLI::ExistingFile);
  inpaint_cmd->add_option("--mask", p.mask, "hole mask PNG (nonzero = hole)")->required()->check(CLI::ExistingFile);
  inpaint_cmd->add_option("--edge", p_edge, "edge map PNG (default: Canny of the RGB)")->check(CLI::ExistingFile);
  inpaint_cmd->add_option("--label", p_label, "label PNG (default: all class 0)")->check(CLI::ExistingFile);
  inpaint_cmd->add_option("--out", p.out, "output directory")->required();

  // make-masks
  std::string m_config;
  std::size_t m_count = 10;
  std::uint64_t m_seed = 0;
  int m_size = 256;
  fs::path m_out;
  auto* masks_cmd = app.add_subcommand("make-masks", "generate random stroke masks");
  masks_cmd->add_option("--config", m_config, "run config providing mask.* keys")->check(CLI::ExistingFile);
  masks_cmd->add_option("--count", m_count, "number of masks");
  masks_cmd->add_option("--seed", m_seed, "base seed");
  auto* m_size_opt = masks_cmd->add_option("--size", m_size, "square mask size");
  masks_cmd->add_option("--out", m_out, "output directory")->required();

  // make-edges
  fs::path g_in;
  fs::path g_out;
  CannyThresholds g_thr;
  auto* edges_cmd = app.add_subcommand("make-edges", "Canny edge maps for a folder of images");
  edges_cmd->add_option("--in", g_in, "input directory of PNGs")->required()->check(CLI::ExistingDirectory);
  edges_cmd->add_option("--out", g_out, "output directory")->required();
  edges_cmd->add_option("--low", g_thr.low, "low hysteresis threshold (0-255)");
  edges_cmd->add_option("--high", g_thr.high, "high hysteresis threshold (0-255)");

  // synth-dataset
  std::uint64_t s_seed = 0;
  std::size_t s_count = 8;
  int s_size = 256;
  int s_classes = 38;
  fs::path s_out;
  auto* synth_cmd = app.add_subcommand("synth-dataset", "write generated rgb/depth/label triples");
  synth_cmd->add_option("--seed", s_seed, "base seed");
  synth_cmd->add_option("--count", s_count, "number of scenes");
  synth_cmd->add_option("--size", s_size, "square image size");
  synth_cmd->add_option("--classes", s_classes, "number of semantic classes");
  synth_cmd->add_option("--out", s_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) {
      training::TrainConfig config;
      if (*t_config) config = training::read_config(t.config_path);
      if (!*t_config && !*t_out && t.resume.empty()) throw InvalidArgument("train needs --out (or a --config with train.out_dir)");
      auto& d = config.dataset;
      if (*t_synth) d.synthetic = true;
      if (*t_data) {
        d.root = t.data_root;
        d.synthetic = false;
      }
      if (*t_count) d.synthetic_count = t.count;
      if (*t_size) {
        d.image_size = t.size;
        d.mask_synth.line_width = MaskSynthConfig::for_image_size(t.size).line_width;
      }
      if (*t_classes) d.num_classes = t.classes;
      if (*t_masks) d.mask_dir = t.mask_dir;
      if (*t_iters) {
        config.schedule = training::Schedule::Iterations;
        config.duration = t.iters;
      }
      if (*t_epochs) {
        config.schedule = training::Schedule::Epochs;
        config.duration = t.epochs;
      }
      if (*t_batch) config.optim.batch_size = t.batch;
      if (*t_lr) config.optim.lr = t.lr;
      if (*t_width) config.model.base_width = t.width;
      if (*t_dwidth) config.model.disc_base_width = t.disc_width;
      if (*t_dlayers) config.model.disc_layers = t.disc_layers;
      if (*t_blocks) config.model.residual_blocks = t.blocks;
      if (*t_xwidth) config.extractor.base_width = t.extractor_width;
      if (*t_vgg) config.extractor.weights_path = t.vgg_weights;
      if (*t_noedge) config.model.edge_enabled = false;
      if (*t_nolabel) config.model.label_enabled = false;
      if (*t_out) config.out_dir = t.out;
      if (*t_seed) config.seed = t.seed;
      if (*t_ckpt) config.checkpoint_every = t.checkpoint_every;
      if (*t_eval) config.eval_every = t.eval_every;
      if (*t_log) config.log_every = t.log_every;
      if (*t_region) config.eval_region = metrics::parse_region(t.region);
      config.validate();
      std::optional<fs::path> resume;
      if (!t.resume.empty()) resume = t.resume;
      train(config, resume, t.quiet);
    } else if (*eval_cmd) {
      e.region = metrics::parse_region(e_region);
      if (!e_data.empty() || e_synth) {
        auto d = training::checkpoint_config(e.checkpoint).dataset;
        d.synthetic = e_synth;
        if (!e_data.empty()) d.root = e_data;
        e.dataset = d;
      }
      const auto report = evaluate(e);
      fmt::print("{}", report.table());
    } else if (*inpaint_cmd) {
      if (!p_edge.empty()) p.edge = p_edge;
      if (!p_label.empty()) p.label = p_label;
      inpaint(p);
    } else if (*masks_cmd) {
      auto mask_config = MaskSynthConfig::for_image_size(m_size);
      if (!m_config.empty()) {
        const auto config = training::read_config(m_config);
        mask_config = config.dataset.mask_synth;
        if (!*m_size_opt) m_size = config.dataset.image_size;
      }
      make_masks(mask_config, m_size, m_count, m_seed, m_out);
      training::TrainConfig resolved;
      resolved.dataset.image_size = m_size;
      resolved.dataset.mask_synth = mask_config;
      write_text(m_out / "config.txt", fmt::format("# make-masks count={} seed={}\n{}", m_count, m_seed,
                                                  training::to_text(resolved)));
    } else if (*edges_cmd) {
      make_edges(g_in, g_out, g_thr);
    } else if (*synth_cmd) {
      synth_dataset(s_seed, s_count, s_size, s_classes, s_out);
    }
  } catch (const InvalidArgument& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace higan::cli

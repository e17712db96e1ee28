#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "commands.hpp"
#include "higan/image_io.hpp"
#include "higan/imaging.hpp"
#include "oracles.hpp"

using namespace higan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("higan_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "higan");
  return cli::run(std::move(args));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A 2-iteration checkpoint at 32 px, shared by the inference tests.
const fs::path& tiny_checkpoint() {
  static const fs::path path = [] {
    const auto dir = scratch("ckpt");
    auto c = oracle::tiny_config();
    c.out_dir = dir;
    c.duration = 2;
    return cli::train(c, std::nullopt, true).final_checkpoint;
  }();
  return path;
}

}  // namespace

TEST(Cli, MakeMasksIsReproducible) {
  const auto dir = scratch("masks");
  ASSERT_EQ(run_cli({"make-masks", "--count", "3", "--seed", "5", "--size", "64", "--out", (dir / "a").string()}), 0);
  ASSERT_EQ(run_cli({"make-masks", "--count", "3", "--seed", "5", "--size", "64", "--out", (dir / "b").string()}), 0);
  for (const char* f : {"mask_00000.png", "mask_00001.png", "mask_00002.png"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / f));
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f));
    const auto m = io::read_mask(dir / "a" / f);
    EXPECT_EQ(m.height(), 64);
    EXPECT_GT(m.hole_fraction(), 0.0);
  }
  EXPECT_NE(slurp(dir / "a" / "mask_00000.png"), slurp(dir / "a" / "mask_00001.png"));
}

TEST(Cli, SynthDatasetLoadsAsDirectory) {
  const auto dir = scratch("synth");
  ASSERT_EQ(run_cli({"synth-dataset", "--count", "3", "--size", "32", "--classes", "12", "--out", dir.string()}), 0);
  data::DatasetConfig c;
  c.root = dir;
  c.image_size = 32;
  c.num_classes = 12;
  c.mask_synth = MaskSynthConfig::for_image_size(32);
  const auto ds = data::Dataset::load_directory(c);
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.skipped(), 0u);
  const auto s = ds.scene(0);
  EXPECT_EQ(s.rgb.height(), 32);
}

TEST(Cli, MakeEdgesMatchesLibraryCanny) {
  const auto dir = scratch("edges");
  const auto scene = data::synth_scene(3, 32, 12);
  io::write_png(dir / "in" / "a.png", scene.rgb);
  ASSERT_EQ(run_cli({"make-edges", "--in", (dir / "in").string(), "--out", (dir / "out").string()}), 0);
  const auto edges = io::read_gray(dir / "out" / "a.png");
  const auto expect = canny_edges(to_grayscale(io::read_rgb(dir / "in" / "a.png")), CannyThresholds{});
  EXPECT_EQ(edges, expect);
}

TEST(Cli, InpaintWritesOutputsAtInputResolution) {
  const auto dir = scratch("inpaint");
  const auto scene = data::synth_scene(9, 36, 38);
  io::write_png(dir / "rgb.png", scene.rgb);
  io::write_png(dir / "depth.png", scene.depth);
  auto mc = MaskSynthConfig::for_image_size(36);
  mc.seed = 2;
  const auto mask = synth_mask(mc, 36, 36);
  io::write_png(dir / "mask.png", mask);
  ASSERT_EQ(run_cli({"inpaint", "--checkpoint", tiny_checkpoint().string(), "--rgb", (dir / "rgb.png").string(), "--depth",
                 (dir / "depth.png").string(), "--mask", (dir / "mask.png").string(), "--out", (dir / "out").string()}),
            0);
  for (const char* f : {"rgb.png", "depth.png", "edge.png", "label.png", "rgb_composite.png", "depth_composite.png"}) {
    ASSERT_TRUE(fs::exists(dir / "out" / f)) << f;
    const auto img = io::read_gray(dir / "out" / f);
    EXPECT_EQ(img.height(), 36) << f;
    EXPECT_EQ(img.width(), 36) << f;
  }
  // Known pixels of the composite are the input.
  const auto comp = io::read_rgb(dir / "out" / "rgb_composite.png");
  const auto orig = io::read_rgb(dir / "rgb.png");
  for (int y = 0; y < 36; ++y)
    for (int x = 0; x < 36; ++x)
      if (!mask.at(y, x))
        for (int c = 0; c < 3; ++c) EXPECT_EQ(comp.at(c, y, x), orig.at(c, y, x));
}

TEST(Cli, EmptyMaskReturnsInputsUnchanged) {
  const auto dir = scratch("empty_mask");
  const auto scene = data::synth_scene(4, 32, 38);
  io::write_png(dir / "rgb.png", scene.rgb);
  io::write_png(dir / "depth.png", scene.depth);
  io::write_png(dir / "mask.png", Mask(32, 32));
  cli::InpaintOptions o;
  o.checkpoint = tiny_checkpoint();
  o.rgb = dir / "rgb.png";
  o.depth = dir / "depth.png";
  o.mask = dir / "mask.png";
  o.out = dir / "out";
  cli::inpaint(o);
  EXPECT_EQ(io::read_rgb(dir / "out" / "rgb_composite.png"), io::read_rgb(dir / "rgb.png"));
  EXPECT_EQ(io::read_gray(dir / "out" / "depth_composite.png"), io::read_gray(dir / "depth.png"));
}

TEST(Cli, ExplicitCannyEdgeMatchesDerivedEdge) {
  const auto dir = scratch("edge_arg");
  const auto scene = data::synth_scene(5, 32, 38);
  io::write_png(dir / "rgb.png", scene.rgb);
  io::write_png(dir / "depth.png", scene.depth);
  auto mc = MaskSynthConfig::for_image_size(32);
  mc.seed = 1;
  io::write_png(dir / "mask.png", synth_mask(mc, 32, 32));
  io::write_png(dir / "edge.png", canny_edges(to_grayscale(io::read_rgb(dir / "rgb.png"))));
  cli::InpaintOptions o;
  o.checkpoint = tiny_checkpoint();
  o.rgb = dir / "rgb.png";
  o.depth = dir / "depth.png";
  o.mask = dir / "mask.png";
  o.out = dir / "auto";
  cli::inpaint(o);
  o.edge = dir / "edge.png";
  o.out = dir / "given";
  cli::inpaint(o);
  for (const char* f : {"rgb.png", "edge.png", "rgb_composite.png"})
    EXPECT_EQ(slurp(dir / "auto" / f), slurp(dir / "given" / f)) << f;
}

TEST(Cli, EvaluateWritesSevenMetricColumns) {
  const auto dir = scratch("evaluate");
  ASSERT_EQ(run_cli({"evaluate", "--checkpoint", tiny_checkpoint().string(), "--split", "all", "--region", "holes",
                 "--figures", "1", "--out", dir.string()}),
            0);
  std::ifstream in(dir / "metrics.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 7);
  EXPECT_NE(slurp(dir / "metrics.txt").find("holes"), std::string::npos);
  EXPECT_FALSE(fs::is_empty(dir / "figures"));
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("exit");
  EXPECT_EQ(run_cli({}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"frobnicate"}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"train", "--synthetic", "--iters", "1", "--epochs", "1", "--out", dir.string()}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"train", "--synthetic", "--size", "30", "--iters", "1", "--out", dir.string()}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"evaluate", "--checkpoint", (dir / "missing.pt").string(), "--out", dir.string()}),
            cli::kExitConfig);
  std::ofstream(dir / "junk.pt") << "not a checkpoint";
  EXPECT_EQ(run_cli({"evaluate", "--checkpoint", (dir / "junk.pt").string(), "--out", dir.string()}),
            cli::kExitRuntime);
  std::ofstream(dir / "bad.cfg") << "model.base_width = many\n";
  EXPECT_EQ(run_cli({"train", "--config", (dir / "bad.cfg").string()}), cli::kExitConfig);
}

TEST(Cli, TrainRunsAndResumes) {
  const auto dir = scratch("train");
  ASSERT_EQ(run_cli({"train", "--synthetic", "--count", "2", "--size", "32", "--width", "8", "--disc-width", "8",
                 "--disc-layers", "4", "--blocks", "1", "--extractor-width", "8", "--iters", "2", "--batch", "1",
                 "--checkpoint-every", "1", "--eval-every", "0", "--quiet", "--out", dir.string()}),
            0);
  ASSERT_TRUE(fs::exists(dir / "checkpoints" / "latest.pt"));
  ASSERT_EQ(run_cli({"train", "--resume", (dir / "checkpoints" / "iter_00000001.pt").string(), "--iters", "3", "--quiet",
                 "--out", (dir / "more").string()}),
            0);
  const auto t = training::Trainer::load_checkpoint(dir / "more" / "checkpoints" / "latest.pt");
  EXPECT_EQ(t->iteration(), 3);
}

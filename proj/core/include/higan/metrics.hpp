#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "higan/dataset.hpp"
#include "higan/image.hpp"

namespace higan::metrics {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean SSIM over the valid (un-padded) window positions, averaged over channels.
/// Images are in [0, 1]; both sides must be at least 11 pixels.
double ssim(const ImageTensor& a, const ImageTensor& b);

/// 10 log10(max^2 / MSE); +infinity when the images are identical.
double psnr(const ImageTensor& a, const ImageTensor& b, double max_val = 1.0);

/// Mean absolute error on the 0-255 scale. With a mask, only hole pixels count
/// (every channel); a mask without holes gives 0.
double mae(const ImageTensor& a, const ImageTensor& b, const Mask* holes = nullptr);
double rmse(const ImageTensor& a, const ImageTensor& b, const Mask* holes = nullptr);

enum class Region { Full, Holes };

const char* to_string(Region region);
/// "full" or "holes"; throws InvalidArgument otherwise.
Region parse_region(const std::string& text);

struct SampleMetrics {
  std::string name;
  double rgb_ssim = 0.0;
  double rgb_psnr = 0.0;
  double depth_psnr = 0.0;
  double rgb_mae = 0.0;
  double rgb_rmse = 0.0;
  double depth_mae = 0.0;
  double depth_rmse = 0.0;
};

/// Generator output for one sample, before compositing.
struct RgbdPrediction {
  ImageTensor rgb;
  ImageTensor depth;
};

struct MetricReport {
  Region region = Region::Full;
  std::vector<SampleMetrics> samples;

  /// Arithmetic mean of each column over samples.
  SampleMetrics aggregate() const;

  void write_csv(const std::filesystem::path& path) const;
  std::string table() const;
};

inline constexpr const char* kMetricColumns[] = {"rgb_ssim", "rgb_psnr", "depth_psnr", "rgb_mae",
                                                 "rgb_rmse", "depth_mae", "depth_rmse"};

/// Metrics of composite(prediction, truth, mask). SSIM and PSNR always use
/// the whole image; MAE/RMSE follow `region`.
SampleMetrics evaluate_sample(const RgbdPrediction& prediction, const data::SampleBundle& truth, Region region,
                              std::string name = {});

MetricReport evaluate_dataset(std::span<const RgbdPrediction> predictions, std::span<const data::SampleBundle> truths,
                              Region region, std::span<const std::string> names = {});

/// Two rows (RGB, depth) of mask | masked input | composited output | truth.
ImageTensor figure_grid(const data::SampleBundle& truth, const RgbdPrediction& prediction);

/// Full-scale reference scores, printed next to measured ones.
namespace reference {
inline constexpr double kRgbSsim = 0.9476;
inline constexpr double kRgbPsnr = 30.38;
inline constexpr double kDepthPsnr = 34.257;
inline constexpr double kRgbMae = 5.3687;
inline constexpr double kRgbRmse = 8.901;
inline constexpr double kDepthMae = 2.5059;
inline constexpr double kDepthRmse = 5.582;
}  // namespace reference

}  // namespace higan::metrics

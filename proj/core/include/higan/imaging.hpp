#pragma once

#include <cstdint>
#include <vector>

#include "higan/image.hpp"

namespace higan {

/// Value written into hole pixels by apply_mask (0 in model space).
inline constexpr float kHoleFill = 0.5f;

/// Known pixels copied, hole pixels set to kHoleFill. Throws InvalidArgument on size mismatch.
ImageTensor apply_mask(const ImageTensor& image, const Mask& mask);

/// Paste-back: `original` outside the holes, `raw_output` inside them.
ImageTensor composite(const ImageTensor& raw_output, const ImageTensor& original, const Mask& mask);

/// ITU-R 601 luma (0.299, 0.587, 0.114). Single-channel input is returned as is.
ImageTensor to_grayscale(const ImageTensor& image);

struct CannyThresholds {
  double low = 100.0;
  double high = 200.0;
};

/// Binary Canny edge map of a single-channel image.
///
/// The image is scaled to 0-255, smoothed with a 5x5 Gaussian (sigma 1.4),
/// differentiated with 3x3 Sobel kernels, thinned by non-maximum suppression
/// and linked by hysteresis. Thresholds apply to the L2 Sobel magnitude, the
/// same scale cv::Canny(..., L2gradient=true) uses. Borders replicate.
ImageTensor canny_edges(const ImageTensor& gray, CannyThresholds thresholds = {});

struct IntRange {
  int min = 0;
  int max = 0;
};

struct RealRange {
  double min = 0.0;
  double max = 0.0;
};

/// Random free-form stroke masks in the spirit of quick-draw irregular masks.
struct MaskSynthConfig {
  IntRange stroke_count{1, 4};
  IntRange vertices_per_stroke{3, 8};
  /// Stroke diameter in pixels.
  IntRange line_width{6, 20};
  RealRange target_coverage{0.05, 0.35};
  std::uint64_t seed = 0;
  int max_attempts = 1000;

  void validate() const;

  /// Defaults with line widths scaled from a 256-pixel reference to `size`.
  static MaskSynthConfig for_image_size(int size);
};

/// Rasterizes random polylines until the hole fraction lands inside
/// target_coverage. Pure function of (config, height, width).
/// Throws GenerationError if max_attempts draws all miss the range.
Mask synth_mask(const MaskSynthConfig& config, int height, int width);

/// 8-connected Bresenham line with a disk of `diameter` stamped on each step.
void draw_stroke(Mask& mask, int x0, int y0, int x1, int y1, int diameter);

/// Bilinear, half-pixel centers, edge clamp.
ImageTensor resize(const ImageTensor& image, int height, int width);
/// Nearest neighbour; class indices survive unchanged.
LabelMap resize(const LabelMap& labels, int height, int width);
/// Nearest neighbour; stays binary.
Mask resize(const Mask& mask, int height, int width);

/// Image in model space, [-1, 1], same CHW layout.
struct ModelPlane {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;
};

ModelPlane normalize(const ImageTensor& image);
/// Inverse of normalize; out-of-range model values are clamped into [0, 1].
ImageTensor denormalize(const ModelPlane& plane);

/// class / (num_classes - 1), single channel.
ImageTensor encode_label(const LabelMap& labels);
LabelMap decode_label(const ImageTensor& encoded, int num_classes);

}  // namespace higan

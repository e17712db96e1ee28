#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "higan/error.hpp"
#include "higan/imaging.hpp"

namespace higan {

void MaskSynthConfig::validate() const {
  const auto check_int = [](IntRange r, int floor, const char* name) {
    if (r.min < floor || r.min > r.max) {
      throw InvalidArgument(fmt::format("mask synth: invalid {} range [{}, {}]", name, r.min, r.max));
    }
  };
  check_int(stroke_count, 1, "stroke_count");
  check_int(vertices_per_stroke, 2, "vertices_per_stroke");
  check_int(line_width, 1, "line_width");
  if (!(target_coverage.min > 0.0 && target_coverage.max < 1.0 && target_coverage.min <= target_coverage.max)) {
    throw InvalidArgument(fmt::format("mask synth: coverage range [{}, {}] must lie inside (0, 1)",
                                      target_coverage.min, target_coverage.max));
  }
  if (max_attempts < 1) throw InvalidArgument("mask synth: max_attempts must be positive");
}

MaskSynthConfig MaskSynthConfig::for_image_size(int size) {
  MaskSynthConfig config;
  const double scale = static_cast<double>(size) / 256.0;
  config.line_width.min = std::max(1, static_cast<int>(std::lround(config.line_width.min * scale)));
  config.line_width.max = std::max(config.line_width.min, static_cast<int>(std::lround(config.line_width.max * scale)));
  return config;
}

void draw_stroke(Mask& mask, int x0, int y0, int x1, int y1, int diameter) {
  const int radius_lo = (diameter - 1) / 2;
  const int radius_hi = diameter / 2;
  // Even diameters get an asymmetric footprint so the stroke is exactly `diameter` wide.
  const double r2 = (diameter / 2.0) * (diameter / 2.0);
  const double centre = (radius_hi - radius_lo) / 2.0;
  const auto stamp = [&](int cx, int cy) {
    for (int dy = -radius_lo; dy <= radius_hi; ++dy) {
      for (int dx = -radius_lo; dx <= radius_hi; ++dx) {
        const double fy = dy - centre;
        const double fx = dx - centre;
        if (diameter > 2 && fx * fx + fy * fy > r2) continue;
        const int x = cx + dx;
        const int y = cy + dy;
        if (x >= 0 && x < mask.width() && y >= 0 && y < mask.height()) mask.set(y, x, true);
      }
    }
  };

  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    stamp(x0, y0);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

Mask synth_mask(const MaskSynthConfig& config, int height, int width) {
  config.validate();
  if (height <= 0 || width <= 0) throw InvalidArgument("synth_mask: dimensions must be positive");

  std::mt19937_64 rng(config.seed);
  const auto uniform_int = [&](IntRange r) { return std::uniform_int_distribution<int>(r.min, r.max)(rng); };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double extent = std::min(height, width);

  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    Mask mask(height, width);
    const int strokes = uniform_int(config.stroke_count);
    for (int s = 0; s < strokes; ++s) {
      const int vertices = uniform_int(config.vertices_per_stroke);
      const int diameter = uniform_int(config.line_width);
      double x = unit(rng) * (width - 1);
      double y = unit(rng) * (height - 1);
      double heading = unit(rng) * 2.0 * std::numbers::pi;
      for (int v = 1; v < vertices; ++v) {
        // Random walk with a bounded turn, like a hand-drawn scribble.
        heading += (unit(rng) - 0.5) * std::numbers::pi;
        const double length = extent * (0.1 + 0.3 * unit(rng));
        const double nx = std::clamp(x + length * std::cos(heading), 0.0, width - 1.0);
        const double ny = std::clamp(y + length * std::sin(heading), 0.0, height - 1.0);
        draw_stroke(mask, static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)),
                    static_cast<int>(std::lround(nx)), static_cast<int>(std::lround(ny)), diameter);
        x = nx;
        y = ny;
      }
    }
    const double coverage = mask.hole_fraction();
    if (coverage >= config.target_coverage.min && coverage <= config.target_coverage.max) return mask;
  }
  throw GenerationError(fmt::format("synth_mask: no mask with coverage in [{}, {}] after {} attempts",
                                    config.target_coverage.min, config.target_coverage.max,
                                    config.max_attempts));
}

}  // namespace higan

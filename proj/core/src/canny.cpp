#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "higan/error.hpp"
#include "higan/imaging.hpp"

namespace higan {
namespace {

constexpr int kGaussianRadius = 2;
constexpr double kGaussianSigma = 1.4;

// Row-major double plane with replicated borders on read.
struct Plane {
  int height;
  int width;
  std::vector<double> values;

  double at(int y, int x) const {
    y = std::clamp(y, 0, height - 1);
    x = std::clamp(x, 0, width - 1);
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

std::array<double, 2 * kGaussianRadius + 1> gaussian_taps() {
  std::array<double, 2 * kGaussianRadius + 1> taps{};
  double sum = 0.0;
  for (int i = -kGaussianRadius; i <= kGaussianRadius; ++i) {
    taps[i + kGaussianRadius] = std::exp(-(i * i) / (2.0 * kGaussianSigma * kGaussianSigma));
    sum += taps[i + kGaussianRadius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

Plane smooth(const Plane& in) {
  const auto taps = gaussian_taps();
  Plane tmp{in.height, in.width, std::vector<double>(in.values.size())};
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int k = -kGaussianRadius; k <= kGaussianRadius; ++k) acc += taps[k + kGaussianRadius] * in.at(y, x + k);
      tmp.values[static_cast<std::size_t>(y) * in.width + x] = acc;
    }
  }
  Plane out{in.height, in.width, std::vector<double>(in.values.size())};
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int k = -kGaussianRadius; k <= kGaussianRadius; ++k) acc += taps[k + kGaussianRadius] * tmp.at(y + k, x);
      out.values[static_cast<std::size_t>(y) * in.width + x] = acc;
    }
  }
  return out;
}

}  // namespace

ImageTensor canny_edges(const ImageTensor& gray, CannyThresholds thresholds) {
  if (gray.channels() != 1) throw InvalidArgument("canny_edges expects a single-channel image");
  if (!(thresholds.low < thresholds.high)) {
    throw InvalidArgument("canny_edges requires low threshold < high threshold");
  }
  const int h = gray.height();
  const int w = gray.width();
  const std::size_t n = gray.plane_size();

  Plane intensity{h, w, std::vector<double>(n)};
  const auto src = gray.plane(0);
  for (std::size_t i = 0; i < n; ++i) intensity.values[i] = 255.0 * src[i];
  const Plane smoothed = smooth(intensity);

  std::vector<double> gx(n), gy(n), magnitude(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto s = [&](int dy, int dx) { return smoothed.at(y + dy, x + dx); };
      const double dx = (s(-1, 1) + 2.0 * s(0, 1) + s(1, 1)) - (s(-1, -1) + 2.0 * s(0, -1) + s(1, -1));
      const double dy = (s(1, -1) + 2.0 * s(1, 0) + s(1, 1)) - (s(-1, -1) + 2.0 * s(-1, 0) + s(-1, 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      gx[i] = dx;
      gy[i] = dy;
      magnitude[i] = std::hypot(dx, dy);
    }
  }

  const auto mag_at = [&](int y, int x) {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return magnitude[static_cast<std::size_t>(y) * w + x];
  };

  // Non-maximum suppression. Strict on the "previous" side, non-strict on the
  // "next" side, so a symmetric ridge keeps exactly one pixel.
  const double tan22 = std::tan(M_PI / 8.0);
  const double tan67 = std::tan(3.0 * M_PI / 8.0);
  enum : std::uint8_t { kNone = 0, kWeak = 1, kStrong = 2 };
  std::vector<std::uint8_t> state(n, kNone);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double m = magnitude[i];
      if (m <= thresholds.low) continue;
      const double ax = std::abs(gx[i]);
      const double ay = std::abs(gy[i]);
      double prev = 0.0;
      double next = 0.0;
      if (ay <= ax * tan22) {
        prev = mag_at(y, x - 1);
        next = mag_at(y, x + 1);
      } else if (ay > ax * tan67) {
        prev = mag_at(y - 1, x);
        next = mag_at(y + 1, x);
      } else if ((gx[i] > 0) == (gy[i] > 0)) {
        prev = mag_at(y - 1, x - 1);
        next = mag_at(y + 1, x + 1);
      } else {
        prev = mag_at(y - 1, x + 1);
        next = mag_at(y + 1, x - 1);
      }
      if (m > prev && m >= next) state[i] = m > thresholds.high ? kStrong : kWeak;
    }
  }

  // Hysteresis: grow strong pixels through 8-connected weak ones.
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (state[i] == kStrong) stack.push_back(i);
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const int y = static_cast<int>(i / w);
    const int x = static_cast<int>(i % w);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy;
        const int nx = x + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
        if (state[j] == kWeak) {
          state[j] = kStrong;
          stack.push_back(j);
        }
      }
    }
  }

  ImageTensor edges(h, w, 1);
  auto dst = edges.plane(0);
  for (std::size_t i = 0; i < n; ++i) dst[i] = state[i] == kStrong ? 1.0f : 0.0f;
  return edges;
}

}  // namespace higan

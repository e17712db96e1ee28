#include "higan/imaging.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "higan/error.hpp"

namespace higan {
namespace {

void require_same_size(const ImageTensor& image, const Mask& mask, const char* op) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw InvalidArgument(fmt::format("{}: image {}x{} does not match mask {}x{}", op, image.height(),
                                      image.width(), mask.height(), mask.width()));
  }
}

void require_positive(int height, int width) {
  if (height <= 0 || width <= 0) {
    throw InvalidArgument(fmt::format("resize target must be positive, got {}x{}", height, width));
  }
}

// Nearest source index for destination index `d` under half-pixel centers.
int nearest_source(int d, int src_size, int dst_size) {
  const double s = (d + 0.5) * static_cast<double>(src_size) / dst_size;
  return std::clamp(static_cast<int>(std::floor(s)), 0, src_size - 1);
}

}  // namespace

ImageTensor apply_mask(const ImageTensor& image, const Mask& mask) {
  require_same_size(image, mask, "apply_mask");
  ImageTensor out = image;
  const std::size_t n = image.plane_size();
  for (int c = 0; c < image.channels(); ++c) {
    auto plane = out.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask.is_hole(i)) plane[i] = kHoleFill;
    }
  }
  return out;
}

ImageTensor composite(const ImageTensor& raw_output, const ImageTensor& original, const Mask& mask) {
  if (!raw_output.same_shape(original)) throw InvalidArgument("composite: output and original shapes differ");
  require_same_size(original, mask, "composite");
  ImageTensor out = original;
  const std::size_t n = original.plane_size();
  for (int c = 0; c < original.channels(); ++c) {
    auto dst = out.plane(c);
    auto src = raw_output.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask.is_hole(i)) dst[i] = src[i];
    }
  }
  return out;
}

ImageTensor to_grayscale(const ImageTensor& image) {
  if (image.channels() == 1) return image;
  ImageTensor out(image.height(), image.width(), 1);
  auto r = image.plane(0);
  auto g = image.plane(1);
  auto b = image.plane(2);
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = std::clamp(0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i], 0.0f, 1.0f);
  }
  return out;
}

ImageTensor resize(const ImageTensor& image, int height, int width) {
  require_positive(height, width);
  if (image.height() == height && image.width() == width) return image;

  ImageTensor out(height, width, image.channels());
  const double sy = static_cast<double>(image.height()) / height;
  const double sx = static_cast<double>(image.width()) / width;
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < height; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
      const int y0 = static_cast<int>(std::floor(fy));
      const int y1 = std::min(y0 + 1, image.height() - 1);
      const double wy = fy - y0;
      for (int x = 0; x < width; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
        const int x0 = static_cast<int>(std::floor(fx));
        const int x1 = std::min(x0 + 1, image.width() - 1);
        const double wx = fx - x0;
        const double top = (1.0 - wx) * image.at(c, y0, x0) + wx * image.at(c, y0, x1);
        const double bottom = (1.0 - wx) * image.at(c, y1, x0) + wx * image.at(c, y1, x1);
        out.at(c, y, x) = static_cast<float>(std::clamp((1.0 - wy) * top + wy * bottom, 0.0, 1.0));
      }
    }
  }
  return out;
}

LabelMap resize(const LabelMap& labels, int height, int width) {
  require_positive(height, width);
  if (labels.height() == height && labels.width() == width) return labels;
  LabelMap out(height, width, labels.num_classes());
  for (int y = 0; y < height; ++y) {
    const int sy = nearest_source(y, labels.height(), height);
    for (int x = 0; x < width; ++x) {
      out.set(y, x, labels.at(sy, nearest_source(x, labels.width(), width)));
    }
  }
  return out;
}

Mask resize(const Mask& mask, int height, int width) {
  require_positive(height, width);
  if (mask.height() == height && mask.width() == width) return mask;
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = nearest_source(y, mask.height(), height);
    for (int x = 0; x < width; ++x) {
      out.set(y, x, mask.at(sy, nearest_source(x, mask.width(), width)) != 0);
    }
  }
  return out;
}

ModelPlane normalize(const ImageTensor& image) {
  ModelPlane out{image.height(), image.width(), image.channels(), {}};
  out.data.resize(image.size());
  std::transform(image.data().begin(), image.data().end(), out.data.begin(),
                 [](float v) { return 2.0f * v - 1.0f; });
  return out;
}

ImageTensor denormalize(const ModelPlane& plane) {
  if (plane.data.size() != static_cast<std::size_t>(plane.channels) * plane.height * plane.width) {
    throw InvalidArgument("denormalize: plane data size does not match its shape");
  }
  std::vector<float> data(plane.data.size());
  std::transform(plane.data.begin(), plane.data.end(), data.begin(), [](float v) {
    // NaN maps to the hole fill so the range invariant still holds.
    if (std::isnan(v)) return kHoleFill;
    return std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f);
  });
  return ImageTensor::from_data(plane.height, plane.width, plane.channels, std::move(data));
}

ImageTensor encode_label(const LabelMap& labels) {
  ImageTensor out(labels.height(), labels.width(), 1);
  const float scale = 1.0f / static_cast<float>(labels.num_classes() - 1);
  auto dst = out.plane(0);
  auto src = labels.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(src[i]) * scale;
  return out;
}

LabelMap decode_label(const ImageTensor& encoded, int num_classes) {
  if (encoded.channels() != 1) throw InvalidArgument("decode_label expects a single-channel image");
  LabelMap out(encoded.height(), encoded.width(), num_classes);
  const auto src = encoded.plane(0);
  for (int y = 0; y < encoded.height(); ++y) {
    for (int x = 0; x < encoded.width(); ++x) {
      const long cls = std::lround(src[static_cast<std::size_t>(y) * encoded.width() + x] * (num_classes - 1));
      out.set(y, x, static_cast<std::uint16_t>(std::clamp<long>(cls, 0, num_classes - 1)));
    }
  }
  return out;
}

}  // namespace higan

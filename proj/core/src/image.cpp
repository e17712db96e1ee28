#include "higan/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "higan/error.hpp"

namespace higan {
namespace {

void check_dims(int height, int width) {
  if (height <= 0 || width <= 0) {
    throw InvalidArgument(fmt::format("image dimensions must be positive, got {}x{}", height, width));
  }
}

}  // namespace

ImageTensor::ImageTensor(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width);
  if (channels != 1 && channels != 3) {
    throw InvalidArgument(fmt::format("channels must be 1 or 3, got {}", channels));
  }
  if (!(fill >= 0.0f && fill <= 1.0f)) {
    throw InvalidArgument(fmt::format("fill value {} outside [0, 1]", fill));
  }
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

ImageTensor ImageTensor::from_data(int height, int width, int channels, std::vector<float> data) {
  ImageTensor out;
  out.height_ = height;
  out.width_ = width;
  out.channels_ = channels;
  out.data_ = std::move(data);
  out.validate();
  return out;
}

std::span<float> ImageTensor::plane(int c) {
  return std::span<float>(data_).subspan(static_cast<std::size_t>(c) * plane_size(), plane_size());
}

std::span<const float> ImageTensor::plane(int c) const {
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * plane_size(), plane_size());
}

void ImageTensor::validate() const {
  check_dims(height_, width_);
  if (channels_ != 1 && channels_ != 3) {
    throw InvalidArgument(fmt::format("channels must be 1 or 3, got {}", channels_));
  }
  if (data_.size() != static_cast<std::size_t>(channels_) * height_ * width_) {
    throw InvalidArgument(fmt::format("data holds {} values, expected {}x{}x{}", data_.size(), channels_,
                                      height_, width_));
  }
  auto bad = std::find_if(data_.begin(), data_.end(), [](float v) { return !(v >= 0.0f && v <= 1.0f); });
  if (bad != data_.end()) {
    throw InvalidArgument(fmt::format("pixel value {} outside [0, 1]", *bad));
  }
}

Mask::Mask(int height, int width, std::uint8_t fill) : height_(height), width_(width) {
  check_dims(height, width);
  data_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

Mask Mask::from_data(int height, int width, std::vector<std::uint8_t> data) {
  check_dims(height, width);
  if (data.size() != static_cast<std::size_t>(height) * width) {
    throw InvalidArgument("mask data size does not match its dimensions");
  }
  if (std::any_of(data.begin(), data.end(), [](std::uint8_t v) { return v > 1; })) {
    throw InvalidArgument("mask values must be 0 or 1");
  }
  Mask out;
  out.height_ = height;
  out.width_ = width;
  out.data_ = std::move(data);
  return out;
}

std::size_t Mask::hole_count() const noexcept {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

double Mask::hole_fraction() const noexcept {
  return data_.empty() ? 0.0 : static_cast<double>(hole_count()) / static_cast<double>(data_.size());
}

LabelMap::LabelMap(int height, int width, int num_classes, std::uint16_t fill)
    : height_(height), width_(width), num_classes_(num_classes) {
  check_dims(height, width);
  if (num_classes < 2) throw InvalidArgument("a label map needs at least 2 classes");
  if (fill >= num_classes) throw InvalidArgument("fill class out of range");
  data_.assign(static_cast<std::size_t>(height) * width, fill);
}

LabelMap LabelMap::from_data(int height, int width, int num_classes, std::vector<std::uint16_t> data) {
  LabelMap out(height, width, num_classes);
  if (data.size() != out.data_.size()) throw InvalidArgument("label data size does not match its dimensions");
  auto bad = std::find_if(data.begin(), data.end(), [&](std::uint16_t v) { return v >= num_classes; });
  if (bad != data.end()) {
    throw InvalidArgument(fmt::format("label {} not below num_classes {}", *bad, num_classes));
  }
  out.data_ = std::move(data);
  return out;
}

}  // namespace higan

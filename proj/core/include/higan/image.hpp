#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace higan {

/// Dense float image, planar CHW layout, values in [0, 1].
///
/// Carries RGB (3 channels) as well as depth, edge and encoded label planes
/// (1 channel). The [0, 1] range is checked by from_data() and validate();
/// element access through at() is unchecked.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, float fill = 0.0f);

  /// Adopts `data` (CHW). Throws InvalidArgument on bad shape or out-of-range values.
  static ImageTensor from_data(int height, int width, int channels, std::vector<float> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<float> plane(int c);
  std::span<const float> plane(int c) const;

  bool same_shape(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  /// Throws InvalidArgument if any invariant is broken.
  void validate() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Binary hole map: 1 marks a missing pixel, 0 a known one.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0);

  static Mask from_data(int height, int width, std::vector<std::uint8_t> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::uint8_t at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int y, int x, bool hole) { data_[static_cast<std::size_t>(y) * width_ + x] = hole ? 1 : 0; }
  bool is_hole(std::size_t i) const { return data_[i] != 0; }

  std::span<const std::uint8_t> data() const noexcept { return data_; }

  std::size_t hole_count() const noexcept;
  double hole_fraction() const noexcept;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Per-pixel semantic class indices in [0, num_classes).
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, int num_classes, std::uint16_t fill = 0);

  static LabelMap from_data(int height, int width, int num_classes, std::vector<std::uint16_t> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int num_classes() const noexcept { return num_classes_; }

  std::uint16_t at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int y, int x, std::uint16_t cls) { data_[static_cast<std::size_t>(y) * width_ + x] = cls; }

  std::span<const std::uint16_t> data() const noexcept { return data_; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int num_classes_ = 0;
  std::vector<std::uint16_t> data_;
};

}  // namespace higan

#include "higan/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "higan/error.hpp"

namespace higan::io {
namespace {

cv::Mat load(const std::filesystem::path& path, int flags) {
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) throw DatasetError(fmt::format("cannot read image '{}'", path.string()));
  if (m.depth() != CV_8U && m.depth() != CV_16U) {
    throw DatasetError(fmt::format("'{}': only 8- and 16-bit images are supported", path.string()));
  }
  return m;
}

double full_scale(const cv::Mat& m) { return m.depth() == CV_16U ? 65535.0 : 255.0; }

double pixel(const cv::Mat& m, int y, int x, int c = 0) {
  const int channels = m.channels();
  if (m.depth() == CV_16U) return m.ptr<std::uint16_t>(y)[x * channels + c];
  return m.ptr<std::uint8_t>(y)[x * channels + c];
}

void store(const std::filesystem::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw Error(fmt::format("cannot write '{}': {}", path.string(), e.what()));
  }
  if (!ok) throw Error(fmt::format("cannot write '{}'", path.string()));
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

ImageTensor read_rgb(const std::filesystem::path& path) {
  const cv::Mat m = load(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
  const double scale = full_scale(m);
  ImageTensor out(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV stores BGR.
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = static_cast<float>(pixel(m, y, x, 2 - c) / scale);
    }
  }
  return out;
}

ImageTensor read_gray(const std::filesystem::path& path) {
  const cv::Mat m = load(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  const double scale = full_scale(m);
  ImageTensor out(m.rows, m.cols, 1);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) out.at(0, y, x) = static_cast<float>(pixel(m, y, x) / scale);
  }
  return out;
}

ImageTensor read_depth(const std::filesystem::path& path) {
  const cv::Mat m = load(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  double max_value = 0.0;
  cv::minMaxLoc(m, nullptr, &max_value);
  ImageTensor out(m.rows, m.cols, 1);
  if (max_value <= 0.0) return out;
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) out.at(0, y, x) = static_cast<float>(pixel(m, y, x) / max_value);
  }
  return out;
}

LabelMap read_labels(const std::filesystem::path& path, int num_classes) {
  const cv::Mat m = load(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  std::vector<std::uint16_t> data(static_cast<std::size_t>(m.rows) * m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      const auto v = static_cast<std::uint16_t>(pixel(m, y, x));
      if (v >= num_classes) {
        throw DatasetError(fmt::format("'{}': class {} is not below num_classes {}", path.string(), v, num_classes));
      }
      data[static_cast<std::size_t>(y) * m.cols + x] = v;
    }
  }
  return LabelMap::from_data(m.rows, m.cols, num_classes, std::move(data));
}

Mask read_mask(const std::filesystem::path& path) {
  const cv::Mat m = load(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(m.rows) * m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) data[static_cast<std::size_t>(y) * m.cols + x] = pixel(m, y, x) > 0 ? 1 : 0;
  }
  return Mask::from_data(m.rows, m.cols, std::move(data));
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  if (image.channels() == 1) {
    cv::Mat m(image.height(), image.width(), CV_8UC1);
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) m.at<std::uint8_t>(y, x) = to_byte(image.at(0, y, x));
    }
    store(path, m);
    return;
  }
  cv::Mat m(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      auto& px = m.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) px[2 - c] = to_byte(image.at(c, y, x));
    }
  }
  store(path, m);
}

void write_png(const std::filesystem::path& path, const LabelMap& labels) {
  if (labels.num_classes() > 256) {
    cv::Mat m(labels.height(), labels.width(), CV_16UC1);
    for (int y = 0; y < labels.height(); ++y) {
      for (int x = 0; x < labels.width(); ++x) m.at<std::uint16_t>(y, x) = labels.at(y, x);
    }
    store(path, m);
    return;
  }
  cv::Mat m(labels.height(), labels.width(), CV_8UC1);
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(labels.at(y, x));
  }
  store(path, m);
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat m(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) m.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  }
  store(path, m);
}

}  // namespace higan::io

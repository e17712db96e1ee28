#pragma once

#include <filesystem>

#include "higan/image.hpp"

namespace higan::io {

/// 8- or 16-bit PNG; grayscale input is replicated to three channels.
ImageTensor read_rgb(const std::filesystem::path& path);

/// Single-channel plane; 8-bit values map to v/255, 16-bit to v/65535.
ImageTensor read_gray(const std::filesystem::path& path);

/// Depth plane divided by its own maximum (all-zero depth stays zero).
ImageTensor read_depth(const std::filesystem::path& path);

/// 8- or 16-bit grayscale PNG holding raw class indices.
LabelMap read_labels(const std::filesystem::path& path, int num_classes);

/// Any nonzero pixel is a hole.
Mask read_mask(const std::filesystem::path& path);

/// 8-bit PNG (gray or RGB by channel count). Creates parent directories.
void write_png(const std::filesystem::path& path, const ImageTensor& image);
/// 8-bit grayscale with raw class indices.
void write_png(const std::filesystem::path& path, const LabelMap& labels);
/// 0 / 255.
void write_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace higan::io

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "epe/tensor.hpp"

namespace epe {

/// Per-pixel class ids, row-major.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  bool operator==(const LabelMap&) const = default;
};

/// Binary P6, maxval 255, read as a 1 x 3 x H x W tensor with values v / 255.
Tensor<float> read_ppm(const std::filesystem::path& path);
/// Writes a 1 x 3 x H x W tensor, each value stored as round(255 v) clamped to 0..255.
void write_ppm(const Tensor<float>& image, const std::filesystem::path& path);

/// Binary P5, maxval 255; each byte is a class id (255 = ignore).
LabelMap read_label_pgm(const std::filesystem::path& path);
void write_label_pgm(const LabelMap& labels, const std::filesystem::path& path);

/// Plain 8-bit grayscale P5 image.
void write_gray_pgm(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& pixels,
                    const std::filesystem::path& path);

}  // namespace epe

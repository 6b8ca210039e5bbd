#include "epe/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "epe/error.hpp"

namespace epe {

namespace {

struct Netpbm {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& header, const std::vector<std::uint8_t>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

class HeaderReader {
 public:
  HeaderReader(const std::vector<std::uint8_t>& bytes, const std::string& name) : bytes_(bytes), name_(name) {}

  std::size_t number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) {
      throw ImageFormatError(ImageFormatError::Kind::truncated, name_ + ": header is truncated");
    }
    if (!std::isdigit(bytes_[pos_])) {
      throw ImageFormatError(ImageFormatError::Kind::bad_header, name_ + ": malformed header");
    }
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_++] - '0');
      if (value > (1u << 24)) throw ImageFormatError(ImageFormatError::Kind::bad_header, name_ + ": header value too large");
    }
    return value;
  }

  /// The single whitespace byte separating the header from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size()) {
      throw ImageFormatError(ImageFormatError::Kind::truncated, name_ + ": header is truncated");
    }
    if (!std::isspace(bytes_[pos_])) throw ImageFormatError(ImageFormatError::Kind::bad_header, name_ + ": malformed header");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  const std::string& name_;
  std::size_t pos_ = 2;
};

Netpbm read_netpbm(const std::filesystem::path& path, char kind, std::size_t channels) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  const std::string name = path.string();
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != static_cast<std::uint8_t>(kind)) {
    throw ImageFormatError(ImageFormatError::Kind::bad_magic,
                           name + ": expected binary P" + std::string(1, kind) + " magic");
  }
  HeaderReader header(bytes, name);
  Netpbm img;
  img.width = header.number();
  img.height = header.number();
  const std::size_t maxval = header.number();
  if (maxval != 255) {
    throw ImageFormatError(ImageFormatError::Kind::bad_maxval,
                           name + ": maxval " + std::to_string(maxval) + " unsupported (need 255)");
  }
  if (img.width == 0 || img.height == 0) throw ImageFormatError(ImageFormatError::Kind::bad_header, name + ": empty image");
  const std::size_t offset = header.raster_offset();
  const std::size_t expected = img.width * img.height * channels;
  if (bytes.size() - offset < expected) {
    throw ImageFormatError(ImageFormatError::Kind::truncated, name + ": raster is truncated (" +
                                                                   std::to_string(bytes.size() - offset) + " of " +
                                                                   std::to_string(expected) + " bytes)");
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(offset + expected));
  return img;
}

std::string netpbm_header(char kind, std::size_t width, std::size_t height) {
  return std::string("P") + kind + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
}

}  // namespace

Tensor<float> read_ppm(const std::filesystem::path& path) {
  const Netpbm img = read_netpbm(path, '6', 3);
  const std::size_t plane = img.width * img.height;
  Tensor<float> out({1, 3, img.height, img.width});
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = static_cast<float>(img.pixels[i * 3 + c]) / 255.0f;
  }
  return out;
}

void write_ppm(const Tensor<float>& image, const std::filesystem::path& path) {
  require_rank4(image, "PPM image");
  if (image.dim(0) != 1 || image.dim(1) != 3) throw ShapeError("PPM output must be 1 x 3 x H x W");
  const std::size_t height = image.dim(2), width = image.dim(3), plane = height * width;
  std::vector<std::uint8_t> body(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::round(static_cast<double>(image[c * plane + i]) * 255.0);
      body[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  write_file(path, netpbm_header('6', width, height), body);
}

LabelMap read_label_pgm(const std::filesystem::path& path) {
  Netpbm img = read_netpbm(path, '5', 1);
  return {img.height, img.width, std::move(img.pixels)};
}

void write_label_pgm(const LabelMap& labels, const std::filesystem::path& path) {
  if (labels.values.size() != labels.height * labels.width) throw ShapeError("label map size mismatch");
  write_file(path, netpbm_header('5', labels.width, labels.height), labels.values);
}

void write_gray_pgm(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& pixels,
                    const std::filesystem::path& path) {
  if (pixels.size() != height * width) throw ShapeError("grayscale image size mismatch");
  write_file(path, netpbm_header('5', width, height), pixels);
}

}  // namespace epe

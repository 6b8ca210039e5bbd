#include "epe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "epe/error.hpp"
#include "epe/rng.hpp"

namespace epe {

void validate(const ToyDatasetSpec& spec) {
  if (spec.height == 0 || spec.width == 0 || spec.height % 32 != 0 || spec.width % 32 != 0) {
    throw ValueError("toy dataset extent must be a positive multiple of 32");
  }
  if (spec.num_classes < 2 || spec.num_classes > 255) throw ValueError("toy dataset needs 2..255 classes");
  if (spec.min_shapes > spec.max_shapes) throw ValueError("min_shapes exceeds max_shapes");
  if (spec.texture_amplitude < 0.0 || spec.texture_amplitude > 1.0) throw ValueError("texture amplitude must be in [0, 1]");
}

namespace {

enum class ShapeKind { rectangle, ellipse, triangle };

struct Color {
  double rgb[3];
};

Color class_color(std::size_t cls, std::size_t num_classes) {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(cls - 1) / static_cast<double>(num_classes - 1);
  Color c{};
  for (int ch = 0; ch < 3; ++ch) c.rgb[ch] = 0.5 + 0.25 * std::cos(angle - 2.0 * std::numbers::pi * ch / 3.0);
  return c;
}

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

}  // namespace

SegSample generate_toy_sample(const ToyDatasetSpec& spec, std::size_t index) {
  validate(spec);
  Rng rng(mix_seed(spec.seed, index));
  const std::size_t height = spec.height, width = spec.width, plane = height * width;

  SegSample sample;
  sample.id = "toy_" + std::to_string(index);
  sample.image = Tensor<float>({1, 3, height, width});
  sample.label = LabelMap{height, width, std::vector<std::uint8_t>(plane, 0)};

  Color background{};
  for (double& v : background.rgb) v = 0.5 + rng.uniform(-0.05, 0.05);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    std::fill_n(sample.image.data() + ch * plane, plane, static_cast<float>(background.rgb[ch]));
  }

  const std::size_t shapes = spec.min_shapes + rng.below(spec.max_shapes - spec.min_shapes + 1);
  for (std::size_t s = 0; s < shapes; ++s) {
    const auto cls = static_cast<std::uint8_t>(1 + rng.below(spec.num_classes - 1));
    const auto kind = static_cast<ShapeKind>(rng.below(3));
    const double sh = rng.uniform(0.25, 0.6) * static_cast<double>(height);
    const double sw = rng.uniform(0.25, 0.6) * static_cast<double>(width);
    const double cy = rng.uniform(0.0, static_cast<double>(height));
    const double cx = rng.uniform(0.0, static_cast<double>(width));
    Color color = class_color(cls, spec.num_classes);
    for (double& v : color.rgb) v += rng.uniform(-0.04, 0.04);
    const bool textured = rng.uniform() < spec.texture_probability;
    // Triangle: apex at the top center, base along the bottom edge of the bounding box.
    const double ax = cx, ay = cy - sh / 2, bx = cx - sw / 2, by = cy + sh / 2, qx = cx + sw / 2, qy = by;

    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        bool inside = false;
        switch (kind) {
          case ShapeKind::rectangle:
            inside = std::abs(px - cx) <= sw / 2 && std::abs(py - cy) <= sh / 2;
            break;
          case ShapeKind::ellipse: {
            const double u = (px - cx) / (sw / 2), v = (py - cy) / (sh / 2);
            inside = u * u + v * v <= 1.0;
            break;
          }
          case ShapeKind::triangle: {
            const double e0 = edge(ax, ay, bx, by, px, py), e1 = edge(bx, by, qx, qy, px, py);
            const double e2 = edge(qx, qy, ax, ay, px, py);
            inside = (e0 <= 0 && e1 <= 0 && e2 <= 0) || (e0 >= 0 && e1 >= 0 && e2 >= 0);
            break;
          }
        }
        if (!inside) continue;
        // 16 evenly spaced luminance offsets spanning the texture amplitude.
        const double offset =
            textured ? spec.texture_amplitude * (static_cast<double>(rng.below(16)) / 15.0 - 0.5) : 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          sample.image[ch * plane + y * width + x] = static_cast<float>(std::clamp(color.rgb[ch] + offset, 0.0, 1.0));
        }
        sample.label.at(y, x) = cls;
      }
    }
  }
  return sample;
}

std::vector<SegSample> generate_toy_dataset(const ToyDatasetSpec& spec) {
  validate(spec);
  std::vector<SegSample> out;
  out.reserve(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) out.push_back(generate_toy_sample(spec, i));
  return out;
}

IngestResult ingest_folder(const std::filesystem::path& image_dir, const std::filesystem::path& label_dir) {
  namespace fs = std::filesystem;
  auto collect = [](const fs::path& dir, const char* ext) {
    if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
    std::map<std::string, fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ext) files[entry.path().stem().string()] = entry.path();
    }
    return files;
  };
  const auto images = collect(image_dir, ".ppm");
  const auto labels = collect(label_dir, ".pgm");

  IngestResult result;
  bool any_match = false;
  for (const auto& [id, image_path] : images) {
    const auto it = labels.find(id);
    if (it == labels.end()) continue;
    any_match = true;
    SegSample sample{read_ppm(image_path), read_label_pgm(it->second), id};
    if (sample.image.dim(2) != sample.label.height || sample.image.dim(3) != sample.label.width) {
      result.warnings.push_back("rejected '" + id + "': image " + std::to_string(sample.image.dim(2)) + "x" +
                                std::to_string(sample.image.dim(3)) + " vs label " +
                                std::to_string(sample.label.height) + "x" + std::to_string(sample.label.width));
      continue;
    }
    result.samples.push_back(std::move(sample));
  }
  if (!any_match) {
    throw IoError("no matching basenames between '" + image_dir.string() + "' and '" + label_dir.string() + "'");
  }
  return result;
}

void write_dataset(const std::vector<SegSample>& samples, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "labels");
  for (const auto& s : samples) {
    write_ppm(s.image, root / "images" / (s.id + ".ppm"));
    write_label_pgm(s.label, root / "labels" / (s.id + ".pgm"));
  }
}

}  // namespace epe

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "epe/image_io.hpp"
#include "epe/tensor.hpp"

namespace epe {

struct SegSample {
  Tensor<float> image;  // 1 x 3 x H x W in [0, 1]
  LabelMap label;       // H x W class ids or kIgnoreLabel
  std::string id;
};

/// Synthetic segmentation scenes: flat background (class 0) with 1-3 flat
/// geometric shapes, some carrying high-frequency luminance texture, so patch
/// entropy ranges from zero to several nats within one image.
struct ToyDatasetSpec {
  std::size_t num_samples = 64;
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t num_classes = 4;
  std::uint64_t seed = 1;
  double texture_amplitude = 0.5;
  double texture_probability = 0.5;
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 3;
};

void validate(const ToyDatasetSpec& spec);

/// Sample `index` of the dataset; a pure function of (spec, index).
SegSample generate_toy_sample(const ToyDatasetSpec& spec, std::size_t index);
std::vector<SegSample> generate_toy_dataset(const ToyDatasetSpec& spec);

struct IngestResult {
  std::vector<SegSample> samples;
  std::vector<std::string> warnings;
};

/// Pairs `<id>.ppm` images with `<id>.pgm` labels by basename, in lexicographic
/// order. Pairs whose sizes disagree are skipped with a warning.
IngestResult ingest_folder(const std::filesystem::path& image_dir, const std::filesystem::path& label_dir);

/// Writes samples as images/<id>.ppm and labels/<id>.pgm under `root`.
void write_dataset(const std::vector<SegSample>& samples, const std::filesystem::path& root);

}  // namespace epe

#include <doctest.h>

#include <fstream>

#include "epe/dataset.hpp"
#include "epe/entropy.hpp"
#include "epe/error.hpp"
#include "epe/image_io.hpp"
#include "epe/segnet.hpp"
#include "helpers.hpp"

using namespace epe;
namespace fs = std::filesystem;

namespace {

void write_bytes(const fs::path& path, const std::string& bytes) { std::ofstream(path, std::ios::binary) << bytes; }

ImageFormatError::Kind ppm_error(const fs::path& path) {
  try {
    (void)read_ppm(path);
  } catch (const ImageFormatError& e) {
    return e.kind();
  }
  FAIL("no error");
  return ImageFormatError::Kind::bad_header;
}

}  // namespace

TEST_CASE("ppm reading and writing") {
  const auto dir = testing::scratch_dir("ppm");
  write_bytes(dir / "white.ppm", "P6\n# comment\n2 2\n255\n" + std::string(12, '\xff'));
  const auto white = read_ppm(dir / "white.ppm");
  CHECK(white.shape() == Shape{1, 3, 2, 2});
  for (float v : white.values()) CHECK(v == 1.0f);

  Tensor<float> grid({1, 3, 3, 5});
  for (std::size_t i = 0; i < grid.numel(); ++i) grid[i] = static_cast<float>((i * 37) % 256) / 255.0f;
  write_ppm(grid, dir / "grid.ppm");
  CHECK(read_ppm(dir / "grid.ppm") == grid);

  Rng rng(1);
  const auto noise = testing::random_tensor<float>({1, 3, 4, 6}, rng, 0.0, 1.0);
  write_ppm(noise, dir / "noise.ppm");
  const auto back = read_ppm(dir / "noise.ppm");
  for (std::size_t i = 0; i < noise.numel(); ++i) CHECK(std::abs(back[i] - noise[i]) <= 1.0f / 510.0f + 1e-7f);

  write_bytes(dir / "short.ppm", "P6\n2 2\n255\n" + std::string(5, 'a'));
  write_bytes(dir / "magic.ppm", "P3\n2 2\n255\n" + std::string(12, 'a'));
  write_bytes(dir / "maxval.ppm", "P6\n2 2\n65535\n" + std::string(24, 'a'));
  CHECK(ppm_error(dir / "short.ppm") == ImageFormatError::Kind::truncated);
  CHECK(ppm_error(dir / "magic.ppm") == ImageFormatError::Kind::bad_magic);
  CHECK(ppm_error(dir / "maxval.ppm") == ImageFormatError::Kind::bad_maxval);
  CHECK_THROWS_AS(read_ppm(dir / "missing.ppm"), IoError);
}

TEST_CASE("label pgm round trip") {
  const auto dir = testing::scratch_dir("pgm");
  LabelMap labels{3, 4, {0, 1, 2, 3, 255, 0, 1, 2, 3, 255, 7, 0}};
  write_label_pgm(labels, dir / "l.pgm");
  CHECK(read_label_pgm(dir / "l.pgm") == labels);
  write_bytes(dir / "bad.pgm", "P5\n2 2\n15\n" + std::string(4, '\0'));
  CHECK_THROWS_AS(read_label_pgm(dir / "bad.pgm"), ImageFormatError);
}

TEST_CASE("toy dataset") {
  ToyDatasetSpec spec;
  spec.num_samples = 6;
  spec.height = 64;
  spec.width = 96;
  const auto a = generate_toy_dataset(spec), b = generate_toy_dataset(spec);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].image == generate_toy_sample(spec, i).image);
    CHECK(a[i].image.shape() == Shape{1, 3, 64, 96});
    for (float v : a[i].image.values()) REQUIRE((v >= 0.0f && v <= 1.0f));
    for (auto l : a[i].label.values) REQUIRE(l < spec.num_classes);
  }

  ToyDatasetSpec empty = spec;
  empty.min_shapes = empty.max_shapes = 0;
  const auto bg = generate_toy_sample(empty, 0);
  for (auto l : bg.label.values) CHECK(l == 0);
  for (double e : compute_entropy_map(bg.image, 32).values) CHECK(e == 0.0);

  ToyDatasetSpec textured = spec;
  textured.texture_probability = 1.0;
  textured.min_shapes = textured.max_shapes = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto map = compute_entropy_map(generate_toy_sample(textured, i).image, 32);
    CHECK(*std::max_element(map.values.begin(), map.values.end()) > 1.0);
    CHECK(*std::min_element(map.values.begin(), map.values.end()) < 0.1);
  }

  ToyDatasetSpec bad = spec;
  bad.height = 50;
  CHECK_THROWS_AS(validate(bad), ValueError);
  bad = spec;
  bad.num_classes = 1;
  CHECK_THROWS_AS(validate(bad), ValueError);
}

TEST_CASE("folder ingestion") {
  const auto dir = testing::scratch_dir("ingest");
  ToyDatasetSpec spec;
  spec.num_samples = 3;
  spec.height = spec.width = 32;
  auto samples = generate_toy_dataset(spec);
  write_dataset(samples, dir);
  auto ok = ingest_folder(dir / "images", dir / "labels");
  REQUIRE(ok.samples.size() == 3);
  CHECK(ok.samples[0].id == "toy_0");
  CHECK(ok.samples[2].id == "toy_2");
  CHECK(ok.warnings.empty());
  CHECK(ok.samples[1].label == samples[1].label);

  write_label_pgm(LabelMap{16, 16, std::vector<std::uint8_t>(256, 0)}, dir / "labels" / "toy_1.pgm");
  auto partial = ingest_folder(dir / "images", dir / "labels");
  CHECK(partial.samples.size() == 2);
  REQUIRE(partial.warnings.size() == 1);
  CHECK(partial.warnings[0].find("toy_1") != std::string::npos);

  // Ingestion itself does not require patch-divisible sizes.
  const auto odd = testing::scratch_dir("ingest_odd");
  fs::create_directories(odd / "images");
  fs::create_directories(odd / "labels");
  write_ppm(Tensor<float>({1, 3, 20, 30}), odd / "images" / "a.ppm");
  write_label_pgm(LabelMap{20, 30, std::vector<std::uint8_t>(600, 1)}, odd / "labels" / "a.pgm");
  CHECK(ingest_folder(odd / "images", odd / "labels").samples.size() == 1);

  const auto none = testing::scratch_dir("ingest_none");
  fs::create_directories(none / "images");
  fs::create_directories(none / "labels");
  CHECK_THROWS(ingest_folder(none / "images", none / "labels"));
}

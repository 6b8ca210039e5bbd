#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>

#include "epe/dataset.hpp"
#include "epe/segnet.hpp"
#include "epe/trainer.hpp"

namespace epe {

/// `key = value` lines; `#` starts a comment. Keys outside `allowed` are rejected
/// with the offending line number.
std::map<std::string, std::string> parse_key_values(std::istream& in, const std::vector<std::string>& allowed);

/// Everything a training or evaluation run needs. Real data directories, when set,
/// replace the generated toy dataset.
struct RunConfig {
  TrainConfig train;
  std::size_t host_width = 8;
  std::size_t num_classes = 4;
  ToyDatasetSpec toy_train{64, 128, 128, 4, 1};
  ToyDatasetSpec toy_val{16, 128, 128, 4, 2};
  std::optional<std::filesystem::path> train_images, train_labels, val_images, val_labels;

  ModelConfig model(ModelKind kind) const { return {kind, host_width, num_classes, train.patch_size}; }
};

const std::vector<std::string>& run_config_keys();

/// Applies parsed keys on top of `base`.
RunConfig apply_run_config(const std::map<std::string, std::string>& values, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace epe

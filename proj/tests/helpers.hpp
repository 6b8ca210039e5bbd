#pragma once

#include <filesystem>
#include <string>

#include "epe/rng.hpp"
#include "epe/tensor.hpp"

namespace testing {

template <typename T = double>
epe::Tensor<T> random_tensor(epe::Shape shape, epe::Rng& rng, double lo = -1.0, double hi = 1.0) {
  epe::Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("epe_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing

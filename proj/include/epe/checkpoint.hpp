#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "epe/nn.hpp"

namespace epe {

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

/// Layout: "EPE1", u32 tensor count, then per tensor: u32 name length, name bytes,
/// u32 rank, u32 extents, raw float32 values. All integers and floats little-endian.
void save_checkpoint(const ParamRegistry<float>& registry, const std::filesystem::path& path);

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Copies loaded tensors into the registry's parameters and buffers by name.
/// Every registry entry must be present with an identical shape.
void apply_checkpoint(ParamRegistry<float>& registry, const std::vector<NamedTensor>& tensors);

}  // namespace epe

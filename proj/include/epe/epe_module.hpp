#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "epe/entropy.hpp"
#include "epe/nn.hpp"

namespace epe {

struct EncoderConfig {
  std::size_t channels = 16;
  std::size_t num_blocks = 6;
  std::size_t kernel = 3;
};

/// Fully convolutional per-patch encoder: 1x1 lift to `channels`, a stack of
/// residual blocks, 1x1 projection back to one channel. Maps M x 1 x n x n to
/// M x 1 x n x n for any M, including 0.
template <typename T>
class PatchEncoder {
 public:
  PatchEncoder(ParamRegistry<T>& registry, const std::string& name, const EncoderConfig& config,
               std::size_t patch_size);

  Var<T> forward(const Var<T>& group, Mode mode) const;
  FlopCount flops(const Shape& input) const;

  const EncoderConfig& config() const noexcept { return config_; }
  const std::string& name() const noexcept { return name_; }

  Conv2d<T> lift;
  std::vector<ResidualBlock<T>> blocks;
  Conv2d<T> project;

 private:
  std::string name_;
  EncoderConfig config_;
  std::size_t patch_size_;
};

struct EpeConfig {
  std::size_t patch_size = 32;
  std::array<std::size_t, 3> channels{16, 8, 4};  // large, medium, small
  std::size_t num_blocks = 6;
  std::size_t host_channels = 8;
  std::size_t num_classes = 4;
  std::size_t recon_width = 16;
  GroupFractions fractions;
};

/// Patches of a batch regrouped per encoder. `sources[k][j]` is the (sample, patch)
/// position of row j of `groups[k]`.
template <typename T>
struct PatchGroups {
  std::array<Tensor<T>, 3> groups;
  std::array<std::vector<std::pair<std::size_t, std::size_t>>, 3> sources;
};

/// Stacks each group's patches as independent single-channel samples, in the
/// plan's ascending patch order, sample by sample.
template <typename T>
PatchGroups<T> gather_groups(const Tensor<T>& patches, std::span<const RoutingPlan> plans);

/// Writes encoder outputs back to their source patch positions and folds them to
/// N x 1 x H x W. Differentiable with respect to the group outputs.
template <typename T>
Var<T> scatter_fold(const std::array<Var<T>, 3>& outputs, const PatchGroups<T>& layout, std::size_t batch,
                    std::size_t height, std::size_t width);

template <typename T>
struct EpeOutput {
  Var<T> feature;                  // N x 1 x H x W
  std::vector<RoutingPlan> plans;  // one per image
};

struct EpeCostReport {
  std::size_t params_total = 0;
  std::array<std::size_t, 3> params_per_encoder{};
  std::size_t patch_count = 0;
  std::array<std::size_t, 3> group_sizes{};
  std::array<std::uint64_t, 3> flops_per_patch{};
  std::uint64_t flops_routed = 0;
  std::uint64_t flops_uniform_large = 0;

  double flop_ratio() const {
    return flops_uniform_large ? static_cast<double>(flops_routed) / static_cast<double>(flops_uniform_large) : 0.0;
  }
};

/// Entropy-routed patch encoders plus the pieces that attach them to a host
/// segmentation model: post-concatenation batch norm, a 1x1 classifier, and the
/// train-time reconstruction head.
template <typename T>
class EpeModule {
 public:
  EpeModule(ParamRegistry<T>& registry, const EpeConfig& config, const std::string& prefix = "epe");

  /// Routes each image's patches by entropy rank and encodes them; `images` is N x 3 x H x W.
  EpeOutput<T> forward(const Tensor<T>& images, Mode mode) const;
  /// Same, with routing plans supplied by the caller.
  Var<T> forward_with_plans(const Tensor<T>& images, std::span<const RoutingPlan> plans, Mode mode) const;

  /// Runs encoder k (0 = large, 1 = medium, 2 = small) on a g x 1 x n x n group.
  Var<T> encode_group(std::size_t k, const Var<T>& group, Mode mode) const;

  /// concat(host, epe) -> batch norm -> 1x1 conv, giving per-pixel class logits.
  Var<T> integrate(const Var<T>& host_features, const Var<T>& epe_feature, Mode mode) const;

  /// Three 3x3 convs (relu, relu, linear) from the EPE feature to an RGB estimate.
  Var<T> reconstruct(const Var<T>& epe_feature) const;

  EpeCostReport cost_report(const ParamRegistry<T>& registry, std::size_t height, std::size_t width) const;

  const EpeConfig& config() const noexcept { return config_; }
  const std::string& prefix() const noexcept { return prefix_; }

  std::vector<PatchEncoder<T>> encoders;
  std::array<Conv2d<T>, 3> recon;
  BatchNorm2d<T> post_concat_bn;
  Conv2d<T> final_conv;

 private:
  EpeConfig config_;
  std::string prefix_;
};

extern template class PatchEncoder<float>;
extern template class PatchEncoder<double>;
extern template class EpeModule<float>;
extern template class EpeModule<double>;

}  // namespace epe

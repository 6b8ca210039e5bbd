#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "epe/tensor.hpp"

namespace epe {

inline constexpr int kQuantLevels = 32;

/// Center of quantization level k on the [0, 1] grayscale axis.
constexpr double level_center(int k) noexcept { return (k + 0.5) / kQuantLevels; }

/// BT.601 luma of an N x 3 x H x W image, giving N x 1 x H x W.
template <typename T>
Tensor<T> to_grayscale(const Tensor<T>& image);

/// Maps grayscale values in [0, 1] to levels 0..31 as min(floor(32 v), 31).
/// Values up to 1e-6 outside the unit interval are clamped; anything further is rejected.
template <typename T>
std::vector<int> quantize(std::span<const T> values);

/// Shannon entropy (nats) of a patch's quantized grayscale distribution, estimated
/// with a Gaussian KDE (Silverman bandwidth) evaluated at the 32 level centers and
/// renormalized. A patch occupying a single level has entropy exactly 0.
template <typename T>
double patch_entropy(std::span<const T> patch);

struct EntropyMap {
  std::vector<double> values;  // indexed by patch id, row-major over the grid
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t patch_size = 0;

  std::size_t size() const noexcept { return values.size(); }
};

/// Entropy of every n x n patch of a 1 x 3 x H x W image.
template <typename T>
EntropyMap compute_entropy_map(const Tensor<T>& image, std::size_t n);

/// Same, starting from sample `index` of an N x 1 x H x W grayscale batch.
template <typename T>
EntropyMap entropy_map_from_gray(const Tensor<T>& gray, std::size_t index, std::size_t n);

struct GroupFractions {
  double high = 0.2;
  double mid = 0.4;
  double low = 0.4;
};

/// Group sizes for P patches: floor(high P), floor(mid P), and the remainder.
std::array<std::size_t, 3> group_sizes(std::size_t patch_count, const GroupFractions& fractions = {});

/// Three disjoint patch-index groups covering 0..P-1, each in ascending index order.
struct RoutingPlan {
  std::array<std::vector<std::size_t>, 3> groups;  // high, mid, low
  GroupFractions fractions;
  std::size_t patch_count = 0;

  const std::vector<std::size_t>& high() const noexcept { return groups[0]; }
  const std::vector<std::size_t>& mid() const noexcept { return groups[1]; }
  const std::vector<std::size_t>& low() const noexcept { return groups[2]; }

  /// Group (0 = high, 1 = mid, 2 = low) of every patch.
  std::vector<int> assignment() const;

  bool operator==(const RoutingPlan& other) const {
    return groups == other.groups && patch_count == other.patch_count;
  }
};

/// Ranks patches by (entropy descending, index ascending) and cuts the ranking
/// into high / mid / low groups.
RoutingPlan partition_patches(std::span<const double> entropies, const GroupFractions& fractions = {});
RoutingPlan partition_patches(const EntropyMap& map, const GroupFractions& fractions = {});

}  // namespace epe

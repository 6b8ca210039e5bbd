#include "epe/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "epe/error.hpp"

namespace epe {

template <typename T>
Tensor<T> to_grayscale(const Tensor<T>& image) {
  require_rank4(image, "grayscale input");
  if (image.dim(1) != 3) {
    throw ShapeError("grayscale conversion needs 3 channels, got " + shape_to_string(image.shape()));
  }
  const std::size_t batch = image.dim(0), plane = image.dim(2) * image.dim(3);
  Tensor<T> out({batch, 1, image.dim(2), image.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    const T* r = image.data() + n * 3 * plane;
    const T* g = r + plane;
    const T* b = g + plane;
    T* dst = out.data() + n * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = static_cast<T>(0.299 * static_cast<double>(r[i]) + 0.587 * static_cast<double>(g[i]) +
                              0.114 * static_cast<double>(b[i]));
    }
  }
  return out;
}

template <typename T>
std::vector<int> quantize(std::span<const T> values) {
  constexpr double slack = 1e-6;
  std::vector<int> levels(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = static_cast<double>(values[i]);
    if (!(v >= -slack && v <= 1.0 + slack)) {
      throw ValueError("grayscale value " + std::to_string(v) + " at index " + std::to_string(i) +
                       " is outside [0, 1]");
    }
    const int level = static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * kQuantLevels));
    levels[i] = std::min(level, kQuantLevels - 1);
  }
  return levels;
}

template <typename T>
double patch_entropy(std::span<const T> patch) {
  const std::vector<int> levels = quantize(patch);
  std::array<double, kQuantLevels> counts{};
  for (int l : levels) counts[static_cast<std::size_t>(l)] += 1.0;

  const std::size_t occupied = static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](double c) {
    return c > 0.0;
  }));
  if (occupied <= 1) return 0.0;

  const double n = static_cast<double>(levels.size());
  double mean = 0.0;
  for (int k = 0; k < kQuantLevels; ++k) mean += counts[k] * level_center(k);
  mean /= n;
  double ss = 0.0;
  for (int k = 0; k < kQuantLevels; ++k) {
    const double d = level_center(k) - mean;
    ss += counts[k] * d * d;
  }
  const double sigma = std::sqrt(ss / (n - 1.0));
  const double bandwidth = 1.06 * sigma * std::pow(n, -0.2);

  // Samples sharing a level contribute identical kernel terms, so the KDE sum runs
  // over occupied levels weighted by their counts. Constant factors cancel in the
  // renormalization below.
  std::array<double, kQuantLevels> density{};
  for (int j = 0; j < kQuantLevels; ++j) {
    double acc = 0.0;
    for (int k = 0; k < kQuantLevels; ++k) {
      if (counts[k] == 0.0) continue;
      const double u = (level_center(j) - level_center(k)) / bandwidth;
      acc += counts[k] * std::exp(-0.5 * u * u);
    }
    density[j] = acc;
  }
  const double total = std::accumulate(density.begin(), density.end(), 0.0);
  double entropy = 0.0;
  for (double d : density) {
    // Tail densities can underflow to zero after the division.
    const double p = d / total;
    if (p <= 0.0) continue;
    entropy -= p * std::log(p);
  }
  return std::max(entropy, 0.0);
}

template <typename T>
EntropyMap entropy_map_from_gray(const Tensor<T>& gray, std::size_t index, std::size_t n) {
  require_rank4(gray, "entropy map input");
  if (gray.dim(1) != 1) throw ShapeError("entropy map expects grayscale input, got " + shape_to_string(gray.shape()));
  if (index >= gray.dim(0)) throw ValueError("sample index out of range");
  const std::size_t height = gray.dim(2), width = gray.dim(3), plane = height * width;
  Tensor<T> single({1, 1, height, width},
                   std::vector<T>(gray.data() + index * plane, gray.data() + (index + 1) * plane));
  const Tensor<T> patches = unfold(single, n);
  EntropyMap map;
  map.grid_h = height / n;
  map.grid_w = width / n;
  map.patch_size = n;
  const std::size_t count = patches.dim(1), area = n * n;
  map.values.resize(count);
  for (std::size_t p = 0; p < count; ++p) {
    map.values[p] = patch_entropy(std::span<const T>(patches.data() + p * area, area));
  }
  return map;
}

template <typename T>
EntropyMap compute_entropy_map(const Tensor<T>& image, std::size_t n) {
  require_rank4(image, "entropy map image");
  if (image.dim(0) != 1) throw ShapeError("entropy map expects a single image, got " + shape_to_string(image.shape()));
  return entropy_map_from_gray(to_grayscale(image), 0, n);
}

std::array<std::size_t, 3> group_sizes(std::size_t patch_count, const GroupFractions& fractions) {
  if (fractions.high < 0 || fractions.mid < 0 || fractions.low < 0 ||
      fractions.high + fractions.mid + fractions.low > 1.0 + 1e-9) {
    throw ValueError("group fractions must be non-negative and sum to at most 1");
  }
  // The small offset keeps products such as 0.2 * 5 from flooring just below an integer.
  const double p = static_cast<double>(patch_count);
  const auto high = static_cast<std::size_t>(std::floor(fractions.high * p + 1e-9));
  const auto mid = std::min(patch_count - high, static_cast<std::size_t>(std::floor(fractions.mid * p + 1e-9)));
  return {high, mid, patch_count - high - mid};
}

std::vector<int> RoutingPlan::assignment() const {
  std::vector<int> out(patch_count, -1);
  for (int k = 0; k < 3; ++k) {
    for (auto p : groups[static_cast<std::size_t>(k)]) out[p] = k;
  }
  return out;
}

RoutingPlan partition_patches(std::span<const double> entropies, const GroupFractions& fractions) {
  const std::size_t count = entropies.size();
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return entropies[a] > entropies[b]; });
  const auto sizes = group_sizes(count, fractions);
  RoutingPlan plan;
  plan.fractions = fractions;
  plan.patch_count = count;
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    auto& group = plan.groups[k];
    group.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                 order.begin() + static_cast<std::ptrdiff_t>(cursor + sizes[k]));
    std::sort(group.begin(), group.end());
    cursor += sizes[k];
  }
  return plan;
}

RoutingPlan partition_patches(const EntropyMap& map, const GroupFractions& fractions) {
  return partition_patches(std::span<const double>(map.values), fractions);
}

template Tensor<float> to_grayscale(const Tensor<float>&);
template Tensor<double> to_grayscale(const Tensor<double>&);
template std::vector<int> quantize(std::span<const float>);
template std::vector<int> quantize(std::span<const double>);
template double patch_entropy(std::span<const float>);
template double patch_entropy(std::span<const double>);
template EntropyMap entropy_map_from_gray(const Tensor<float>&, std::size_t, std::size_t);
template EntropyMap entropy_map_from_gray(const Tensor<double>&, std::size_t, std::size_t);
template EntropyMap compute_entropy_map(const Tensor<float>&, std::size_t);
template EntropyMap compute_entropy_map(const Tensor<double>&, std::size_t);

}  // namespace epe

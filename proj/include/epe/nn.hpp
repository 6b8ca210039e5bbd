#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "epe/ops.hpp"

namespace epe {

enum class Mode { train, eval };

enum class InitKind { kaiming_uniform, zeros, ones };

template <typename T>
struct ParamEntry {
  std::string name;
  Var<T> var;
  InitKind init;
  std::size_t fan_in;
};

/// Non-trainable layer state (batch-norm running statistics).
template <typename T>
struct BufferEntry {
  std::string name;
  Var<T> var;
  T initial;
};

/// Ordered collection of every tensor a model owns. Iteration order is the
/// construction order, which fixes both initialization and checkpoint layout.
template <typename T>
class ParamRegistry {
 public:
  Var<T> add_parameter(const std::string& name, Shape shape, InitKind init, std::size_t fan_in = 0);
  Var<T> add_buffer(const std::string& name, Shape shape, T initial);

  const std::vector<ParamEntry<T>>& parameters() const noexcept { return params_; }
  const std::vector<BufferEntry<T>>& buffers() const noexcept { return buffers_; }

  /// Parameters followed by buffers, as (name, node) pairs.
  std::vector<std::pair<std::string, Var<T>>> state() const;

  void zero_grad();
  std::uint64_t seed() const noexcept { return seed_; }
  void set_seed(std::uint64_t seed) noexcept { seed_ = seed; }

 private:
  void require_unique(const std::string& name) const;

  std::vector<ParamEntry<T>> params_;
  std::vector<BufferEntry<T>> buffers_;
  std::uint64_t seed_ = 0;
};

/// Kaiming-uniform conv weights (bound sqrt(6 / fan_in)), zero biases, BN gamma 1 and
/// beta 0, running stats reset. Fully determined by `seed` and registration order.
template <typename T>
void init_params(ParamRegistry<T>& registry, std::uint64_t seed);

template <typename T>
std::size_t count_params(const ParamRegistry<T>& registry);

/// Parameters whose name starts with `prefix`.
template <typename T>
std::size_t count_params(const ParamRegistry<T>& registry, const std::string& prefix);

/// Analytic cost of a forward pass: conv multiply-accumulates plus one op per
/// element for batch norm and relu.
struct FlopCount {
  std::uint64_t ops = 0;
  Shape output;
};

template <typename T>
class Conv2d {
 public:
  Conv2d(ParamRegistry<T>& registry, const std::string& name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel, Conv2dParams params = {}, bool with_bias = true);

  Var<T> forward(const Var<T>& x) const;
  FlopCount flops(const Shape& input) const;

  std::size_t in_channels() const noexcept { return in_channels_; }
  std::size_t out_channels() const noexcept { return out_channels_; }
  const Conv2dParams& params() const noexcept { return params_; }

  Var<T> weight;
  Var<T> bias;

 private:
  std::size_t in_channels_, out_channels_, kernel_;
  Conv2dParams params_;
};

/// Depthwise (groups = C_in) K x K convolution followed by a pointwise 1 x 1 convolution.
template <typename T>
class DwSepConv {
 public:
  DwSepConv(ParamRegistry<T>& registry, const std::string& name, std::size_t in_channels, std::size_t out_channels,
            std::size_t kernel = 3, std::size_t stride = 1, std::size_t padding = 1);

  Var<T> forward(const Var<T>& x) const;
  FlopCount flops(const Shape& input) const;

  Conv2d<T> depthwise;
  Conv2d<T> pointwise;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d(ParamRegistry<T>& registry, const std::string& name, std::size_t channels, T momentum = T(0.1),
              T eps = T(1e-5));

  /// Train mode normalizes by the biased batch statistics and updates the running
  /// statistics; eval mode uses the running statistics.
  Var<T> forward(const Var<T>& x, Mode mode) const;
  FlopCount flops(const Shape& input) const;

  std::size_t channels() const noexcept { return channels_; }
  T momentum() const noexcept { return momentum_; }
  T eps() const noexcept { return eps_; }

  Var<T> gamma;
  Var<T> beta;
  Var<T> running_mean;
  Var<T> running_var;

 private:
  std::size_t channels_;
  T momentum_;
  T eps_;
};

/// relu(BN(dwsep(relu(BN(dwsep(x))))) + skip(x)); skip is a 1 x 1 projection when
/// the channel count changes.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock(ParamRegistry<T>& registry, const std::string& name, std::size_t in_channels,
                std::size_t out_channels, std::size_t kernel = 3);

  Var<T> forward(const Var<T>& x, Mode mode) const;
  FlopCount flops(const Shape& input) const;

  DwSepConv<T> conv1;
  BatchNorm2d<T> bn1;
  DwSepConv<T> conv2;
  BatchNorm2d<T> bn2;
  std::optional<Conv2d<T>> projection;

 private:
  std::size_t in_channels_;
};

/// Analytic op count of `layer` for `input_shape`.
template <typename Layer>
std::uint64_t count_flops(const Layer& layer, const Shape& input_shape) {
  return layer.flops(input_shape).ops;
}

}  // namespace epe

#pragma once

#include <cstddef>

#include "epe/autograd.hpp"

namespace epe {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);
/// max(x, 0); the derivative at 0 is taken as 0.
template <typename T>
Var<T> relu(const Var<T>& a);
/// Single-element sum of all entries.
template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> mean(const Var<T>& a);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Cross-correlation over NCHW input with a (C_out, C_in/groups, K, K) kernel.
/// `bias` may be null.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, Conv2dParams params = {});

/// Output extent of a convolution along one axis; throws when it would be < 1.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Channels of `a` followed by those of `b`.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

}  // namespace epe

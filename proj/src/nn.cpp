#include "epe/nn.hpp"

#include <cmath>

#include "epe/error.hpp"
#include "epe/rng.hpp"

namespace epe {

template <typename T>
void ParamRegistry<T>::require_unique(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) throw ValueError("duplicate parameter name '" + name + "'");
  }
  for (const auto& b : buffers_) {
    if (b.name == name) throw ValueError("duplicate buffer name '" + name + "'");
  }
}

template <typename T>
Var<T> ParamRegistry<T>::add_parameter(const std::string& name, Shape shape, InitKind init, std::size_t fan_in) {
  require_unique(name);
  T fill = init == InitKind::ones ? T{1} : T{0};
  auto var = leaf(Tensor<T>(std::move(shape), fill), true);
  params_.push_back({name, var, init, fan_in});
  return var;
}

template <typename T>
Var<T> ParamRegistry<T>::add_buffer(const std::string& name, Shape shape, T initial) {
  require_unique(name);
  auto var = leaf(Tensor<T>(std::move(shape), initial), false);
  buffers_.push_back({name, var, initial});
  return var;
}

template <typename T>
std::vector<std::pair<std::string, Var<T>>> ParamRegistry<T>::state() const {
  std::vector<std::pair<std::string, Var<T>>> out;
  out.reserve(params_.size() + buffers_.size());
  for (const auto& p : params_) out.emplace_back(p.name, p.var);
  for (const auto& b : buffers_) out.emplace_back(b.name, b.var);
  return out;
}

template <typename T>
void ParamRegistry<T>::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

template <typename T>
void init_params(ParamRegistry<T>& registry, std::uint64_t seed) {
  registry.set_seed(seed);
  Rng rng(seed);
  for (const auto& p : registry.parameters()) {
    Tensor<T>& value = p.var->value;
    switch (p.init) {
      case InitKind::kaiming_uniform: {
        if (p.fan_in == 0) throw ValueError("parameter '" + p.name + "' has no fan-in");
        const double bound = std::sqrt(6.0 / static_cast<double>(p.fan_in));
        for (auto& v : value.values()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case InitKind::zeros:
        value.fill(T{0});
        break;
      case InitKind::ones:
        value.fill(T{1});
        break;
    }
    p.var->zero_grad();
  }
  for (const auto& b : registry.buffers()) b.var->value.fill(b.initial);
}

template <typename T>
std::size_t count_params(const ParamRegistry<T>& registry) {
  std::size_t total = 0;
  for (const auto& p : registry.parameters()) total += p.var->value.numel();
  return total;
}

template <typename T>
std::size_t count_params(const ParamRegistry<T>& registry, const std::string& prefix) {
  std::size_t total = 0;
  for (const auto& p : registry.parameters()) {
    if (p.name.starts_with(prefix)) total += p.var->value.numel();
  }
  return total;
}

namespace {

Shape require_image_shape(const Shape& input, std::size_t channels, const char* layer) {
  if (input.size() != 4) throw ShapeError(std::string(layer) + ": expected NCHW shape, got " + shape_to_string(input));
  if (input[1] != channels) {
    throw ShapeError(std::string(layer) + ": expected " + std::to_string(channels) + " channels, got " +
                     shape_to_string(input));
  }
  return input;
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(ParamRegistry<T>& registry, const std::string& name, std::size_t in_channels,
                  std::size_t out_channels, std::size_t kernel, Conv2dParams params, bool with_bias)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), params_(params) {
  if (params.groups == 0 || in_channels % params.groups != 0 || out_channels % params.groups != 0) {
    throw ShapeError(name + ": channels " + std::to_string(in_channels) + "->" + std::to_string(out_channels) +
                     " incompatible with groups " + std::to_string(params.groups));
  }
  const std::size_t per_group = in_channels / params.groups;
  weight = registry.add_parameter(name + ".weight", {out_channels, per_group, kernel, kernel},
                                  InitKind::kaiming_uniform, per_group * kernel * kernel);
  if (with_bias) bias = registry.add_parameter(name + ".bias", {out_channels}, InitKind::zeros);
}

template <typename T>
Var<T> Conv2d<T>::forward(const Var<T>& x) const {
  require_rank4(x->value, "conv input");
  if (x->value.dim(1) != in_channels_) {
    throw ShapeError("conv expects " + std::to_string(in_channels_) + " input channels, got " +
                     shape_to_string(x->value.shape()));
  }
  return conv2d(x, weight, bias, params_);
}

template <typename T>
FlopCount Conv2d<T>::flops(const Shape& input) const {
  require_image_shape(input, in_channels_, "conv");
  const std::size_t oh = conv_output_extent(input[2], kernel_, params_.stride, params_.padding);
  const std::size_t ow = conv_output_extent(input[3], kernel_, params_.stride, params_.padding);
  const std::uint64_t macs = static_cast<std::uint64_t>(input[0]) * out_channels_ * oh * ow *
                             (in_channels_ / params_.groups) * kernel_ * kernel_;
  return {macs, {input[0], out_channels_, oh, ow}};
}

template <typename T>
DwSepConv<T>::DwSepConv(ParamRegistry<T>& registry, const std::string& name, std::size_t in_channels,
                        std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t padding)
    : depthwise(registry, name + ".depthwise", in_channels, in_channels, kernel, {stride, padding, in_channels}),
      pointwise(registry, name + ".pointwise", in_channels, out_channels, 1) {}

template <typename T>
Var<T> DwSepConv<T>::forward(const Var<T>& x) const {
  return pointwise.forward(depthwise.forward(x));
}

template <typename T>
FlopCount DwSepConv<T>::flops(const Shape& input) const {
  const FlopCount dw = depthwise.flops(input);
  const FlopCount pw = pointwise.flops(dw.output);
  return {dw.ops + pw.ops, pw.output};
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(ParamRegistry<T>& registry, const std::string& name, std::size_t channels, T momentum,
                            T eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  if (!(eps > T{0})) throw ValueError(name + ": eps must be positive");
  gamma = registry.add_parameter(name + ".gamma", {channels}, InitKind::ones);
  beta = registry.add_parameter(name + ".beta", {channels}, InitKind::zeros);
  running_mean = registry.add_buffer(name + ".running_mean", {channels}, T{0});
  running_var = registry.add_buffer(name + ".running_var", {channels}, T{1});
}

template <typename T>
Var<T> BatchNorm2d<T>::forward(const Var<T>& x, Mode mode) const {
  const Tensor<T>& in = x->value;
  require_rank4(in, "batch norm input");
  if (in.dim(1) != channels_) {
    throw ShapeError("batch norm expects " + std::to_string(channels_) + " channels, got " +
                     shape_to_string(in.shape()));
  }
  const std::size_t batch = in.dim(0), channels = channels_, plane = in.dim(2) * in.dim(3);
  const std::size_t count = batch * plane;
  const bool use_batch_stats = mode == Mode::train;

  // Per-channel normalization: inv_std and the normalized input are kept for backward.
  std::vector<T> inv_std(channels);
  Tensor<T> normalized(in.shape());
  Tensor<T> out(in.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    T mu, var;
    if (use_batch_stats) {
      if (count == 0) {
        inv_std[c] = T{1} / std::sqrt(T{1} + eps_);
        continue;
      }
      double s = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* src = in.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += src[i];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* src = in.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = src[i] - m;
          ss += d * d;
        }
      }
      mu = static_cast<T>(m);
      var = static_cast<T>(ss / static_cast<double>(count));
      T& rm = running_mean->value[c];
      T& rv = running_var->value[c];
      rm = (T{1} - momentum_) * rm + momentum_ * mu;
      rv = (T{1} - momentum_) * rv + momentum_ * var;
    } else {
      mu = running_mean->value[c];
      var = running_var->value[c];
    }
    const T istd = T{1} / std::sqrt(var + eps_);
    inv_std[c] = istd;
    const T g = gamma->value[c], b = beta->value[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels + c) * plane;
      const T* src = in.data() + off;
      T* xh = normalized.data() + off;
      T* dst = out.data() + off;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mu) * istd;
        dst[i] = g * xh[i] + b;
      }
    }
  }

  return make_node<T>(
      std::move(out), {x, gamma, beta},
      [inv_std = std::move(inv_std), normalized = std::move(normalized), batch, channels, plane,
       use_batch_stats](Node<T>& self) {
        Node<T>& input = *self.parents[0];
        Node<T>& gm = *self.parents[1];
        Node<T>& bt = *self.parents[2];
        const std::size_t count = batch * plane;
        if (count == 0) return;
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_dy = 0.0, sum_dy_xh = 0.0;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t off = (n * channels + c) * plane;
            const T* dy = self.grad.data() + off;
            const T* xh = normalized.data() + off;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += dy[i];
              sum_dy_xh += static_cast<double>(dy[i]) * xh[i];
            }
          }
          if (gm.requires_grad) gm.grad_buffer()[c] += static_cast<T>(sum_dy_xh);
          if (bt.requires_grad) bt.grad_buffer()[c] += static_cast<T>(sum_dy);
          if (!input.requires_grad) continue;
          const T g = gm.value[c];
          const T k = g * inv_std[c];
          T* dx = input.grad_buffer().data();
          if (use_batch_stats) {
            const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(count));
            const T mean_dy_xh = static_cast<T>(sum_dy_xh / static_cast<double>(count));
            for (std::size_t n = 0; n < batch; ++n) {
              const std::size_t off = (n * channels + c) * plane;
              const T* dy = self.grad.data() + off;
              const T* xh = normalized.data() + off;
              for (std::size_t i = 0; i < plane; ++i) dx[off + i] += k * (dy[i] - mean_dy - xh[i] * mean_dy_xh);
            }
          } else {
            for (std::size_t n = 0; n < batch; ++n) {
              const std::size_t off = (n * channels + c) * plane;
              const T* dy = self.grad.data() + off;
              for (std::size_t i = 0; i < plane; ++i) dx[off + i] += k * dy[i];
            }
          }
        }
      });
}

template <typename T>
FlopCount BatchNorm2d<T>::flops(const Shape& input) const {
  require_image_shape(input, channels_, "batch norm");
  return {shape_numel(input), input};
}

template <typename T>
ResidualBlock<T>::ResidualBlock(ParamRegistry<T>& registry, const std::string& name, std::size_t in_channels,
                                std::size_t out_channels, std::size_t kernel)
    : conv1(registry, name + ".conv1", in_channels, out_channels, kernel, 1, kernel / 2),
      bn1(registry, name + ".bn1", out_channels),
      conv2(registry, name + ".conv2", out_channels, out_channels, kernel, 1, kernel / 2),
      bn2(registry, name + ".bn2", out_channels),
      in_channels_(in_channels) {
  if (in_channels != out_channels) projection.emplace(registry, name + ".projection", in_channels, out_channels, 1);
}

template <typename T>
Var<T> ResidualBlock<T>::forward(const Var<T>& x, Mode mode) const {
  require_rank4(x->value, "residual block input");
  if (x->value.dim(1) != in_channels_) {
    throw ShapeError("residual block expects " + std::to_string(in_channels_) + " channels, got " +
                     shape_to_string(x->value.shape()));
  }
  Var<T> h = relu(bn1.forward(conv1.forward(x), mode));
  h = bn2.forward(conv2.forward(h), mode);
  Var<T> skip = projection ? projection->forward(x) : x;
  return relu(add(h, skip));
}

template <typename T>
FlopCount ResidualBlock<T>::flops(const Shape& input) const {
  require_image_shape(input, in_channels_, "residual block");
  FlopCount c1 = conv1.flops(input);
  const std::uint64_t elems = shape_numel(c1.output);
  FlopCount c2 = conv2.flops(c1.output);
  // conv1 + bn1 + relu, conv2 + bn2, projection, final relu.
  std::uint64_t ops = c1.ops + 2 * elems + c2.ops + elems + elems;
  if (projection) ops += projection->flops(input).ops;
  return {ops, c2.output};
}

#define EPE_INSTANTIATE_NN(T)                                         \
  template class ParamRegistry<T>;                                    \
  template void init_params(ParamRegistry<T>&, std::uint64_t);        \
  template std::size_t count_params(const ParamRegistry<T>&);         \
  template std::size_t count_params(const ParamRegistry<T>&, const std::string&); \
  template class Conv2d<T>;                                           \
  template class DwSepConv<T>;                                        \
  template class BatchNorm2d<T>;                                      \
  template class ResidualBlock<T>;

EPE_INSTANTIATE_NN(float)
EPE_INSTANTIATE_NN(double)

}  // namespace epe

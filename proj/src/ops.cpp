#include "epe/ops.hpp"

#include <algorithm>

#include "epe/error.hpp"

namespace epe {

namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a->value.shape() != b->value.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a->value.shape()) + " vs " +
                     shape_to_string(b->value.shape()));
  }
}

template <typename T>
void accumulate(Node<T>& target, const Tensor<T>& delta, T factor = T{1}) {
  if (!target.requires_grad) return;
  T* g = target.grad_buffer().data();
  const T* d = delta.data();
  const std::size_t n = delta.numel();
  for (std::size_t i = 0; i < n; ++i) g[i] += factor * d[i];
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a->value;
  out += b->value;
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a->value;
  const T* bv = b->value.data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad, T{-1});
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a->value;
  const T* bv = b->value.data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    const std::size_t n = self.value.numel();
    if (pa.requires_grad) {
      T* g = pa.grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      T* g = pb.grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a->value;
  for (auto& v : out.values()) v *= factor;
  return make_node<T>(std::move(out), {a},
                      [factor](Node<T>& self) { accumulate(*self.parents[0], self.grad, factor); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a->value;
  for (auto& v : out.values()) v = v > T{0} ? v : T{0};
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    T* g = in.grad_buffer().data();
    const std::size_t n = self.value.numel();
    for (std::size_t i = 0; i < n; ++i) {
      if (in.value[i] > T{0}) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total{0};
  for (auto v : a->value.values()) total += v;
  return make_node<T>(Tensor<T>({1}, total), {a}, [](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    const T g0 = self.grad[0];
    for (auto& g : in.grad_buffer().values()) g += g0;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a->value.numel();
  if (n == 0) throw ValueError("mean of an empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(n));
}

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride, std::size_t padding) {
  const long long span = static_cast<long long>(input) + 2 * static_cast<long long>(padding) -
                         static_cast<long long>(kernel);
  if (span < 0) {
    throw ShapeError("convolution output extent is non-positive (input " + std::to_string(input) + ", kernel " +
                     std::to_string(kernel) + ", padding " + std::to_string(padding) + ")");
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel, out_height, out_width;
  std::size_t stride, padding, groups;
  std::size_t in_per_group, out_per_group;

  // Range of output columns [lo, hi) whose tap `kw` lands inside the input row.
  void column_range(std::size_t kw, std::size_t& lo, std::size_t& hi) const {
    const long long p = static_cast<long long>(padding), k = static_cast<long long>(kw);
    const long long s = static_cast<long long>(stride);
    long long first = p - k > 0 ? (p - k + s - 1) / s : 0;
    long long last = (static_cast<long long>(width) - 1 + p - k);
    last = last < 0 ? -1 : last / s;
    last = std::min<long long>(last, static_cast<long long>(out_width) - 1);
    lo = static_cast<std::size_t>(first);
    hi = last < first ? lo : static_cast<std::size_t>(last + 1);
  }
  // Input row for output row `oh` and tap `kh`, or -1 when it falls in the padding.
  long long input_row(std::size_t oh, std::size_t kh) const {
    const long long r = static_cast<long long>(oh * stride + kh) - static_cast<long long>(padding);
    return r < 0 || r >= static_cast<long long>(height) ? -1 : r;
  }
  long long input_col(std::size_t ow, std::size_t kw) const {
    return static_cast<long long>(ow * stride + kw) - static_cast<long long>(padding);
  }
};

template <typename T>
void conv_forward(const ConvGeometry& g, const T* in, const T* w, const T* b, T* out) {
  const std::size_t in_plane = g.height * g.width, out_plane = g.out_height * g.out_width;
  const std::size_t k2 = g.kernel * g.kernel;
  const bool pointwise = g.kernel == 1 && g.stride == 1 && g.padding == 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      T* dst = out + (n * g.out_channels + co) * out_plane;
      std::fill(dst, dst + out_plane, b ? b[co] : T{0});
      const std::size_t group = co / g.out_per_group;
      for (std::size_t cl = 0; cl < g.in_per_group; ++cl) {
        const std::size_t ci = group * g.in_per_group + cl;
        const T* src = in + (n * g.in_channels + ci) * in_plane;
        const T* wk = w + (co * g.in_per_group + cl) * k2;
        if (pointwise) {
          const T wv = wk[0];
#pragma omp simd
          for (std::size_t i = 0; i < out_plane; ++i) dst[i] += wv * src[i];
          continue;
        }
        for (std::size_t kh = 0; kh < g.kernel; ++kh) {
          for (std::size_t kw = 0; kw < g.kernel; ++kw) {
            const T wv = wk[kh * g.kernel + kw];
            std::size_t lo, hi;
            g.column_range(kw, lo, hi);
            for (std::size_t oh = 0; oh < g.out_height; ++oh) {
              const long long ih = g.input_row(oh, kh);
              if (ih < 0) continue;
              const T* srow = src + static_cast<std::size_t>(ih) * g.width;
              T* drow = dst + oh * g.out_width;
              if (g.stride == 1) {
                const T* s = srow + (lo + kw - g.padding);
                T* d = drow + lo;
                const std::size_t count = hi - lo;
#pragma omp simd
                for (std::size_t i = 0; i < count; ++i) d[i] += wv * s[i];
              } else {
                for (std::size_t ow = lo; ow < hi; ++ow) drow[ow] += wv * srow[g.input_col(ow, kw)];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward(const ConvGeometry& g, const T* in, const T* w, const T* gout, T* gin, T* gw, T* gb) {
  const std::size_t in_plane = g.height * g.width, out_plane = g.out_height * g.out_width;
  const std::size_t k2 = g.kernel * g.kernel;
  const bool pointwise = g.kernel == 1 && g.stride == 1 && g.padding == 0;
  if (gb) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      T acc{0};
      for (std::size_t n = 0; n < g.batch; ++n) {
        const T* src = gout + (n * g.out_channels + co) * out_plane;
#pragma omp simd reduction(+ : acc)
        for (std::size_t i = 0; i < out_plane; ++i) acc += src[i];
      }
      gb[co] += acc;
    }
  }
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const T* go = gout + (n * g.out_channels + co) * out_plane;
      const std::size_t group = co / g.out_per_group;
      for (std::size_t cl = 0; cl < g.in_per_group; ++cl) {
        const std::size_t ci = group * g.in_per_group + cl;
        const T* src = in + (n * g.in_channels + ci) * in_plane;
        T* gi = gin ? gin + (n * g.in_channels + ci) * in_plane : nullptr;
        const T* wk = w + (co * g.in_per_group + cl) * k2;
        T* gwk = gw ? gw + (co * g.in_per_group + cl) * k2 : nullptr;
        if (pointwise) {
          const T wv = wk[0];
          if (gi) {
#pragma omp simd
            for (std::size_t i = 0; i < out_plane; ++i) gi[i] += wv * go[i];
          }
          if (gwk) {
            T acc{0};
#pragma omp simd reduction(+ : acc)
            for (std::size_t i = 0; i < out_plane; ++i) acc += go[i] * src[i];
            gwk[0] += acc;
          }
          continue;
        }
        for (std::size_t kh = 0; kh < g.kernel; ++kh) {
          for (std::size_t kw = 0; kw < g.kernel; ++kw) {
            const T wv = wk[kh * g.kernel + kw];
            std::size_t lo, hi;
            g.column_range(kw, lo, hi);
            T acc{0};
            for (std::size_t oh = 0; oh < g.out_height; ++oh) {
              const long long ih = g.input_row(oh, kh);
              if (ih < 0) continue;
              const T* grow = go + oh * g.out_width;
              const std::size_t row_off = static_cast<std::size_t>(ih) * g.width;
              if (g.stride == 1) {
                const std::size_t start = row_off + lo + kw - g.padding;
                const std::size_t count = hi - lo;
                const T* s = src + start;
                const T* gr = grow + lo;
                if (gi) {
                  T* d = gi + start;
#pragma omp simd
                  for (std::size_t i = 0; i < count; ++i) d[i] += wv * gr[i];
                }
                T row_acc{0};
#pragma omp simd reduction(+ : row_acc)
                for (std::size_t i = 0; i < count; ++i) row_acc += gr[i] * s[i];
                acc += row_acc;
              } else {
                for (std::size_t ow = lo; ow < hi; ++ow) {
                  const std::size_t iw = static_cast<std::size_t>(g.input_col(ow, kw));
                  if (gi) gi[row_off + iw] += wv * grow[ow];
                  acc += grow[ow] * src[row_off + iw];
                }
              }
            }
            if (gwk) gwk[kh * g.kernel + kw] += acc;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, Conv2dParams params) {
  const Tensor<T>& x = input->value;
  const Tensor<T>& w = weight->value;
  require_rank4(x, "conv2d input");
  require_rank4(w, "conv2d weight");
  if (params.groups == 0 || params.stride == 0) throw ValueError("conv2d: groups and stride must be positive");
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel = w.dim(2);
  g.stride = params.stride;
  g.padding = params.padding;
  g.groups = params.groups;
  if (w.dim(3) != g.kernel || g.kernel == 0) {
    throw ShapeError("conv2d kernel must be square and non-empty, got " + shape_to_string(w.shape()));
  }
  if (g.in_channels % g.groups != 0 || g.out_channels % g.groups != 0) {
    throw ShapeError("conv2d: channels (in " + std::to_string(g.in_channels) + ", out " +
                     std::to_string(g.out_channels) + ") not divisible by groups " + std::to_string(g.groups));
  }
  g.in_per_group = g.in_channels / g.groups;
  g.out_per_group = g.out_channels / g.groups;
  if (w.dim(1) != g.in_per_group) {
    throw ShapeError("conv2d: weight " + shape_to_string(w.shape()) + " does not match input " +
                     shape_to_string(x.shape()) + " with groups " + std::to_string(g.groups));
  }
  if (bias && (bias->value.rank() != 1 || bias->value.dim(0) != g.out_channels)) {
    throw ShapeError("conv2d: bias " + shape_to_string(bias->value.shape()) + " does not match " +
                     std::to_string(g.out_channels) + " output channels");
  }
  g.out_height = conv_output_extent(g.height, g.kernel, g.stride, g.padding);
  g.out_width = conv_output_extent(g.width, g.kernel, g.stride, g.padding);

  Tensor<T> out({g.batch, g.out_channels, g.out_height, g.out_width});
  conv_forward(g, x.data(), w.data(), bias ? bias->value.data() : nullptr, out.data());

  std::vector<Var<T>> parents{input, weight};
  if (bias) parents.push_back(bias);
  return make_node<T>(std::move(out), std::move(parents), [g](Node<T>& self) {
    Node<T>& in = *self.parents[0];
    Node<T>& wt = *self.parents[1];
    Node<T>* bs = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    T* gin = in.requires_grad ? in.grad_buffer().data() : nullptr;
    T* gw = wt.requires_grad ? wt.grad_buffer().data() : nullptr;
    T* gb = bs && bs->requires_grad ? bs->grad_buffer().data() : nullptr;
    conv_backward(g, in.value.data(), wt.value.data(), self.grad.data(), gin, gw, gb);
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& x = a->value;
  const Tensor<T>& y = b->value;
  require_rank4(x, "concat_channels lhs");
  require_rank4(y, "concat_channels rhs");
  if (x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2) || x.dim(3) != y.dim(3)) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + shape_to_string(x.shape()) + " vs " +
                     shape_to_string(y.shape()));
  }
  const std::size_t batch = x.dim(0), ca = x.dim(1), cb = y.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<T> out({batch, ca + cb, x.dim(2), x.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(x.data() + n * ca * plane, ca * plane, out.data() + n * (ca + cb) * plane);
    std::copy_n(y.data() + n * cb * plane, cb * plane, out.data() + (n * (ca + cb) + ca) * plane);
  }
  return make_node<T>(std::move(out), {a, b}, [batch, ca, cb, plane](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    for (std::size_t n = 0; n < batch; ++n) {
      const T* g = self.grad.data() + n * (ca + cb) * plane;
      if (pa.requires_grad) {
        T* d = pa.grad_buffer().data() + n * ca * plane;
        for (std::size_t i = 0; i < ca * plane; ++i) d[i] += g[i];
      }
      if (pb.requires_grad) {
        T* d = pb.grad_buffer().data() + n * cb * plane;
        for (std::size_t i = 0; i < cb * plane; ++i) d[i] += g[ca * plane + i];
      }
    }
  });
}

#define EPE_INSTANTIATE_OPS(T)                                                   \
  template Var<T> add(const Var<T>&, const Var<T>&);                             \
  template Var<T> sub(const Var<T>&, const Var<T>&);                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                             \
  template Var<T> scale(const Var<T>&, T);                                       \
  template Var<T> relu(const Var<T>&);                                           \
  template Var<T> sum(const Var<T>&);                                            \
  template Var<T> mean(const Var<T>&);                                           \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, Conv2dParams); \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);

EPE_INSTANTIATE_OPS(float)
EPE_INSTANTIATE_OPS(double)

}  // namespace epe

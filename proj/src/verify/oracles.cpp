#include <cmath>
#include <numbers>

#include "epe/error.hpp"
#include "epe/verify.hpp"

namespace epe::verify {

double brute_force_patch_entropy(std::span<const double> patch) {
  constexpr int levels = 32;
  const std::size_t count = patch.size();
  std::vector<double> samples(count);
  for (std::size_t j = 0; j < count; ++j) {
    double v = patch[j];
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    int level = static_cast<int>(std::floor(v * levels));
    if (level > levels - 1) level = levels - 1;
    samples[j] = (level + 0.5) / levels;
  }
  bool constant = true;
  for (std::size_t j = 1; j < count; ++j) constant = constant && samples[j] == samples[0];
  if (count < 2 || constant) return 0.0;

  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(count);
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(count - 1);
  const double h = 1.06 * std::sqrt(var) * std::pow(static_cast<double>(count), -0.2);

  // p(x) = 1 / (n^2 h) * sum_j K((x - X_j) / h), standard normal K.
  const double norm = 1.0 / (static_cast<double>(count) * h);
  const double k0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double pdf[levels];
  double total = 0.0;
  for (int i = 0; i < levels; ++i) {
    const double x = (i + 0.5) / levels;
    double acc = 0.0;
    for (double s : samples) {
      const double u = (x - s) / h;
      acc += k0 * std::exp(-0.5 * u * u);
    }
    pdf[i] = norm * acc;
    total += pdf[i];
  }
  double entropy = 0.0;
  for (double d : pdf) {
    const double p = d / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return entropy;
}

Tensor<double> naive_conv2d(const Tensor<double>& input, const Tensor<double>& weight, const Tensor<double>* bias,
                            Conv2dParams params) {
  const std::size_t batch = input.dim(0), cin = input.dim(1), height = input.dim(2), width = input.dim(3);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  const std::size_t cig = cin / params.groups, cog = cout / params.groups;
  const long long pad = static_cast<long long>(params.padding);
  const std::size_t oh = (height + 2 * params.padding - k) / params.stride + 1;
  const std::size_t ow = (width + 2 * params.padding - k) / params.stride + 1;
  Tensor<double> out({batch, cout, oh, ow});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = bias ? (*bias)[co] : 0.0;
          const std::size_t g = co / cog;
          for (std::size_t cl = 0; cl < cig; ++cl)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long long iy = static_cast<long long>(y * params.stride + i) - pad;
                const long long ix = static_cast<long long>(x * params.stride + j) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<long long>(height) || ix >= static_cast<long long>(width))
                  continue;
                acc += weight.at(co, cl, i, j) *
                       input.at(n, g * cig + cl, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          out.at(n, co, y, x) = acc;
        }
  return out;
}

}  // namespace epe::verify

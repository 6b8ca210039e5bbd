#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "epe/entropy.hpp"
#include "epe/epe_module.hpp"
#include "epe/error.hpp"
#include "epe/nn.hpp"
#include "epe/optim.hpp"
#include "epe/rng.hpp"
#include "epe/segnet.hpp"
#include "epe/verify.hpp"

namespace epe::verify {
namespace {

constexpr int kInstances = 3;

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Identity forward; backward scales the upstream gradient. Used only to corrupt a
/// conv output's backward pass when the fault fixture is requested.
Var<double> faulty_gradient(const Var<double>& x, double factor) {
  return make_node<double>(x->value, {x}, [factor](Node<double>& self) {
    Tensor<double>& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

/// sum(y * r) with a fixed random r gives every output element its own weight.
Var<double> random_projection(const Var<double>& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, leaf(random_tensor(y->value.shape(), rng))));
}

std::vector<NamedVar> registry_inputs(const ParamRegistry<double>& registry) {
  std::vector<NamedVar> out;
  for (const auto& p : registry.parameters()) out.push_back({p.name, p.var});
  return out;
}

struct GradCase {
  std::string name;
  // Builds instance `i` and returns checkable inputs plus the loss closure.
  std::function<std::pair<std::vector<NamedVar>, std::function<Var<double>()>>(std::uint64_t)> build;
  std::size_t coords_per_tensor = 0;
};

CheckResult run_grad_case(const GradCase& c, std::size_t index, const VerifyOptions& options) {
  CheckResult result{"grad", c.name, true, 0.0, ""};
  std::size_t coords = 0;
  for (int i = 0; i < kInstances; ++i) {
    const std::uint64_t seed = mix_seed(options.seed, 100 + 10 * index + static_cast<std::uint64_t>(i));
    auto [inputs, loss] = c.build(seed);
    GradCheckOptions gc;
    gc.max_coords_per_tensor = c.coords_per_tensor;
    gc.seed = seed;
    const GradCheckResult r = check_gradients(inputs, loss, gc);
    coords += r.coords_checked;
    if (r.max_rel_error > result.metric || !std::isfinite(r.max_rel_error)) {
      result.metric = r.max_rel_error;
      result.detail = "instance " + std::to_string(i) + " worst at " + r.worst;
    }
  }
  result.passed = result.metric < options.grad_tolerance;
  result.detail = std::to_string(kInstances) + " instances, " + std::to_string(coords) + " coords" +
                  (result.detail.empty() ? "" : "; " + result.detail);
  return result;
}

std::vector<GradCase> grad_cases(const VerifyOptions& options) {
  const double fault = options.inject_conv_grad_fault ? 1.01 : 1.0;
  std::vector<GradCase> cases;

  cases.push_back({"conv2d", [fault](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t stride = 1 + rng.below(2), padding = rng.below(2);
                     auto x = leaf(random_tensor({2, 3, 7, 6}, rng), true);
                     auto w = leaf(random_tensor({4, 3, 3, 3}, rng), true);
                     auto b = leaf(random_tensor({4}, rng), true);
                     std::function<Var<double>()> loss = [=] {
                       auto y = conv2d(x, w, b, Conv2dParams{stride, padding, 1});
                       if (fault != 1.0) y = faulty_gradient(y, fault);
                       return random_projection(y, seed + 1);
                     };
                     return std::pair{std::vector<NamedVar>{{"x", x}, {"weight", w}, {"bias", b}}, loss};
                   }});

  cases.push_back({"dwsep_conv", [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto reg = std::make_shared<ParamRegistry<double>>();
                     auto layer = std::make_shared<DwSepConv<double>>(*reg, "dw", 3, 5);
                     init_params(*reg, seed);
                     auto x = leaf(random_tensor({2, 3, 6, 6}, rng), true);
                     std::function<Var<double>()> loss = [=] { return random_projection(layer->forward(x), seed + 1); };
                     auto inputs = registry_inputs(*reg);
                     inputs.push_back({"x", x});
                     return std::pair{inputs, loss};
                   }});

  cases.push_back({"batchnorm_train", [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto reg = std::make_shared<ParamRegistry<double>>();
                     auto layer = std::make_shared<BatchNorm2d<double>>(*reg, "bn", 3);
                     init_params(*reg, seed);
                     for (auto& v : layer->gamma->value.values()) v = rng.uniform(0.5, 1.5);
                     for (auto& v : layer->beta->value.values()) v = rng.uniform(-0.5, 0.5);
                     auto x = leaf(random_tensor({3, 3, 4, 5}, rng, -2.0, 2.0), true);
                     std::function<Var<double>()> loss = [=] {
                       return random_projection(layer->forward(x, Mode::train), seed + 1);
                     };
                     auto inputs = registry_inputs(*reg);
                     inputs.push_back({"x", x});
                     return std::pair{inputs, loss};
                   }});

  cases.push_back({"residual_block", [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto reg = std::make_shared<ParamRegistry<double>>();
                     const std::size_t out = rng.below(2) ? 4 : 6;  // both skip variants
                     auto layer = std::make_shared<ResidualBlock<double>>(*reg, "res", 4, out);
                     init_params(*reg, seed);
                     auto x = leaf(random_tensor({2, 4, 5, 5}, rng), true);
                     std::function<Var<double>()> loss = [=] {
                       return random_projection(layer->forward(x, Mode::train), seed + 1);
                     };
                     auto inputs = registry_inputs(*reg);
                     inputs.push_back({"x", x});
                     return std::pair{inputs, loss};
                   }});

  const std::array<std::size_t, 3> widths{16, 8, 4};
  const std::array<const char*, 3> names{"encoder_large", "encoder_medium", "encoder_small"};
  for (std::size_t k = 0; k < 3; ++k) {
    cases.push_back({names[k],
                     [width = widths[k]](std::uint64_t seed) {
                       Rng rng(seed);
                       auto reg = std::make_shared<ParamRegistry<double>>();
                       auto enc = std::make_shared<PatchEncoder<double>>(*reg, "enc", EncoderConfig{width, 6, 3}, 8);
                       init_params(*reg, seed);
                       auto x = leaf(random_tensor({3, 1, 8, 8}, rng, 0.0, 1.0), true);
                       std::function<Var<double>()> loss = [=] {
                         return random_projection(enc->forward(x, Mode::train), seed + 1);
                       };
                       auto inputs = registry_inputs(*reg);
                       inputs.push_back({"x", x});
                       return std::pair{inputs, loss};
                     },
                     4});
  }

  cases.push_back({"cross_entropy", [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto logits = leaf(random_tensor({2, 4, 3, 5}, rng, -3.0, 3.0), true);
                     std::vector<std::uint8_t> labels(2 * 3 * 5);
                     for (auto& l : labels) l = rng.below(5) == 4 ? kIgnoreLabel : static_cast<std::uint8_t>(rng.below(4));
                     labels[0] = 1;
                     std::function<Var<double>()> loss = [=] { return cross_entropy_loss(logits, labels); };
                     return std::pair{std::vector<NamedVar>{{"logits", logits}}, loss};
                   }});

  cases.push_back({"mse", [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto pred = leaf(random_tensor({2, 3, 4, 4}, rng), true);
                     auto target = random_tensor({2, 3, 4, 4}, rng);
                     std::function<Var<double>()> loss = [=] { return mse_loss(pred, target); };
                     return std::pair{std::vector<NamedVar>{{"prediction", pred}}, loss};
                   }});

  cases.push_back({"epe_toy_model",
                   [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto model = std::make_shared<SegModel<double>>(ModelConfig{ModelKind::epe, 4, 3, 8});
                     init_params(model->registry(), seed);
                     Tensor<double> image = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
                     std::vector<std::uint8_t> labels(16 * 16);
                     for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(3));
                     std::function<Var<double>()> loss = [=] {
                       ModelOutput<double> out = model->forward(image, Mode::train);
                       return total_loss(cross_entropy_loss(out.logits, labels), mse_loss(out.reconstruction, image), 1.0);
                     };
                     return std::pair{registry_inputs(model->registry()), loss};
                   },
                   2});
  return cases;
}

CheckResult make_check(const std::string& suite, const std::string& name, bool passed, double metric,
                       std::string detail = {}) {
  return CheckResult{suite, name, passed, metric, std::move(detail)};
}

}  // namespace

std::vector<CheckResult> run_grad_suite(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  const auto cases = grad_cases(options);
  for (std::size_t i = 0; i < cases.size(); ++i) out.push_back(run_grad_case(cases[i], i, options));
  return out;
}

std::vector<CheckResult> run_fold_suite(const VerifyOptions& options) {
  Rng rng(mix_seed(options.seed, 1));
  const std::array<std::size_t, 4> sizes{1, 2, 4, 32};
  constexpr int kTensors = 200;
  std::size_t mismatches = 0;
  for (int i = 0; i < kTensors; ++i) {
    const std::size_t n = sizes[static_cast<std::size_t>(i) % sizes.size()];
    const std::size_t batch = 1 + rng.below(3);
    const std::size_t gh = 1 + rng.below(n == 32 ? 3 : 6), gw = 1 + rng.below(n == 32 ? 3 : 6);
    Tensor<double> x({batch, 1, gh * n, gw * n});
    for (auto& v : x.values()) v = rng.uniform(-1e3, 1e3);
    const Tensor<double> patches = unfold(x, n);
    if (!(fold(patches, gh * n, gw * n) == x)) ++mismatches;
  }

  // Patch p of an unfold must be the p-th tile in row-major grid order.
  Tensor<double> ramp({1, 1, 4, 6});
  for (std::size_t i = 0; i < ramp.numel(); ++i) ramp[i] = static_cast<double>(i);
  const Tensor<double> tiles = unfold(ramp, 2);
  bool order_ok = tiles.shape() == Shape{1, 6, 2, 2};
  for (std::size_t p = 0; order_ok && p < 6; ++p) {
    const std::size_t r = p / 3, c = p % 3;
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x)
        order_ok = order_ok && tiles.at(0, p, y, x) == ramp.at(0, 0, 2 * r + y, 2 * c + x);
  }

  return {make_check("fold", "fold_unfold_roundtrip", mismatches == 0, static_cast<double>(mismatches),
                     std::to_string(kTensors) + " tensors, n in {1,2,4,32}, " + std::to_string(mismatches) + " mismatches"),
          make_check("fold", "unfold_patch_order", order_ok, order_ok ? 0.0 : 1.0)};
}

std::vector<CheckResult> run_entropy_suite(const VerifyOptions& options) {
  Rng rng(mix_seed(options.seed, 2));
  constexpr int kPatches = 100;
  constexpr std::size_t kSide = 32;
  double worst = 0.0;
  for (int i = 0; i < kPatches; ++i) {
    // Vary both location and spread so the bandwidth and occupied-level count vary.
    const double centre = rng.uniform(), spread = rng.uniform(0.001, 0.6);
    std::vector<double> patch(kSide * kSide);
    for (auto& v : patch) v = std::clamp(centre + spread * (rng.uniform() - 0.5), 0.0, 1.0);
    const double got = patch_entropy<double>(patch);
    const double want = brute_force_patch_entropy(patch);
    worst = std::max(worst, std::abs(got - want));
  }

  bool constants_zero = true;
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> flat(kSide * kSide, rng.uniform());
    constants_zero = constants_zero && patch_entropy<double>(flat) == 0.0;
  }
  // Distinct values inside one quantization level are still a single level.
  std::vector<double> one_level(kSide * kSide);
  for (auto& v : one_level) v = 0.5 + rng.uniform(0.0, 1.0 / 64.0);
  constants_zero = constants_zero && patch_entropy<double>(one_level) == 0.0;

  return {make_check("entropy", "kde_vs_brute_force", worst <= 1e-9, worst,
                     std::to_string(kPatches) + " random 32x32 patches, max abs diff"),
          make_check("entropy", "constant_patch_zero", constants_zero, constants_zero ? 0.0 : 1.0)};
}

std::vector<CheckResult> run_optimizer_suite(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  const PolySchedule schedule{1e-3, 0.9, 1500};
  const double lr0 = std::abs(poly_lr(schedule, 0) - 1e-3);
  const double lr_end = std::abs(poly_lr(schedule, 1500));
  const double lr_half = std::abs(poly_lr(schedule, 750) - 1e-3 * std::pow(0.5, 0.9));
  out.push_back(make_check("optimizer", "poly_lr_start", lr0 <= 1e-12, lr0));
  out.push_back(make_check("optimizer", "poly_lr_end", lr_end <= 1e-12, lr_end));
  out.push_back(make_check("optimizer", "poly_lr_half", lr_half <= 1e-12, lr_half));

  Rng rng(mix_seed(options.seed, 3));
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    ParamRegistry<double> reg;
    auto w = reg.add_parameter("w", {1}, InitKind::zeros);
    const double w0 = rng.uniform(-1.0, 1.0), g = rng.uniform(-2.0, 2.0), lr = rng.uniform(1e-4, 1e-2);
    w->value[0] = w0;
    w->grad_buffer()[0] = g;
    AdamConfig config;
    config.weight_decay = 0.0;
    Adam<double> adam(reg, config);
    adam.step(lr);
    // m_hat = g and v_hat = g^2 after one bias-corrected step.
    const double expected = w0 - lr * g / (std::abs(g) + config.eps);
    worst = std::max(worst, std::abs(w->value[0] - expected));
  }
  out.push_back(make_check("optimizer", "adam_first_step", worst <= 1e-12, worst, "20 random scalars"));
  return out;
}

std::vector<CheckResult> run_suite(const std::string& suite, const VerifyOptions& options) {
  if (suite == "grad") return run_grad_suite(options);
  if (suite == "fold") return run_fold_suite(options);
  if (suite == "entropy") return run_entropy_suite(options);
  if (suite == "optimizer") return run_optimizer_suite(options);
  if (suite == "all") {
    std::vector<CheckResult> all;
    for (const char* s : {"fold", "entropy", "optimizer", "grad"}) {
      auto part = run_suite(s, options);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  throw ValueError("unknown suite '" + suite + "' (expected grad, fold, entropy, optimizer or all)");
}

}  // namespace epe::verify

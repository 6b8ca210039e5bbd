// Acceptance gate: one check per criterion, each printing a single PASS/FAIL line.
// Usage: acceptance [--criterion N]   (no argument runs all of them)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>

#include "epe/config.hpp"
#include "epe/dataset.hpp"
#include "epe/entropy.hpp"
#include "epe/epe_module.hpp"
#include "epe/optim.hpp"
#include "epe/rng.hpp"
#include "epe/segnet.hpp"
#include "epe/trainer.hpp"
#include "epe/verify.hpp"

using namespace epe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Outcome suite_outcome(const std::vector<verify::CheckResult>& results, double elapsed, double budget) {
  bool ok = elapsed < budget;
  double worst = 0.0;
  std::string failed;
  for (const auto& r : results) {
    ok = ok && r.passed;
    worst = std::max(worst, r.metric);
    if (!r.passed) failed += " " + r.name;
  }
  std::string detail = std::to_string(results.size()) + " checks, max error " + fmt("%.3e", worst) + ", " +
                       fmt("%.1f", elapsed) + " s (budget " + fmt("%.0f", budget) + " s)";
  if (!failed.empty()) detail += ", failed:" + failed;
  return {ok, detail};
}

Outcome fold_roundtrip() {
  const auto start = Clock::now();
  const auto results = verify::run_fold_suite();
  return suite_outcome(results, seconds_since(start), 10.0);
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  const auto results = verify::run_grad_suite();
  return suite_outcome(results, seconds_since(start), 300.0);
}

Outcome entropy_oracle() {
  Rng rng(mix_seed(31, 3));
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    // Random occupancy of a random subset of levels, plus raw uniform patches.
    std::vector<double> patch(32 * 32);
    if (i % 2 == 0) {
      for (auto& v : patch) v = rng.uniform();
    } else {
      const int lo = static_cast<int>(rng.below(32)), span = 1 + static_cast<int>(rng.below(32 - lo));
      for (auto& v : patch) v = (lo + static_cast<int>(rng.below(span)) + rng.uniform()) / 32.0;
    }
    worst = std::max(worst, std::abs(patch_entropy<double>(patch) - verify::brute_force_patch_entropy(patch)));
  }
  bool constants = true;
  for (int i = 0; i < 32; ++i) constants = constants && patch_entropy<double>(std::vector<double>(1024, (i + 0.3) / 32)) == 0.0;
  return {worst <= 1e-9 && constants, "max |diff| " + fmt("%.3e", worst) + " over 100 patches (tol 1e-9), constant patches " +
                                           (constants ? "exactly 0" : "NOT 0")};
}

Outcome routing_partition() {
  Rng rng(mix_seed(31, 4));
  std::size_t violations = 0;
  for (std::size_t p = 1; p <= 1000; ++p) {
    std::vector<double> e(p);
    for (auto& v : e) v = p % 3 == 0 ? std::floor(rng.uniform(0.0, 5.0)) : rng.uniform(0.0, 3.5);
    const RoutingPlan plan = partition_patches(e);
    const std::size_t hi = static_cast<std::size_t>(std::floor(0.2 * static_cast<double>(p) + 1e-9));
    const std::size_t mid = static_cast<std::size_t>(std::floor(0.4 * static_cast<double>(p) + 1e-9));
    bool ok = plan.high().size() == hi && plan.mid().size() == mid && plan.low().size() == p - hi - mid;
    std::vector<int> seen(p, 0);
    for (const auto& g : plan.groups)
      for (auto i : g) ok = ok && i < p && ++seen[i] == 1;
    ok = ok && std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
    for (std::size_t a = 0; a + 1 < 3 && ok; ++a)
      for (auto i : plan.groups[a])
        for (auto j : plan.groups[a + 1]) ok = ok && e[i] >= e[j];
    violations += ok ? 0 : 1;
  }
  return {violations == 0, std::to_string(violations) + " violating P values out of 1..1000"};
}

/// Per-layer count written out from the architecture, independent of the registry.
std::size_t hand_count_epe(std::size_t host_channels, std::size_t classes) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k, std::size_t groups = 1) {
    return out * (in / groups) * k * k + out;
  };
  auto dwsep = [&](std::size_t c) { return conv(c, c, 3, c) + conv(c, c, 1); };
  auto bn = [](std::size_t c) { return 2 * c; };
  std::size_t total = 0;
  for (std::size_t c : {16u, 8u, 4u}) {
    std::size_t encoder = conv(1, c, 1) + conv(c, 1, 1);
    for (int b = 0; b < 6; ++b) encoder += 2 * dwsep(c) + 2 * bn(c);
    total += encoder;
  }
  total += conv(1, 16, 3) + conv(16, 16, 3) + conv(16, 3, 3);
  total += bn(host_channels + 1) + conv(host_channels + 1, classes, 1);
  return total;
}

Outcome parameter_accounting() {
  ParamRegistry<float> registry;
  const EpeConfig config;
  const EpeModule<float> module(registry, config);
  const std::size_t counted = count_params(registry);
  const std::size_t by_hand = hand_count_epe(config.host_channels, config.num_classes);
  const bool in_range = counted >= 30000 && counted <= 250000;
  return {in_range && counted == by_hand, "count_params " + std::to_string(counted) + ", by-hand formula " +
                                              std::to_string(by_hand) + ", required range [30000, 250000]" +
                                              (in_range ? "" : " (outside range)")};
}

Outcome flop_saving() {
  ParamRegistry<float> registry;
  const EpeModule<float> module(registry, EpeConfig{});
  std::string detail;
  bool ok = true;
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{128, 128}, {512, 1024}}) {
    const EpeCostReport cost = module.cost_report(registry, h, w);
    ok = ok && cost.flop_ratio() < 0.5;
    detail += std::to_string(h) + "x" + std::to_string(w) + ": " + std::to_string(cost.flops_routed) + " / " +
              std::to_string(cost.flops_uniform_large) + " = " + fmt("%.4f", cost.flop_ratio()) + "; ";
  }
  return {ok, detail + "required < 0.5"};
}

struct RunSummary {
  double ce50 = 0.0, ce_final = 0.0, val_miou = 0.0, seconds = 0.0;
};

RunSummary train_toy(ModelKind kind) {
  const RunConfig config;
  const auto start = Clock::now();
  const auto train = generate_toy_dataset(config.toy_train);
  const auto val = generate_toy_dataset(config.toy_val);
  SegModel<float> model(config.model(kind));
  init_params(model.registry(), config.train.seed);
  const TrainReport report = train_loop(model, train, config.train);
  std::vector<double> ce;
  for (const auto& it : report.log) ce.push_back(it.ce);
  RunSummary s;
  s.ce50 = trailing_mean(ce, 50, 20);
  s.ce_final = trailing_mean(ce, ce.size() - 1, 20);
  s.val_miou = miou(evaluate(model, val));
  s.seconds = seconds_since(start);
  std::printf("  %s: smoothed CE %.4f at iter 50 -> %.4f at iter %zu, val mIoU %.4f, %.0f s\n", to_string(kind).c_str(),
              s.ce50, s.ce_final, ce.size() - 1, s.val_miou, s.seconds);
  std::fflush(stdout);
  return s;
}

Outcome desk_training() {
  const RunSummary base = train_toy(ModelKind::baseline);
  const RunSummary epe = train_toy(ModelKind::epe);
  const bool a = base.ce_final < 0.5 * base.ce50 && epe.ce_final < 0.5 * epe.ce50;
  const bool b = base.val_miou >= 0.55;
  const bool c = epe.val_miou >= base.val_miou - 0.02;
  const double minutes = (base.seconds + epe.seconds) / 60.0;
  const bool d = minutes < 30.0;
  return {a && b && c && d, std::string("(a) CE ratio baseline ") + fmt("%.3f", base.ce_final / base.ce50) + ", epe " +
                                fmt("%.3f", epe.ce_final / epe.ce50) + (a ? " ok" : " FAIL") + "; (b) baseline mIoU " +
                                fmt("%.4f", base.val_miou) + (b ? " ok" : " FAIL") + "; (c) epe mIoU " +
                                fmt("%.4f", epe.val_miou) + " (delta " + fmt("%+.4f", epe.val_miou - base.val_miou) +
                                ")" + (c ? " ok" : " FAIL") + "; runtime " + fmt("%.1f", minutes) + " min" +
                                (d ? "" : " FAIL")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome training_determinism() {
  const fs::path root = fs::temp_directory_path() / "epe_acceptance_determinism";
  fs::remove_all(root);
  bool ok = true;
  std::string detail;
  for (const char* mode : {"baseline", "epe"}) {
    std::string logs[2], ckpts[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path out = root / (std::string(mode) + std::to_string(run));
      const std::string cmd = std::string("\"") + EPE_CLI_PATH + "\" train --mode " + mode + " --max-iter 40 --quiet --out-dir \"" +
                              out.string() + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, std::string("train command failed in ") + mode + " mode"};
      logs[run] = slurp(out / "train_log.csv");
      ckpts[run] = slurp(out / "checkpoint.bin");
    }
    const bool same = !logs[0].empty() && logs[0] == logs[1] && !ckpts[0].empty() && ckpts[0] == ckpts[1];
    ok = ok && same;
    detail += std::string(mode) + ": log " + std::to_string(logs[0].size()) + " B, checkpoint " +
              std::to_string(ckpts[0].size()) + " B " + (same ? "identical" : "DIFFER") + "; ";
  }
  return {ok, detail + "40 iterations per run"};
}

Outcome closed_forms() {
  const PolySchedule s{1e-3, 0.9, 1000};
  const double e0 = std::abs(poly_lr(s, 0) - 1e-3);
  const double e1 = std::abs(poly_lr(s, 1000));
  const double e2 = std::abs(poly_lr(s, 500) - 1e-3 * std::pow(0.5, 0.9));
  double adam_err = 0.0;
  for (double g : {0.5, -3.0, 1e-3}) {
    ParamRegistry<double> reg;
    auto w = reg.add_parameter("w", {1}, InitKind::zeros);
    w->grad_buffer()[0] = g;
    Adam<double> adam(reg, AdamConfig{.weight_decay = 0.0});
    adam.step(1e-3);
    adam_err = std::max(adam_err, std::abs(w->value[0] - (-1e-3 * g / (std::abs(g) + 1e-8))));
  }
  const double worst = std::max({e0, e1, e2, adam_err});
  return {worst <= 1e-12, "poly_lr errors " + fmt("%.1e", e0) + ", " + fmt("%.1e", e1) + ", " + fmt("%.1e", e2) +
                              "; Adam first-step error " + fmt("%.1e", adam_err) + " (tol 1e-12)"};
}

Outcome patch_locality() {
  ParamRegistry<float> registry;
  const EpeModule<float> module(registry, EpeConfig{});
  init_params(registry, 7);
  const Tensor<float> image = generate_toy_sample(ToyDatasetSpec{}, 3).image;
  const std::size_t n = 32, grid_w = image.dim(3) / n, patches = (image.dim(2) / n) * grid_w;
  const EpeOutput<float> reference = module.forward(image, Mode::eval);

  Rng rng(mix_seed(31, 10));
  std::size_t failures = 0, routed_perturbations = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t p = rng.below(patches);
    auto flat = [&](std::size_t q) {
      const std::size_t qy = (q / grid_w) * n, qx = (q % grid_w) * n;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n * n; ++i)
          if (image.at(0, c, qy + i / n, qx + i % n) != image.at(0, c, qy, qx)) return false;
      return true;
    };
    // Shuffles target textured patches; shuffling a flat patch would be a no-op.
    for (int tries = 0; trial % 2 == 0 && flat(p) && tries < 1000; ++tries) p = rng.below(patches);
    const std::size_t py = (p / grid_w) * n, px = (p % grid_w) * n;
    Tensor<float> perturbed = image;
    Var<float> feature;
    if (trial % 2 == 0) {
      // Shuffling a patch's pixels keeps its entropy, so routing itself is undisturbed.
      std::vector<std::size_t> order(n * n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n * n; ++i)
          perturbed.at(0, c, py + i / n, px + i % n) = image.at(0, c, py + order[i] / n, px + order[i] % n);
      const EpeOutput<float> out = module.forward(perturbed, Mode::eval);
      if (!(out.plans == reference.plans)) ++failures;
      feature = out.feature;
      ++routed_perturbations;
    } else {
      // Arbitrary new values, with the routing plan held fixed.
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n * n; ++i) perturbed.at(0, c, py + i / n, px + i % n) = static_cast<float>(rng.uniform());
      feature = module.forward_with_plans(perturbed, reference.plans, Mode::eval);
    }
    bool outside_same = true, inside_changed = false;
    for (std::size_t y = 0; y < image.dim(2); ++y)
      for (std::size_t x = 0; x < image.dim(3); ++x) {
        const bool inside = y >= py && y < py + n && x >= px && x < px + n;
        const bool same = feature->value.at(0, 0, y, x) == reference.feature->value.at(0, 0, y, x);
        if (inside) inside_changed = inside_changed || !same;
        else outside_same = outside_same && same;
      }
    if (!outside_same || !inside_changed) ++failures;
  }
  return {failures == 0, "20 perturbations (" + std::to_string(routed_perturbations) +
                             " re-routed pixel shuffles, the rest arbitrary values under a fixed plan), " +
                             std::to_string(failures) + " failures"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "fold/unfold inverse", fold_roundtrip},
      {2, "gradient suite", gradient_suite},
      {3, "entropy oracle", entropy_oracle},
      {4, "routing partition", routing_partition},
      {5, "parameter accounting", parameter_accounting},
      {6, "FLOP saving", flop_saving},
      {7, "desk-scale training", desk_training},
      {8, "training determinism", training_determinism},
      {9, "schedule/optimizer closed forms", closed_forms},
      {10, "patch locality", patch_locality},
  };
  int only = 0;
  if (argc == 3 && std::string(argv[1]) == "--criterion") {
    only = std::atoi(argv[2]);
  } else if (argc != 1) {
    std::fprintf(stderr, "usage: acceptance [--criterion N]\n");
    return 2;
  }

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (only && c.id != only) continue;
    ++ran;
    Outcome outcome{false, ""};
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", outcome.passed ? "PASS" : "FAIL", c.id, c.name, outcome.detail.c_str());
    std::fflush(stdout);
    failed += outcome.passed ? 0 : 1;
  }
  if (ran == 0) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 2;
  }
  return failed == 0 ? 0 : 1;
}

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "epe/autograd.hpp"
#include "epe/ops.hpp"

namespace epe::verify {

// --- Reference implementations written straight from the definitions. They share
// no code with the library paths they are used to check.

/// KDE entropy by direct summation over every patch pixel at the 32 level centers.
double brute_force_patch_entropy(std::span<const double> patch);

/// Seven-loop cross-correlation.
Tensor<double> naive_conv2d(const Tensor<double>& input, const Tensor<double>& weight, const Tensor<double>* bias,
                            Conv2dParams params);

// --- Finite-difference gradient checking (64-bit).

struct NamedVar {
  std::string name;
  Var<double> var;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Second central difference per coordinate; the smaller error of the two is
  /// kept. The large step can straddle a relu kink, the small one is dominated by
  /// roundoff when the true gradient is ~0. Non-positive disables it.
  double fallback_step = 1e-6;
  /// Coordinates sampled per input tensor; 0 checks all of them.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Lower bound of the relative-error denominator, so gradients that are zero
  /// up to rounding do not divide by ~0.
  double denominator_floor = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst;  // "<tensor>[<index>]"
};

/// Compares backward() gradients of `loss_fn()` against central differences for
/// every input. `loss_fn` must rebuild the graph from the inputs' current values.
GradCheckResult check_gradients(std::span<const NamedVar> inputs, const std::function<Var<double>()>& loss_fn,
                                const GradCheckOptions& options = {});

// --- Self-check suites.

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  double metric = 0.0;  // max relative/absolute error, depending on the check
  std::string detail;
};

struct VerifyOptions {
  /// Test fixture: deliberately corrupts the conv backward pass inside the grad suite.
  bool inject_conv_grad_fault = false;
  std::uint64_t seed = 20240601;
  double grad_tolerance = 1e-4;
};

std::vector<CheckResult> run_grad_suite(const VerifyOptions& options = {});
std::vector<CheckResult> run_fold_suite(const VerifyOptions& options = {});
std::vector<CheckResult> run_entropy_suite(const VerifyOptions& options = {});
std::vector<CheckResult> run_optimizer_suite(const VerifyOptions& options = {});

/// `suite` is one of grad, fold, entropy, optimizer, all.
std::vector<CheckResult> run_suite(const std::string& suite, const VerifyOptions& options = {});

}  // namespace epe::verify

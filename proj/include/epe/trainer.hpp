#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "epe/augment.hpp"
#include "epe/dataset.hpp"
#include "epe/optim.hpp"
#include "epe/segnet.hpp"

namespace epe {

struct TrainConfig {
  double initial_lr = 1e-3;
  double power = 0.9;
  std::size_t max_iter = 1500;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  double lambda = 1.0;  // weight of the reconstruction MSE
  std::size_t patch_size = 32;
  AugmentConfig augment;
  AdamConfig adam;

  PolySchedule schedule() const { return {initial_lr, power, max_iter}; }
};

void validate(const TrainConfig& config);

struct IterationLog {
  std::size_t iter = 0;
  double lr = 0.0;
  double ce = 0.0;
  std::optional<double> mse;  // EPE mode only
  double total = 0.0;
};

struct TrainReport {
  std::vector<IterationLog> log;
};

/// Trains an already-initialized model. Each iteration draws a batch from a
/// seeded shuffle, augments it, minimizes CE (plus lambda * MSE in EPE mode) and
/// takes one Adam step at poly_lr(iter). One RNG stream, seeded from config.seed,
/// supplies the shuffles and then each sample's augmentation draws.
TrainReport train_loop(SegModel<float>& model, const std::vector<SegSample>& dataset, const TrainConfig& config,
                       const std::function<void(const IterationLog&)>& on_iteration = {});

/// Eval-mode confusion matrix over `dataset` (one image per forward pass).
ConfusionMatrix evaluate(const SegModel<float>& model, const std::vector<SegSample>& dataset);

/// Stacks samples into an N x 3 x H x W tensor and an N*H*W label vector.
struct Batch {
  Tensor<float> images;
  std::vector<std::uint8_t> labels;
};
Batch make_batch(const std::vector<SegSample>& samples);

/// CSV with header iter,lr,ce,mse,total; the mse field is empty in baseline mode.
void write_train_log(const TrainReport& report, std::ostream& out);

/// Mean of the last `window` entries of `values` ending at index `end` (inclusive).
double trailing_mean(const std::vector<double>& values, std::size_t end, std::size_t window);

}  // namespace epe

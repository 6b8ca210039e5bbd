#include "epe/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "epe/error.hpp"

namespace epe {
namespace {

// Activation buffers are reallocated every iteration at the same sizes. Keeping
// them on the heap instead of mmap/munmap per tensor removes the page-fault cost.
void retain_large_allocations() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

void validate(const TrainConfig& config) {
  if (!(config.initial_lr > 0.0)) throw ConfigError("initial_lr must be positive");
  if (!(config.power > 0.0)) throw ConfigError("power must be positive");
  if (config.max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (config.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (config.patch_size < 1) throw ConfigError("patch_size must be positive");
  if (config.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (config.augment.crop_size == 0 || config.augment.crop_size % config.patch_size != 0) {
    throw ConfigError("crop_size must be a positive multiple of patch_size");
  }
  if (!(config.augment.scale_min > 0.0) || config.augment.scale_max < config.augment.scale_min) {
    throw ConfigError("scale range must satisfy 0 < scale_min <= scale_max");
  }
}

Batch make_batch(const std::vector<SegSample>& samples) {
  if (samples.empty()) throw ValueError("empty batch");
  const std::size_t height = samples[0].image.dim(2), width = samples[0].image.dim(3), plane = height * width;
  Batch batch;
  batch.images = Tensor<float>({samples.size(), 3, height, width});
  batch.labels.reserve(samples.size() * plane);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SegSample& s = samples[i];
    if (s.image.dim(2) != height || s.image.dim(3) != width || s.label.height != height || s.label.width != width) {
      throw ShapeError("batch samples differ in size");
    }
    std::copy_n(s.image.data(), 3 * plane, batch.images.data() + i * 3 * plane);
    batch.labels.insert(batch.labels.end(), s.label.values.begin(), s.label.values.end());
  }
  return batch;
}

namespace {

void shuffle(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
}

}  // namespace

TrainReport train_loop(SegModel<float>& model, const std::vector<SegSample>& dataset, const TrainConfig& config,
                       const std::function<void(const IterationLog&)>& on_iteration) {
  validate(config);
  if (dataset.empty()) throw ValueError("training dataset is empty");
  retain_large_allocations();
  const bool with_epe = model.config().kind == ModelKind::epe;
  const PolySchedule schedule = config.schedule();

  Rng rng(mix_seed(config.seed, 0x7472616));
  Adam<float> optimizer(model.registry(), config.adam);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  TrainReport report;
  report.log.reserve(config.max_iter);
  for (std::size_t iter = 0; iter < config.max_iter; ++iter) {
    const double lr = poly_lr(schedule, iter);

    std::vector<SegSample> samples;
    samples.reserve(config.batch_size);
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        shuffle(order, rng);
        cursor = 0;
      }
      samples.push_back(augment(dataset[order[cursor++]], config.augment, rng));
    }
    const Batch batch = make_batch(samples);

    model.registry().zero_grad();
    const ModelOutput<float> out = model.forward(batch.images, Mode::train);
    const Var<float> ce = cross_entropy_loss(out.logits, batch.labels);
    IterationLog entry{iter, lr, static_cast<double>(ce->value[0]), std::nullopt, 0.0};
    Var<float> loss = ce;
    if (with_epe) {
      const Var<float> mse = mse_loss(out.reconstruction, batch.images);
      entry.mse = static_cast<double>(mse->value[0]);
      loss = total_loss(ce, mse, config.lambda);
    }
    entry.total = static_cast<double>(loss->value[0]);
    if (!std::isfinite(entry.total)) {
      throw TrainingError("non-finite loss at iteration " + std::to_string(iter));
    }
    backward(loss);
    try {
      optimizer.step(lr);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at iteration " + std::to_string(iter));
    }

    report.log.push_back(entry);
    if (on_iteration) on_iteration(entry);
  }
  return report;
}

ConfusionMatrix evaluate(const SegModel<float>& model, const std::vector<SegSample>& dataset) {
  ConfusionMatrix cm(model.config().num_classes);
  for (const auto& sample : dataset) {
    const ModelOutput<float> out = model.forward(sample.image, Mode::eval);
    cm.add_logits(out.logits->value, sample.label.values);
  }
  return cm;
}

void write_train_log(const TrainReport& report, std::ostream& out) {
  out << "iter,lr,ce,mse,total\n";
  char line[160];
  for (const auto& e : report.log) {
    char mse[40] = "";
    if (e.mse) std::snprintf(mse, sizeof mse, "%.9g", *e.mse);
    std::snprintf(line, sizeof line, "%zu,%.17g,%.9g,%s,%.9g\n", e.iter, e.lr, e.ce, mse, e.total);
    out << line;
  }
}

double trailing_mean(const std::vector<double>& values, std::size_t end, std::size_t window) {
  if (values.empty() || end >= values.size() || window == 0) throw ValueError("trailing_mean: bad range");
  const std::size_t begin = end + 1 >= window ? end + 1 - window : 0;
  double s = 0.0;
  for (std::size_t i = begin; i <= end; ++i) s += values[i];
  return s / static_cast<double>(end + 1 - begin);
}

}  // namespace epe

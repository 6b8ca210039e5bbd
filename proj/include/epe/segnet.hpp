#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epe/epe_module.hpp"
#include "epe/nn.hpp"

namespace epe {

inline constexpr std::uint8_t kIgnoreLabel = 255;

struct HostConfig {
  std::size_t width = 8;
  std::size_t num_classes = 4;
  bool with_classifier = true;
};

/// Small stand-in for a real-time segmentation backbone: 3x3 stem conv + BN + relu,
/// two residual blocks, full-resolution features. The 1x1 classifier is only
/// present when the host runs on its own.
template <typename T>
class ToyHost {
 public:
  ToyHost(ParamRegistry<T>& registry, const HostConfig& config, const std::string& prefix = "host");

  /// N x 3 x H x W -> N x width x H x W.
  Var<T> features(const Var<T>& image, Mode mode) const;
  /// Baseline logits from features; requires the classifier.
  Var<T> classify(const Var<T>& features) const;
  FlopCount flops(const Shape& input) const;

  const HostConfig& config() const noexcept { return config_; }

  Conv2d<T> stem;
  BatchNorm2d<T> stem_bn;
  std::vector<ResidualBlock<T>> blocks;
  std::optional<Conv2d<T>> classifier;

 private:
  HostConfig config_;
};

/// Mean over non-ignored pixels of -log softmax(logits)[label]. `labels` holds
/// N*H*W class ids (or kIgnoreLabel) in NHW order.
template <typename T>
Var<T> cross_entropy_loss(const Var<T>& logits, std::span<const std::uint8_t> labels);

template <typename T>
Var<T> mse_loss(const Var<T>& prediction, const Tensor<T>& target);

/// ce + lambda * mse.
template <typename T>
Var<T> total_loss(const Var<T>& ce, const Var<T>& mse, double lambda);

/// Rows are ground truth, columns prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void add(std::uint8_t truth, std::uint8_t predicted);
  /// Accumulates argmax predictions of N x K x H x W logits against labels.
  template <typename T>
  void add_logits(const Tensor<T>& logits, std::span<const std::uint8_t> labels);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  std::size_t num_classes() const noexcept { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
  std::uint64_t total() const noexcept;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

/// IoU per class; empty for classes absent from both truth and prediction.
std::vector<std::optional<double>> class_iou(const ConfusionMatrix& cm);
/// Mean IoU over classes with a nonzero union.
double miou(const ConfusionMatrix& cm);

enum class ModelKind { baseline, epe };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct ModelConfig {
  ModelKind kind = ModelKind::baseline;
  std::size_t host_width = 8;
  std::size_t num_classes = 4;
  std::size_t patch_size = 32;
};

template <typename T>
struct ModelOutput {
  Var<T> logits;
  Var<T> reconstruction;  // null unless EPE mode in training
  std::vector<RoutingPlan> plans;
};

/// Host network alone (baseline) or host + EPE, owning the parameter registry.
template <typename T>
class SegModel {
 public:
  explicit SegModel(const ModelConfig& config);
  SegModel(const SegModel&) = delete;
  SegModel& operator=(const SegModel&) = delete;

  ModelOutput<T> forward(const Tensor<T>& images, Mode mode) const;

  ParamRegistry<T>& registry() noexcept { return registry_; }
  const ParamRegistry<T>& registry() const noexcept { return registry_; }
  const ModelConfig& config() const noexcept { return config_; }
  const ToyHost<T>& host() const noexcept { return host_; }
  const EpeModule<T>* epe() const noexcept { return epe_ ? &*epe_ : nullptr; }

 private:
  ModelConfig config_;
  ParamRegistry<T> registry_;
  ToyHost<T> host_;
  std::optional<EpeModule<T>> epe_;
};

extern template class ToyHost<float>;
extern template class ToyHost<double>;
extern template class SegModel<float>;
extern template class SegModel<double>;

}  // namespace epe

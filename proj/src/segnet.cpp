#include "epe/segnet.hpp"

#include <algorithm>
#include <cmath>

#include "epe/error.hpp"

namespace epe {

namespace {

template <typename T>
std::vector<ResidualBlock<T>> make_host_blocks(ParamRegistry<T>& registry, const std::string& prefix,
                                               std::size_t width) {
  std::vector<ResidualBlock<T>> blocks;
  blocks.reserve(2);
  for (std::size_t i = 0; i < 2; ++i) blocks.emplace_back(registry, prefix + ".block" + std::to_string(i), width, width);
  return blocks;
}

template <typename T>
std::optional<Conv2d<T>> make_classifier(ParamRegistry<T>& registry, const std::string& prefix,
                                         const HostConfig& config) {
  if (!config.with_classifier) return std::nullopt;
  return Conv2d<T>(registry, prefix + ".classifier", config.width, config.num_classes, 1);
}

}  // namespace

template <typename T>
ToyHost<T>::ToyHost(ParamRegistry<T>& registry, const HostConfig& config, const std::string& prefix)
    : stem(registry, prefix + ".stem", 3, config.width, 3, {1, 1, 1}),
      stem_bn(registry, prefix + ".stem_bn", config.width),
      blocks(make_host_blocks(registry, prefix, config.width)),
      classifier(make_classifier(registry, prefix, config)),
      config_(config) {}

template <typename T>
Var<T> ToyHost<T>::features(const Var<T>& image, Mode mode) const {
  Var<T> h = relu(stem_bn.forward(stem.forward(image), mode));
  for (const auto& block : blocks) h = block.forward(h, mode);
  return h;
}

template <typename T>
Var<T> ToyHost<T>::classify(const Var<T>& features) const {
  if (!classifier) throw ValueError("host was built without a classifier");
  return classifier->forward(features);
}

template <typename T>
FlopCount ToyHost<T>::flops(const Shape& input) const {
  FlopCount f = stem.flops(input);
  const std::uint64_t elems = shape_numel(f.output);
  f.ops += 2 * elems;  // bn + relu
  for (const auto& block : blocks) {
    const FlopCount b = block.flops(f.output);
    f = {f.ops + b.ops, b.output};
  }
  if (classifier) {
    const FlopCount c = classifier->flops(f.output);
    f = {f.ops + c.ops, c.output};
  }
  return f;
}

template <typename T>
Var<T> cross_entropy_loss(const Var<T>& logits, std::span<const std::uint8_t> labels) {
  const Tensor<T>& z = logits->value;
  require_rank4(z, "cross-entropy logits");
  const std::size_t batch = z.dim(0), classes = z.dim(1), plane = z.dim(2) * z.dim(3);
  if (labels.size() != batch * plane) {
    throw ShapeError("cross-entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_to_string(z.shape()));
  }
  // Softmax probabilities are kept for the backward pass.
  Tensor<T> probs(z.shape());
  double total = 0.0;
  std::size_t scored = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::uint8_t label = labels[n * plane + i];
      if (label == kIgnoreLabel) continue;
      if (label >= classes) {
        throw ValueError("label " + std::to_string(label) + " is not below " + std::to_string(classes) + " classes");
      }
      const T* col = z.data() + n * classes * plane + i;
      T peak = col[0];
      for (std::size_t c = 1; c < classes; ++c) peak = std::max(peak, col[c * plane]);
      double denom = 0.0;
      for (std::size_t c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(col[c * plane] - peak));
      T* pcol = probs.data() + n * classes * plane + i;
      for (std::size_t c = 0; c < classes; ++c) {
        pcol[c * plane] = static_cast<T>(std::exp(static_cast<double>(col[c * plane] - peak)) / denom);
      }
      total += std::log(denom) - static_cast<double>(col[label * plane] - peak);
      ++scored;
    }
  }
  if (scored == 0) throw ValueError("cross-entropy: every pixel is ignored");
  std::vector<std::uint8_t> kept(labels.begin(), labels.end());
  return make_node<T>(Tensor<T>({1}, static_cast<T>(total / static_cast<double>(scored))), {logits},
                      [probs = std::move(probs), kept = std::move(kept), batch, classes, plane,
                       scored](Node<T>& self) {
                        Node<T>& in = *self.parents[0];
                        const T factor = self.grad[0] / static_cast<T>(scored);
                        T* g = in.grad_buffer().data();
                        for (std::size_t n = 0; n < batch; ++n) {
                          for (std::size_t i = 0; i < plane; ++i) {
                            const std::uint8_t label = kept[n * plane + i];
                            if (label == kIgnoreLabel) continue;
                            const std::size_t base = n * classes * plane + i;
                            for (std::size_t c = 0; c < classes; ++c) {
                              const T onehot = c == label ? T{1} : T{0};
                              g[base + c * plane] += factor * (probs[base + c * plane] - onehot);
                            }
                          }
                        }
                      });
}

template <typename T>
Var<T> mse_loss(const Var<T>& prediction, const Tensor<T>& target) {
  const Tensor<T>& p = prediction->value;
  if (p.shape() != target.shape()) {
    throw ShapeError("mse: prediction " + shape_to_string(p.shape()) + " vs target " +
                     shape_to_string(target.shape()));
  }
  const std::size_t count = p.numel();
  if (count == 0) throw ValueError("mse of empty tensors");
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(target[i]);
    total += d * d;
  }
  return make_node<T>(Tensor<T>({1}, static_cast<T>(total / static_cast<double>(count))), {prediction},
                      [target, count](Node<T>& self) {
                        Node<T>& in = *self.parents[0];
                        const T factor = T{2} * self.grad[0] / static_cast<T>(count);
                        T* g = in.grad_buffer().data();
                        for (std::size_t i = 0; i < count; ++i) g[i] += factor * (in.value[i] - target[i]);
                      });
}

template <typename T>
Var<T> total_loss(const Var<T>& ce, const Var<T>& mse, double lambda) {
  if (!(lambda >= 0.0)) throw ValueError("loss weight must be non-negative");
  return add(ce, scale(mse, static_cast<T>(lambda)));
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : classes_(num_classes), counts_(num_classes * num_classes) {
  if (num_classes == 0) throw ValueError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::uint8_t truth, std::uint8_t predicted) {
  if (truth == kIgnoreLabel) return;
  if (truth >= classes_ || predicted >= classes_) throw ValueError("class id out of range for confusion matrix");
  ++counts_[truth * classes_ + predicted];
}

template <typename T>
void ConfusionMatrix::add_logits(const Tensor<T>& logits, std::span<const std::uint8_t> labels) {
  require_rank4(logits, "logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  if (classes != classes_) throw ShapeError("logits class count does not match the confusion matrix");
  if (labels.size() != batch * plane) throw ShapeError("label count does not match logits");
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const T* col = logits.data() + n * classes * plane + i;
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (col[c * plane] > col[best * plane]) best = c;
      }
      add(labels[n * plane + i], static_cast<std::uint8_t>(best));
    }
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ShapeError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::vector<std::optional<double>> class_iou(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  std::vector<std::optional<double>> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::uint64_t inter = cm.at(c, c);
    const std::uint64_t uni = row + col - inter;
    if (uni > 0) out[c] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

double miou(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ValueError("mIoU of an empty confusion matrix");
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& iou : class_iou(cm)) {
    if (!iou) continue;
    sum += *iou;
    ++present;
  }
  return sum / static_cast<double>(present);
}

std::string to_string(ModelKind kind) { return kind == ModelKind::baseline ? "baseline" : "epe"; }

ModelKind parse_model_kind(const std::string& text) {
  if (text == "baseline") return ModelKind::baseline;
  if (text == "epe") return ModelKind::epe;
  throw ValueError("unknown model mode '" + text + "' (expected baseline or epe)");
}

namespace {

EpeConfig epe_config_for(const ModelConfig& config) {
  EpeConfig epe;
  epe.patch_size = config.patch_size;
  epe.host_channels = config.host_width;
  epe.num_classes = config.num_classes;
  return epe;
}

}  // namespace

template <typename T>
SegModel<T>::SegModel(const ModelConfig& config)
    : config_(config),
      host_(registry_, HostConfig{config.host_width, config.num_classes, config.kind == ModelKind::baseline}) {
  if (config.kind == ModelKind::epe) epe_.emplace(registry_, epe_config_for(config));
}

template <typename T>
ModelOutput<T> SegModel<T>::forward(const Tensor<T>& images, Mode mode) const {
  ModelOutput<T> out;
  Var<T> features = host_.features(leaf(images), mode);
  if (!epe_) {
    out.logits = host_.classify(features);
    return out;
  }
  EpeOutput<T> routed = epe_->forward(images, mode);
  out.logits = epe_->integrate(features, routed.feature, mode);
  if (mode == Mode::train) out.reconstruction = epe_->reconstruct(routed.feature);
  out.plans = std::move(routed.plans);
  return out;
}

#define EPE_INSTANTIATE_SEGNET(T)                                                           \
  template class ToyHost<T>;                                                              \
  template class SegModel<T>;                                                             \
  template Var<T> cross_entropy_loss(const Var<T>&, std::span<const std::uint8_t>);       \
  template Var<T> mse_loss(const Var<T>&, const Tensor<T>&);                              \
  template Var<T> total_loss(const Var<T>&, const Var<T>&, double);                       \
  template void ConfusionMatrix::add_logits(const Tensor<T>&, std::span<const std::uint8_t>);

EPE_INSTANTIATE_SEGNET(float)
EPE_INSTANTIATE_SEGNET(double)

}  // namespace epe

#include "epe/epe_module.hpp"

#include <algorithm>

#include "epe/error.hpp"

namespace epe {

namespace {

template <typename T>
std::vector<ResidualBlock<T>> make_blocks(ParamRegistry<T>& registry, const std::string& name,
                                          const EncoderConfig& config) {
  std::vector<ResidualBlock<T>> blocks;
  blocks.reserve(config.num_blocks);
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    blocks.emplace_back(registry, name + ".block" + std::to_string(i), config.channels, config.channels,
                        config.kernel);
  }
  return blocks;
}

}  // namespace

template <typename T>
PatchEncoder<T>::PatchEncoder(ParamRegistry<T>& registry, const std::string& name, const EncoderConfig& config,
                              std::size_t patch_size)
    : lift(registry, name + ".lift", 1, config.channels, 1),
      blocks(make_blocks(registry, name, config)),
      project(registry, name + ".project", config.channels, 1, 1),
      name_(name),
      config_(config),
      patch_size_(patch_size) {}

template <typename T>
Var<T> PatchEncoder<T>::forward(const Var<T>& group, Mode mode) const {
  const Tensor<T>& g = group->value;
  require_rank4(g, "encoder input");
  if (g.dim(1) != 1 || g.dim(2) != patch_size_ || g.dim(3) != patch_size_) {
    throw ShapeError(name_ + " expects M x 1 x " + std::to_string(patch_size_) + " x " + std::to_string(patch_size_) +
                     " patches, got " + shape_to_string(g.shape()));
  }
  Var<T> h = lift.forward(group);
  for (const auto& block : blocks) h = block.forward(h, mode);
  return project.forward(h);
}

template <typename T>
FlopCount PatchEncoder<T>::flops(const Shape& input) const {
  FlopCount total = lift.flops(input);
  for (const auto& block : blocks) {
    const FlopCount f = block.flops(total.output);
    total = {total.ops + f.ops, f.output};
  }
  const FlopCount p = project.flops(total.output);
  return {total.ops + p.ops, p.output};
}

template <typename T>
PatchGroups<T> gather_groups(const Tensor<T>& patches, std::span<const RoutingPlan> plans) {
  require_rank4(patches, "gather_groups patches");
  const std::size_t batch = patches.dim(0), count = patches.dim(1), n = patches.dim(2);
  if (plans.size() != batch) {
    throw ShapeError("gather_groups: " + std::to_string(plans.size()) + " plans for a batch of " +
                     std::to_string(batch));
  }
  PatchGroups<T> out;
  for (std::size_t k = 0; k < 3; ++k) {
    auto& sources = out.sources[k];
    for (std::size_t b = 0; b < batch; ++b) {
      if (plans[b].patch_count != count) {
        throw ShapeError("gather_groups: plan covers " + std::to_string(plans[b].patch_count) + " patches, tensor has " +
                         std::to_string(count));
      }
      for (auto p : plans[b].groups[k]) {
        if (p >= count) throw ValueError("gather_groups: patch index " + std::to_string(p) + " out of range");
        sources.emplace_back(b, p);
      }
    }
    Tensor<T> group({sources.size(), 1, n, n});
    const std::size_t area = n * n;
    for (std::size_t j = 0; j < sources.size(); ++j) {
      const auto [b, p] = sources[j];
      std::copy_n(&patches.at(b, p, 0, 0), area, group.data() + j * area);
    }
    out.groups[k] = std::move(group);
  }
  return out;
}

template <typename T>
Var<T> scatter_fold(const std::array<Var<T>, 3>& outputs, const PatchGroups<T>& layout, std::size_t batch,
                    std::size_t height, std::size_t width) {
  std::size_t n = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor<T>& v = outputs[k]->value;
    require_rank4(v, "scatter_fold group");
    if (v.dim(0) != layout.sources[k].size() || v.dim(1) != 1 || v.dim(2) != v.dim(3)) {
      throw ShapeError("scatter_fold: group " + std::to_string(k) + " output " + shape_to_string(v.shape()) +
                       " does not match its " + std::to_string(layout.sources[k].size()) + " source patches");
    }
    if (k == 0) n = v.dim(2);
    if (v.dim(2) != n) throw ShapeError("scatter_fold: groups disagree on patch size");
  }
  if (n == 0 || height % n != 0 || width % n != 0) throw ShapeError("scatter_fold: image not divisible by patch size");
  const std::size_t grid_w = width / n, area = n * n;

  Tensor<T> patches({batch, (height / n) * grid_w, n, n});
  std::vector<char> covered(shape_numel({batch, patches.dim(1)}), 0);
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor<T>& v = outputs[k]->value;
    for (std::size_t j = 0; j < layout.sources[k].size(); ++j) {
      const auto [b, p] = layout.sources[k][j];
      std::copy_n(v.data() + j * area, area, &patches.at(b, p, 0, 0));
      covered[b * patches.dim(1) + p] = 1;
    }
  }
  if (std::find(covered.begin(), covered.end(), 0) != covered.end()) {
    throw ShapeError("scatter_fold: routing plans do not cover every patch");
  }
  Tensor<T> image = fold(patches, height, width);

  std::vector<Var<T>> parents(outputs.begin(), outputs.end());
  return make_node<T>(std::move(image), std::move(parents), [layout_sources = layout.sources, grid_w, n,
                                                            area](Node<T>& self) {
    for (std::size_t k = 0; k < 3; ++k) {
      Node<T>& group = *self.parents[k];
      if (!group.requires_grad || layout_sources[k].empty()) continue;
      T* g = group.grad_buffer().data();
      const std::size_t height = self.value.dim(2), width = self.value.dim(3);
      for (std::size_t j = 0; j < layout_sources[k].size(); ++j) {
        const auto [b, p] = layout_sources[k][j];
        const std::size_t y0 = (p / grid_w) * n, x0 = (p % grid_w) * n;
        for (std::size_t y = 0; y < n; ++y) {
          const T* src = self.grad.data() + (b * height + y0 + y) * width + x0;
          T* dst = g + j * area + y * n;
          for (std::size_t x = 0; x < n; ++x) dst[x] += src[x];
        }
      }
    }
  });
}

namespace {

template <typename T>
std::vector<PatchEncoder<T>> make_encoders(ParamRegistry<T>& registry, const EpeConfig& config,
                                           const std::string& prefix) {
  static constexpr const char* names[] = {"large", "medium", "small"};
  std::vector<PatchEncoder<T>> encoders;
  encoders.reserve(3);
  for (std::size_t k = 0; k < 3; ++k) {
    encoders.emplace_back(registry, prefix + ".encoder_" + names[k],
                          EncoderConfig{config.channels[k], config.num_blocks, 3}, config.patch_size);
  }
  return encoders;
}

}  // namespace

template <typename T>
EpeModule<T>::EpeModule(ParamRegistry<T>& registry, const EpeConfig& config, const std::string& prefix)
    : encoders(make_encoders(registry, config, prefix)),
      recon{Conv2d<T>(registry, prefix + ".recon0", 1, config.recon_width, 3, {1, 1, 1}),
            Conv2d<T>(registry, prefix + ".recon1", config.recon_width, config.recon_width, 3, {1, 1, 1}),
            Conv2d<T>(registry, prefix + ".recon2", config.recon_width, 3, 3, {1, 1, 1})},
      post_concat_bn(registry, prefix + ".post_concat_bn", config.host_channels + 1),
      final_conv(registry, prefix + ".final_conv", config.host_channels + 1, config.num_classes, 1),
      config_(config),
      prefix_(prefix) {
  if (config.patch_size == 0) throw ValueError("patch size must be positive");
}

template <typename T>
Var<T> EpeModule<T>::encode_group(std::size_t k, const Var<T>& group, Mode mode) const {
  if (k >= encoders.size()) throw ValueError("encoder index out of range");
  return encoders[k].forward(group, mode);
}

template <typename T>
Var<T> EpeModule<T>::forward_with_plans(const Tensor<T>& images, std::span<const RoutingPlan> plans,
                                        Mode mode) const {
  require_rank4(images, "EPE input");
  const Tensor<T> gray = images.dim(1) == 1 ? images : to_grayscale(images);
  const Tensor<T> patches = unfold(gray, config_.patch_size);
  const PatchGroups<T> layout = gather_groups(patches, plans);
  std::array<Var<T>, 3> outputs;
  for (std::size_t k = 0; k < 3; ++k) outputs[k] = encode_group(k, leaf(layout.groups[k]), mode);
  return scatter_fold(outputs, layout, images.dim(0), images.dim(2), images.dim(3));
}

template <typename T>
EpeOutput<T> EpeModule<T>::forward(const Tensor<T>& images, Mode mode) const {
  require_rank4(images, "EPE input");
  const std::size_t n = config_.patch_size;
  if (images.dim(2) % n != 0 || images.dim(3) % n != 0) {
    throw ShapeError("EPE input " + shape_to_string(images.shape()) + " is not divisible by patch size " +
                     std::to_string(n) + "; pad the image first");
  }
  const Tensor<T> gray = to_grayscale(images);
  EpeOutput<T> out;
  for (std::size_t b = 0; b < images.dim(0); ++b) {
    out.plans.push_back(partition_patches(entropy_map_from_gray(gray, b, n), config_.fractions));
  }
  out.feature = forward_with_plans(gray, out.plans, mode);
  return out;
}

template <typename T>
Var<T> EpeModule<T>::integrate(const Var<T>& host_features, const Var<T>& epe_feature, Mode mode) const {
  const Tensor<T>& h = host_features->value;
  const Tensor<T>& e = epe_feature->value;
  require_rank4(h, "host features");
  require_rank4(e, "EPE feature");
  if (h.dim(2) != e.dim(2) || h.dim(3) != e.dim(3)) {
    throw ShapeError("integrate: host features " + shape_to_string(h.shape()) + " and EPE feature " +
                     shape_to_string(e.shape()) + " differ spatially");
  }
  return final_conv.forward(post_concat_bn.forward(concat_channels(host_features, epe_feature), mode));
}

template <typename T>
Var<T> EpeModule<T>::reconstruct(const Var<T>& epe_feature) const {
  Var<T> h = relu(recon[0].forward(epe_feature));
  h = relu(recon[1].forward(h));
  return recon[2].forward(h);
}

template <typename T>
EpeCostReport EpeModule<T>::cost_report(const ParamRegistry<T>& registry, std::size_t height,
                                        std::size_t width) const {
  const std::size_t n = config_.patch_size;
  if (height % n != 0 || width % n != 0) {
    throw ShapeError("cost report: " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by patch size " + std::to_string(n));
  }
  EpeCostReport report;
  report.params_total = count_params(registry, prefix_ + ".");
  report.patch_count = (height / n) * (width / n);
  report.group_sizes = group_sizes(report.patch_count, config_.fractions);
  for (std::size_t k = 0; k < 3; ++k) {
    report.params_per_encoder[k] = count_params(registry, encoders[k].name() + ".");
    report.flops_per_patch[k] = count_flops(encoders[k], {1, 1, n, n});
    report.flops_routed += report.group_sizes[k] * report.flops_per_patch[k];
  }
  report.flops_uniform_large = report.patch_count * report.flops_per_patch[0];
  return report;
}

#define EPE_INSTANTIATE_MODULE(T)                                                                        \
  template class PatchEncoder<T>;                                                                      \
  template class EpeModule<T>;                                                                         \
  template PatchGroups<T> gather_groups(const Tensor<T>&, std::span<const RoutingPlan>);               \
  template Var<T> scatter_fold(const std::array<Var<T>, 3>&, const PatchGroups<T>&, std::size_t, std::size_t, \
                               std::size_t);

EPE_INSTANTIATE_MODULE(float)
EPE_INSTANTIATE_MODULE(double)

}  // namespace epe

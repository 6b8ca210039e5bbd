#include <doctest.h>

#include "epe/epe_module.hpp"
#include "epe/error.hpp"
#include "epe/segnet.hpp"
#include "epe/verify.hpp"
#include "helpers.hpp"

using namespace epe;
using testing::random_tensor;

namespace {

/// Lift to channel 0, zero every residual main branch, project channel 0 back.
/// Non-negative inputs then pass through unchanged.
template <typename T>
void make_identity(PatchEncoder<T>& enc) {
  enc.lift.weight->value.fill(0);
  enc.lift.bias->value.fill(0);
  enc.lift.weight->value[0] = 1;
  for (auto& block : enc.blocks) {
    for (auto* c : {&block.conv2.depthwise, &block.conv2.pointwise}) {
      c->weight->value.fill(0);
      c->bias->value.fill(0);
    }
  }
  enc.project.weight->value.fill(0);
  enc.project.bias->value.fill(0);
  enc.project.weight->value[0] = 1;
}

EpeConfig small_config(std::size_t n) {
  EpeConfig c;
  c.patch_size = n;
  return c;
}

}  // namespace

TEST_CASE("gather_groups shapes and empty groups") {
  Tensor<double> patches({1, 5, 4, 4});
  RoutingPlan plan;
  plan.groups = {std::vector<std::size_t>{3}, {0, 4}, {1, 2}};
  plan.patch_count = 5;
  const std::vector<RoutingPlan> plans{plan};
  const auto g = gather_groups(patches, plans);
  CHECK(g.groups[0].shape() == Shape{1, 1, 4, 4});
  CHECK(g.groups[1].shape() == Shape{2, 1, 4, 4});
  CHECK(g.groups[2].shape() == Shape{2, 1, 4, 4});
  CHECK(g.sources[1][1] == std::pair<std::size_t, std::size_t>{0, 4});

  const std::vector<RoutingPlan> single{partition_patches(std::vector<double>{0.3})};
  const auto tiny = gather_groups(Tensor<double>({1, 1, 4, 4}), single);
  CHECK(tiny.groups[0].shape() == Shape{0, 1, 4, 4});
  CHECK(tiny.groups[2].shape() == Shape{1, 1, 4, 4});

  RoutingPlan bad = plan;
  bad.groups[0] = {7};
  const std::vector<RoutingPlan> bad_plans{bad};
  CHECK_THROWS(gather_groups(patches, bad_plans));
}

TEST_CASE("scatter inverts gather") {
  Rng rng(1);
  const auto image = random_tensor({2, 1, 12, 8}, rng);
  const auto patches = unfold(image, 4);
  std::vector<RoutingPlan> plans;
  for (int i = 0; i < 2; ++i) {
    std::vector<double> e(6);
    for (auto& v : e) v = rng.uniform();
    plans.push_back(partition_patches(e));
  }
  const auto layout = gather_groups(patches, plans);
  std::array<Var<double>, 3> outs{leaf(layout.groups[0]), leaf(layout.groups[1]), leaf(layout.groups[2])};
  CHECK(scatter_fold(outs, layout, 2, 12, 8)->value == image);
}

TEST_CASE("patch encoder shape contract") {
  ParamRegistry<double> reg;
  PatchEncoder<double> enc(reg, "enc", EncoderConfig{4, 6, 3}, 8);
  init_params(reg, 2);
  Rng rng(2);
  for (std::size_t g : {0u, 1u, 7u}) {
    CHECK(enc.forward(leaf(random_tensor({g, 1, 8, 8}, rng)), Mode::train)->value.shape() == Shape{g, 1, 8, 8});
  }
  CHECK_THROWS_AS(enc.forward(leaf(Tensor<double>({1, 1, 8, 4})), Mode::train), ShapeError);

  SUBCASE("zeroed projection gives zeros") {
    enc.project.weight->value.fill(0);
    enc.project.bias->value.fill(0);
    const auto out = enc.forward(leaf(random_tensor({3, 1, 8, 8}, rng)), Mode::train);
    for (double v : out->value.values()) CHECK(v == 0.0);
  }
  SUBCASE("small encoder gradient") {
    std::vector<verify::NamedVar> inputs;
    for (const auto& p : reg.parameters()) inputs.push_back({p.name, p.var});
    auto x = leaf(random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0), true);
    inputs.push_back({"x", x});
    auto r = leaf(random_tensor({2, 1, 8, 8}, rng));
    const auto res = verify::check_gradients(inputs, [&] { return sum(mul(enc.forward(x, Mode::train), r)); },
                                             {.max_coords_per_tensor = 3});
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("identity encoders reproduce the grayscale image") {
  ParamRegistry<double> reg;
  EpeModule<double> epe(reg, small_config(8));
  init_params(reg, 3);
  for (auto& enc : epe.encoders) make_identity(enc);
  Rng rng(3);
  const auto image = random_tensor({2, 3, 16, 24}, rng, 0.0, 1.0);
  for (Mode mode : {Mode::train, Mode::eval}) {
    const auto out = epe.forward(image, mode);
    CHECK(out.feature->value == to_grayscale(image));
    CHECK(out.plans.size() == 2);
  }

  SUBCASE("tagged patches land at their source positions") {
    Tensor<double> tagged({1, 1, 16, 24});
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 24; ++x) tagged.at(0, 0, y, x) = static_cast<double>((y / 8) * 3 + x / 8 + 1) / 8.0;
    std::vector<double> e{0.5, 0.9, 0.1, 0.7, 0.3, 0.2};
    const std::vector<RoutingPlan> plans{partition_patches(e)};
    CHECK(epe.forward_with_plans(tagged, plans, Mode::eval)->value == tagged);
  }
}

TEST_CASE("flat image routes by index and stays well formed") {
  ParamRegistry<float> reg;
  EpeModule<float> epe(reg, small_config(8));
  init_params(reg, 4);
  const auto out = epe.forward(Tensor<float>({1, 3, 32, 32}, 0.4f), Mode::eval);
  CHECK(out.feature->value.shape() == Shape{1, 1, 32, 32});
  CHECK(out.plans[0].high() == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("integration and reconstruction") {
  ParamRegistry<double> reg;
  EpeConfig config = small_config(8);
  config.num_classes = 5;
  EpeModule<double> epe(reg, config);
  init_params(reg, 5);
  Rng rng(5);
  auto host = leaf(random_tensor({1, 8, 8, 8}, rng), true);
  auto feature = leaf(random_tensor({1, 1, 8, 8}, rng), true);

  const auto logits = epe.integrate(host, feature, Mode::train);
  CHECK(logits->value.shape() == Shape{1, 5, 8, 8});
  backward(sum(mul(logits, leaf(random_tensor({1, 5, 8, 8}, rng)))));
  auto nonzero = [](const Tensor<double>& g) {
    for (double v : g.values())
      if (v != 0.0) return true;
    return false;
  };
  CHECK(nonzero(host->grad));
  CHECK(nonzero(feature->grad));
  CHECK_THROWS_AS(epe.integrate(host, leaf(Tensor<double>({1, 1, 4, 8})), Mode::train), ShapeError);

  SUBCASE("zero final conv gives the class biases") {
    epe.final_conv.weight->value.fill(0);
    for (std::size_t k = 0; k < 5; ++k) epe.final_conv.bias->value[k] = 0.1 * static_cast<double>(k);
    const auto z = epe.integrate(host, feature, Mode::eval)->value;
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t i = 0; i < 64; ++i) CHECK(z.at(0, k, i / 8, i % 8) == 0.1 * static_cast<double>(k));
  }
  SUBCASE("reconstruction head") {
    const auto image = random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
    CHECK(epe.reconstruct(feature)->value.shape() == Shape{1, 3, 8, 8});
    epe.recon[2].weight->value.fill(0);
    epe.recon[2].bias->value.fill(0);
    const auto rec = epe.reconstruct(feature);
    for (double v : rec->value.values()) CHECK(v == 0.0);
    double mean_sq = 0;
    for (double v : image.values()) mean_sq += v * v;
    CHECK(mse_loss(rec, image)->value[0] == doctest::Approx(mean_sq / 192.0).epsilon(1e-12));
  }
  SUBCASE("reconstruction gradient") {
    std::vector<verify::NamedVar> inputs{{"feature", feature}};
    for (const auto& p : reg.parameters())
      if (p.name.find("recon") != std::string::npos) inputs.push_back({p.name, p.var});
    const auto target = random_tensor({1, 3, 8, 8}, rng);
    const auto res = verify::check_gradients(inputs, [&] { return mse_loss(epe.reconstruct(feature), target); },
                                             {.max_coords_per_tensor = 8});
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("cost report") {
  ParamRegistry<float> reg;
  const EpeModule<float> epe(reg, EpeConfig{});
  const auto cost = epe.cost_report(reg, 128, 128);
  CHECK(cost.patch_count == 16);
  CHECK(cost.group_sizes == std::array<std::size_t, 3>{3, 6, 7});
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t c = std::array<std::size_t, 3>{16, 8, 4}[k];
    CHECK(cost.params_per_encoder[k] == 12 * c * c + 159 * c + 1);
  }
  CHECK(cost.params_per_encoder[0] > cost.params_per_encoder[1]);
  CHECK(cost.params_per_encoder[1] > cost.params_per_encoder[2]);
  CHECK(cost.flops_routed == 3 * cost.flops_per_patch[0] + 6 * cost.flops_per_patch[1] + 7 * cost.flops_per_patch[2]);
  CHECK(cost.flops_uniform_large == 16 * cost.flops_per_patch[0]);
  CHECK(cost.flop_ratio() < 0.5);
  CHECK_THROWS_AS(epe.cost_report(reg, 100, 128), ShapeError);

  for (std::size_t side : {64u, 96u, 160u}) {
    CHECK(epe.cost_report(reg, side, 32).flops_routed < epe.cost_report(reg, side, 32).flops_uniform_large);
  }

  ParamRegistry<float> reg_all;
  EpeConfig all_large;
  all_large.fractions = {1.0, 0.0, 0.0};
  const EpeModule<float> degenerate(reg_all, all_large);
  const auto d = degenerate.cost_report(reg_all, 128, 128);
  CHECK(d.flops_routed == d.flops_uniform_large);
}

TEST_CASE("routing is deterministic") {
  ParamRegistry<float> reg;
  EpeModule<float> epe(reg, small_config(8));
  init_params(reg, 6);
  Rng rng(6);
  const auto image = random_tensor<float>({1, 3, 32, 32}, rng, 0.0, 1.0);
  const auto a = epe.forward(image, Mode::eval), b = epe.forward(image, Mode::eval);
  CHECK(a.plans == b.plans);
  CHECK(a.feature->value == b.feature->value);
}

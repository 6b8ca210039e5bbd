#include <doctest.h>

#include <cmath>

#include "epe/error.hpp"
#include "epe/ops.hpp"
#include "epe/verify.hpp"
#include "helpers.hpp"

using namespace epe;
using testing::random_tensor;

TEST_CASE("tensor shape and storage") {
  Tensor<float> t({2, 3, 4, 5}, 1.5f);
  CHECK(t.numel() == 120);
  CHECK(t.rank() == 4);
  CHECK(t.at(1, 2, 3, 4) == 1.5f);
  CHECK(shape_to_string(t.shape()) == "[2x3x4x5]");
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>(3)), ShapeError);
  CHECK_THROWS_AS(Tensor<float>(Shape{1, 1, 1, 1, 1}), ShapeError);
  CHECK(Tensor<float>({0, 1, 4, 4}).numel() == 0);
}

TEST_CASE("elementwise ops") {
  auto a = leaf(Tensor<double>({2}, {1, 2}));
  auto b = leaf(Tensor<double>({2}, {3, 4}));
  CHECK(add(a, b)->value.storage() == std::vector<double>{4, 6});
  CHECK(sub(a, b)->value.storage() == std::vector<double>{-2, -2});
  CHECK(mul(a, b)->value.storage() == std::vector<double>{3, 8});
  CHECK(scale(a, 2.0)->value.storage() == std::vector<double>{2, 4});
  CHECK(relu(leaf(Tensor<double>({3}, {-1, 0, 2})))->value.storage() == std::vector<double>{0, 0, 2});
  CHECK_THROWS_WITH_AS(add(a, leaf(Tensor<double>({3}))), doctest::Contains("[2]"), ShapeError);
}

TEST_CASE("relu derivative at zero is zero") {
  auto x = leaf(Tensor<double>({3}, {-1, 0, 2}), true);
  backward(sum(relu(x)));
  CHECK(x->grad.storage() == std::vector<double>{0, 0, 1});
}

TEST_CASE("backward basics") {
  Rng rng(1);
  auto x = leaf(random_tensor({2, 3}, rng), true);
  SUBCASE("sum gives ones") {
    backward(sum(x));
    for (double g : x->grad.values()) CHECK(g == 1.0);
  }
  SUBCASE("sum of squares gives 2x") {
    backward(sum(mul(x, x)));
    for (std::size_t i = 0; i < x->value.numel(); ++i) CHECK(x->grad[i] == doctest::Approx(2 * x->value[i]));
  }
  SUBCASE("fan-out accumulates") {
    backward(sum(add(x, x)));
    for (double g : x->grad.values()) CHECK(g == 2.0);
  }
  SUBCASE("non-scalar loss rejected") { CHECK_THROWS_AS(backward(x), ShapeError); }
}

TEST_CASE("two backward sweeps double every gradient") {
  Rng rng(2);
  auto x = leaf(random_tensor({1, 2, 5, 5}, rng), true);
  auto w = leaf(random_tensor({3, 2, 3, 3}, rng), true);
  auto loss = sum(mul(relu(conv2d(x, w, Var<double>{}, {1, 1, 1})), leaf(random_tensor({1, 3, 5, 5}, rng))));
  backward(loss);
  const auto gx = x->grad, gw = w->grad;
  backward(loss);
  for (std::size_t i = 0; i < gx.numel(); ++i) CHECK(x->grad[i] == 2 * gx[i]);
  for (std::size_t i = 0; i < gw.numel(); ++i) CHECK(w->grad[i] == 2 * gw[i]);
}

TEST_CASE("mul gradient matches finite differences") {
  Rng rng(3);
  auto a = leaf(random_tensor({4, 3}, rng), true);
  auto b = leaf(random_tensor({4, 3}, rng), true);
  const std::vector<verify::NamedVar> inputs{{"a", a}, {"b", b}};
  const auto r = verify::check_gradients(inputs, [&] { return sum(mul(a, b)); });
  CHECK(r.max_rel_error < 1e-6);
  for (std::size_t i = 0; i < a->value.numel(); ++i) CHECK(a->grad[i] == b->value[i]);
}

TEST_CASE("conv2d examples") {
  SUBCASE("dirac kernel with padding is identity") {
    Tensor<double> x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor<double> k({1, 1, 3, 3});
    k[4] = 1;
    CHECK(conv2d(leaf(x), leaf(k), Var<double>{}, {1, 1, 1})->value == x);
  }
  SUBCASE("all-ones 2x2 kernel sums the window") {
    Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
    auto y = conv2d(leaf(x), leaf(Tensor<double>({1, 1, 2, 2}, 1.0)), Var<double>{});
    CHECK(y->value.shape() == Shape{1, 1, 1, 1});
    CHECK(y->value[0] == 10.0);
  }
  SUBCASE("dirac depthwise identity for any channel count") {
    Rng rng(4);
    for (std::size_t c : {1u, 3u, 8u}) {
      auto x = random_tensor({2, c, 5, 4}, rng);
      Tensor<double> k({c, 1, 3, 3});
      for (std::size_t i = 0; i < c; ++i) k.at(i, 0, 1, 1) = 1;
      CHECK(conv2d(leaf(x), leaf(k), Var<double>{}, {1, 1, c})->value == x);
    }
  }
  SUBCASE("output extent") {
    CHECK(conv_output_extent(7, 3, 2, 1) == 4);
    CHECK(conv_output_extent(5, 3, 1, 0) == 3);
    CHECK_THROWS_AS(conv_output_extent(1, 5, 1, 0), ShapeError);
  }
  SUBCASE("group mismatch rejected") {
    auto x = leaf(Tensor<double>({1, 3, 4, 4}));
    auto w = leaf(Tensor<double>({4, 1, 3, 3}));
    CHECK_THROWS(conv2d(x, w, Var<double>{}, {1, 1, 2}));
  }
}

TEST_CASE("conv2d matches the naive oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t groups = 1 + rng.below(2), stride = 1 + rng.below(2), padding = rng.below(3);
    const std::size_t cin = 2 * groups, cout = 2 * groups, k = 1 + rng.below(3);
    auto x = random_tensor({2, cin, 6 + rng.below(3), 5 + rng.below(3)}, rng);
    auto w = random_tensor({cout, cin / groups, k, k}, rng);
    auto b = random_tensor({cout}, rng);
    const Conv2dParams p{stride, padding, groups};
    const auto got = conv2d(leaf(x), leaf(w), leaf(b), p)->value;
    const auto want = verify::naive_conv2d(x, w, &b, p);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("grouped conv gradient on three shapes") {
  Rng rng(6);
  const Shape shapes[] = {{2, 4, 5, 5}, {1, 4, 6, 3}, {3, 4, 4, 7}};
  for (const auto& shape : shapes) {
    auto x = leaf(random_tensor(shape, rng), true);
    auto w = leaf(random_tensor({4, 2, 3, 3}, rng), true);
    auto b = leaf(random_tensor({4}, rng), true);
    auto r = leaf(random_tensor({shape[0], 4, shape[2], shape[3]}, rng));
    const std::vector<verify::NamedVar> inputs{{"x", x}, {"w", w}, {"b", b}};
    const auto res = verify::check_gradients(inputs, [&] { return sum(mul(conv2d(x, w, b, {1, 1, 2}), r)); });
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("concat_channels") {
  Rng rng(7);
  auto a = leaf(random_tensor({1, 2, 2, 2}, rng), true);
  auto b = leaf(random_tensor({1, 3, 2, 2}, rng), true);
  auto c = concat_channels(a, b);
  CHECK(c->value.shape() == Shape{1, 5, 2, 2});
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) CHECK(c->value.at(0, 0, y, x) == a->value.at(0, 0, y, x));
  auto r = random_tensor({1, 5, 2, 2}, rng);
  backward(sum(mul(c, leaf(r))));
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x) CHECK(b->grad.at(0, ch, y, x) == r.at(0, 2 + ch, y, x));
  CHECK_THROWS_AS(concat_channels(a, leaf(Tensor<double>({1, 1, 3, 2}))), ShapeError);
}

TEST_CASE("unfold and fold") {
  Tensor<double> ramp({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i);
  const auto p = unfold(ramp, 2);
  CHECK(p.shape() == Shape{1, 4, 2, 2});
  CHECK(p.at(0, 0, 0, 0) == 0);
  CHECK(p.at(0, 0, 0, 1) == 1);
  CHECK(p.at(0, 0, 1, 0) == 4);
  CHECK(p.at(0, 0, 1, 1) == 5);
  CHECK(p.at(0, 3, 0, 0) == 10);
  CHECK(p.at(0, 3, 1, 1) == 15);

  CHECK(unfold(ramp, 4).storage() == ramp.storage());
  CHECK(unfold(Tensor<float>({1, 1, 512, 1024}), 32).shape() == Shape{1, 512, 32, 32});
  CHECK_THROWS_WITH_AS(unfold(Tensor<float>({1, 1, 5, 4}), 2), doctest::Contains("pad"), ShapeError);
  CHECK_THROWS_AS(fold(Tensor<float>({1, 3, 2, 2}), 4, 4), ShapeError);

  Rng rng(8);
  for (std::size_t n : {1u, 2u, 4u, 32u}) {
    auto x = random_tensor({2, 1, 2 * n, 3 * n}, rng);
    CHECK(fold(unfold(x, n), 2 * n, 3 * n) == x);
    auto patches = random_tensor({2, 6, n, n}, rng);
    CHECK(unfold(fold(patches, 2 * n, 3 * n), n) == patches);
  }
}

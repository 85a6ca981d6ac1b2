#include <doctest.h>

#include "occtrack/ops.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace occtrack;
using testutil::naive_conv;
using testutil::random_tensor;

TEST_CASE("tensor shape bookkeeping") {
  Tensor<double> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  t(1, 2, 3) = 5;
  CHECK(t[23] == 5);
  CHECK(t.matrix().rows() == 2);
  CHECK(t.matrix().cols() == 12);
  CHECK_THROWS_AS(Tensor<double>(Shape{}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>({1, 2, 3, 4, 5}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, Tensor<double>::Array::Zero(3)), ShapeError);
  CHECK_THROWS_AS(Tensor<double>({2, 2}).item(), ShapeError);
  CHECK(Tensor<double>::scalar(3.5).item() == 3.5);
}

TEST_CASE("conv2d_dilated matches the nested-loop oracle") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 9), ch(1, 3);
  for (int dilation : {1, 2, 4})
    for (int trial = 0; trial < 20; ++trial) {
      const int cin = ch(rng), cout = ch(rng), h = dim(rng), w = dim(rng);
      const auto in = random_tensor({cin, h, w}, rng);
      const auto k = random_tensor({cout, cin, 3, 3}, rng);
      const auto got = conv2d_dilated(in, k, dilation);
      const auto want = naive_conv(in, k, dilation);
      CHECK((got.array() - want.array()).abs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("delta kernel is the identity at every dilation") {
  std::mt19937_64 rng(5);
  const auto in = random_tensor({1, 6, 7}, rng);
  Tensor<double> k({1, 1, 3, 3});
  k(0, 0, 1, 1) = 1;
  for (int d : {1, 2, 3, 4}) CHECK(conv2d_dilated(in, k, d) == in);
}

TEST_CASE("corner weight at dilation 2 moves a single cell diagonally") {
  Tensor<double> in({1, 7, 7});
  in(0, 2, 2) = 1;
  Tensor<double> k({1, 1, 3, 3});
  k(0, 0, 0, 0) = 1;  // dy = -1, dx = -1
  const auto out = conv2d_dilated(in, k, 2);
  CHECK(out(0, 4, 4) == 1);
  CHECK(out.array().sum() == 1);
}

TEST_CASE("conv bias broadcasts per channel or per cell") {
  std::mt19937_64 rng(9);
  const auto in = random_tensor({2, 4, 4}, rng);
  const auto k = random_tensor({3, 2, 3, 3}, rng);
  const auto plain = conv2d_dilated(in, k, 1);

  const auto per_cell = random_tensor({3, 4, 4}, rng);
  CHECK(conv2d_dilated(in, k, 1, per_cell) == plain + per_cell);

  const auto per_channel = random_tensor({3}, rng);
  const auto out = conv2d_dilated(in, k, 1, per_channel);
  for (int o = 0; o < 3; ++o) CHECK(out(o, 2, 1) == doctest::Approx(plain(o, 2, 1) + per_channel[o]).epsilon(1e-14));

  CHECK_THROWS_AS(conv2d_dilated(in, k, 1, Tensor<double>({3, 4})), ShapeError);
}

TEST_CASE("conv shape errors") {
  Tensor<double> in({2, 4, 4});
  CHECK_THROWS_AS(conv2d_dilated(in, Tensor<double>({1, 3, 3, 3}), 1), ShapeError);
  CHECK_THROWS_AS(conv2d_dilated(in, Tensor<double>({1, 2, 5, 5}), 1), ShapeError);
  CHECK_THROWS_AS(conv2d_dilated(in, Tensor<double>({1, 2, 3, 3}), 0), ShapeError);
  CHECK_THROWS_AS(conv2d_dilated(Tensor<double>({2, 4}), Tensor<double>({1, 2, 3, 3}), 1), ShapeError);
}

TEST_CASE("pointwise conv is a per-cell matrix product") {
  std::mt19937_64 rng(4);
  const auto in = random_tensor({3, 2, 5}, rng);
  const auto w = random_tensor({2, 3}, rng);
  const auto b = random_tensor({2}, rng);
  const auto out = pointwise_conv(in, w, b);
  for (int o = 0; o < 2; ++o)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 5; ++x) {
        double acc = b[o];
        for (int i = 0; i < 3; ++i) acc += w.matrix()(o, i) * in(i, y, x);
        CHECK(std::abs(out(o, y, x) - acc) < 1e-14);
      }
  CHECK_THROWS_AS(pointwise_conv(in, Tensor<double>({2, 2}), b), ShapeError);
}

TEST_CASE("elementwise ops") {
  std::mt19937_64 rng(1);
  const auto a = random_tensor({2, 3, 3}, rng);
  CHECK((sigmoid(Tensor<double>({1, 3, 3})).array() == 0.5).all());
  CHECK((tanh_act(Tensor<double>({1, 3, 3})).array() == 0.0).all());
  CHECK(elem_mul(a, Tensor<double>::constant({2, 3, 3}, 1.0)) == a);
  CHECK((one_minus(a).array() == 1.0 - a.array()).all());
  CHECK((elem_add(a, a).array() == 2.0 * a.array()).all());
  CHECK_THROWS_AS(elem_mul(a, Tensor<double>({2, 3, 2})), ShapeError);
  CHECK_THROWS_AS(elem_add(a, Tensor<double>({3, 3, 3})), ShapeError);

  Tensor<double> extreme({1, 1, 2});
  extreme[0] = 800;
  extreme[1] = -800;
  CHECK(sigmoid(extreme).all_finite());
  CHECK(sigmoid(extreme)[0] == 1.0);
  CHECK(sigmoid(extreme)[1] >= 0.0);
}

TEST_CASE("softmax per cell") {
  const auto uniform = softmax_per_cell(Tensor<double>({4, 3, 3}));
  CHECK((uniform.array() - 0.25).abs().maxCoeff() < 1e-15);

  Tensor<double> two({2, 2, 2});
  for (int i = 0; i < 4; ++i) {
    two[i] = std::log(1.0);
    two[4 + i] = std::log(3.0);
  }
  const auto p = softmax_per_cell(two);
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p[4] == doctest::Approx(0.75).epsilon(1e-12));

  std::mt19937_64 rng(8);
  const auto logits = random_tensor({5, 4, 6}, rng, -30, 30);
  const auto s = softmax_per_cell(logits);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) {
      double denom = 0, sum = 0;
      for (int k = 0; k < 5; ++k) denom += std::exp(logits(k, y, x));
      for (int k = 0; k < 5; ++k) {
        CHECK(std::abs(s(k, y, x) - std::exp(logits(k, y, x)) / denom) < 1e-9);
        CHECK(s(k, y, x) > 0);
        sum += s(k, y, x);
      }
      CHECK(std::abs(sum - 1) < 1e-9);
    }

  Tensor<double> huge({2, 1, 1});
  huge[0] = 1e4;
  CHECK(softmax_per_cell(huge).all_finite());
  CHECK_THROWS_AS(softmax_per_cell(Tensor<double>({1, 2, 2})), ShapeError);
}

TEST_CASE("masked BCE hand example") {
  Tensor<double> pred({2, 2}), target({2, 2}), mask({2, 2});
  pred.array() << 0.9, 0.2, 0.5, 0.5;
  target.array() << 1, 0, 1, 0;
  mask.array() << 1, 1, 0, 0;
  CHECK(masked_bce_loss(pred, target, mask) == doctest::Approx((-std::log(0.9) - std::log(0.8)) / 2).epsilon(1e-14));
  CHECK(masked_bce_loss(pred, target, Tensor<double>({2, 2})) == 0.0);

  Tensor<double> exact({2, 2});
  exact.array() << 1, 0, 1, 0;
  const auto ones = Tensor<double>::constant({2, 2}, 1);
  CHECK(masked_bce_loss(exact, target, ones) <= 1e-6 * 4);
  // a [1,H,W] prediction pairs with [H,W] target and mask
  CHECK(masked_bce_loss(pred.reshaped({1, 2, 2}), target, mask) == masked_bce_loss(pred, target, mask));
  CHECK_THROWS_AS(masked_bce_loss(pred, Tensor<double>({2, 3}), mask), ShapeError);
}

TEST_CASE("weighted masked NLL examples") {
  const auto uniform = Tensor<double>::constant({4, 3, 3}, 0.25);
  ByteGrid labels(3, 3);
  labels << 0, 1, 2, 3, kIgnoreLabel, 1, 2, 2, 0;
  CHECK(weighted_masked_nll(uniform, labels, {1.0, 1.0, 1.0, 1.0}) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(weighted_masked_nll(uniform, labels, {0.3, 2.0, 5.0, 1.0}) == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  ByteGrid none = ByteGrid::Constant(3, 3, kIgnoreLabel);
  CHECK(weighted_masked_nll(uniform, none, {1.0, 1.0, 1.0, 1.0}) == 0.0);

  auto half = Tensor<double>::constant({4, 3, 3}, 0.5 / 3);
  ByteGrid single = none;
  single(1, 2) = 2;
  half(2, 1, 2) = 0.5;
  CHECK(weighted_masked_nll(half, single, {1.0, 1.0, 2.0, 1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  ByteGrid bad = none;
  bad(0, 0) = 4;
  CHECK_THROWS_AS(weighted_masked_nll(uniform, bad, {1.0, 1.0, 1.0, 1.0}), std::out_of_range);
  CHECK_THROWS(weighted_masked_nll(uniform, labels, {1.0, 0.0, 1.0, 1.0}));
  CHECK_THROWS_AS(weighted_masked_nll(uniform, labels, {1.0, 1.0, 1.0}), ShapeError);
}

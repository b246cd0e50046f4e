#include <doctest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "szoo/ops.hpp"
#include "szoo/tape.hpp"

using namespace szoo;
using szoo::test::gradcheck;
using szoo::test::random_tensor;

namespace {

std::vector<double> vals(const Tensor& t) { return t.to_vector(); }

void check_close(const Tensor& t, const std::vector<double>& want, double tol = 1e-6) {
  auto got = vals(t);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.dim(-1) == 3);
  CHECK(t.at(4) == 5.0);
  Tensor c = t.clone();
  c.set(0, 9);
  CHECK(t.at(0) == 1.0);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  Tensor d = t.to(Precision::f64);
  CHECK(d.is_f64());
  CHECK(max_abs_diff(d.to(Precision::f32), t) == 0.0);
}

TEST_CASE("conv2d hand examples") {
  Tensor x = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w = Tensor::from({1, 1, 2, 2}, {1, 0, 0, 1});
  check_close(conv2d(x, w, Tensor(), 1, Padding::valid), {6, 8, 12, 14});

  Tensor id = Tensor::from({1, 1, 1, 1}, {1});
  CHECK(bit_equal(conv2d(x, id, Tensor(), 1, Padding::same), x));

  Tensor wrong = Tensor::zeros({1, 2, 3, 3});
  CHECK_THROWS_AS(conv2d(x, wrong, Tensor(), 1, Padding::same), ShapeError);
  try {
    conv2d(x, wrong, Tensor(), 1, Padding::same);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("channel") != std::string::npos);
  }
}

TEST_CASE("conv2d same padding keeps extents for odd kernels") {
  for (int k : {1, 3, 5, 7}) {
    Tensor x = random_tensor({1, 2, 9, 6}, static_cast<std::uint64_t>(k), Precision::f32);
    Tensor w = random_tensor({3, 2, k, k}, 7, Precision::f32);
    auto y = conv2d(x, w, Tensor(), 1, Padding::same);
    CHECK(y.shape() == Shape{1, 3, 9, 6});
  }
  Tensor x = Tensor::zeros({1, 1, 7, 7});
  CHECK(conv2d(x, Tensor::zeros({1, 1, 3, 3}), Tensor(), 2, Padding::same).shape() == Shape{1, 1, 4, 4});
}

TEST_CASE("same padding puts the extra pixel bottom/right") {
  // 4x4 input, 2x2 kernel, stride 1: one pad row/col, all of it at the end.
  Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor w = Tensor::from({1, 1, 2, 2}, {1, 0, 0, 0});
  check_close(conv2d(x, w, Tensor(), 1, Padding::same), {1, 2, 3, 4});
}

TEST_CASE("depthwise conv examples") {
  Tensor x = random_tensor({1, 2, 3, 3}, 1, Precision::f32);
  Tensor w = Tensor::full({2, 1, 1, 1}, 2.0);
  auto y = depthwise_conv2d(x, w, Tensor(), 1, Padding::same);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == doctest::Approx(2 * x.at(i)));

  Tensor x2 = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  check_close(depthwise_conv2d(x2, Tensor::full({1, 1, 2, 2}, 1.0), Tensor(), 1, Padding::valid), {10});
  CHECK(Tensor::zeros({16, 1, 3, 3}).numel() == 144);
}

TEST_CASE("conv1d examples") {
  Tensor x = Tensor::from({1, 1, 3}, {1, 2, 3});
  check_close(conv1d(x, Tensor::full({1, 1, 3}, 1.0), Tensor()), {3, 6, 5});
  CHECK(bit_equal(conv1d(x, Tensor::full({1, 1, 1}, 1.0), Tensor::zeros({1})), x));
  CHECK_THROWS(conv1d(x, Tensor::full({1, 1, 2}, 1.0), Tensor()));
}

TEST_CASE("dense examples") {
  Tensor x = Tensor::from({1, 2}, {1, 2});
  check_close(dense(x, Tensor::from({2, 1}, {3, 4}), Tensor::from({1}, {1})), {12});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  CHECK(bit_equal(dense(x, eye, Tensor()), x));
}

TEST_CASE("batchnorm train and eval") {
  Tensor x = Tensor::full({2, 3, 2, 2}, 4.0);
  Tensor g = Tensor::full({3}, 2.0), b = Tensor::from({3}, {0.5, -1, 3});
  Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
  BatchNormOptions opt;
  opt.training = true;
  auto y = batchnorm2d(x, g, b, rm, rv, opt);
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == doctest::Approx(b.at((i / 4) % 3)));
  // momentum 0.99: running mean moves 1% towards the batch mean.
  CHECK(rm.at(0) == doctest::Approx(0.04));

  // Eval before training uses mean 0, var 1.
  Tensor rm0 = Tensor::zeros({3}), rv0 = Tensor::full({3}, 1.0);
  Tensor xs = random_tensor({2, 3, 2, 2}, 3, Precision::f64);
  auto ye = batchnorm2d(xs, Tensor::full({3}, 1.0, Precision::f64), Tensor::zeros({3}, Precision::f64), rm0, rv0, {});
  for (std::int64_t i = 0; i < xs.numel(); ++i) CHECK(ye.at(i) == doctest::Approx(xs.at(i) / std::sqrt(1.001)));
}

TEST_CASE("pooling") {
  CHECK(pool(Tensor::full({1, 1, 3, 3}, 5.0), PoolKind::gap).item() == doctest::Approx(5));
  CHECK(pool(Tensor::from({1, 1, 2, 2}, {1, 7, 3, 2}), PoolKind::gmp).item() == 7.0);
  Tensor x = Tensor::from({1, 1, 2, 2}, {1, 7, 3, 2});
  Tensor xp = Tensor::from({1, 1, 2, 2}, {2, 3, 7, 1});
  CHECK(pool(x, PoolKind::gap).item() == pool(xp, PoolKind::gap).item());
  Tensor m = Tensor::from({1, 1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
  check_close(pool(m, PoolKind::max2d, 2, 2), {6, 8, 14, 16});
  check_close(pool(m, PoolKind::avg2d, 2, 2), {3.5, 5.5, 11.5, 13.5});
}

TEST_CASE("activations") {
  Tensor x = Tensor::from({3}, {-1, 0, 2});
  check_close(relu(x), {0, 0, 2});
  CHECK(sigmoid(Tensor::scalar(0)).item() == doctest::Approx(0.5));
  Tensor eq = Tensor::full({2, 5}, 3.0);
  for (double v : vals(softmax(eq))) CHECK(v == doctest::Approx(0.2));
  Tensor r = random_tensor({4, 7}, 5, Precision::f64, -20, 20);
  auto s = softmax(r);
  for (int i = 0; i < 4; ++i) {
    double tot = 0;
    for (int j = 0; j < 7; ++j) {
      CHECK(s.at(i * 7 + j) >= 0.0);
      tot += s.at(i * 7 + j);
    }
    CHECK(std::abs(tot - 1) < 1e-6);
  }
}

TEST_CASE("layernorm normalizes the last axis") {
  Tensor x = random_tensor({3, 8}, 11, Precision::f64, -3, 3);
  auto y = layernorm(x, Tensor::full({8}, 1.0, Precision::f64), Tensor::zeros({8}, Precision::f64), 1e-12);
  for (int i = 0; i < 3; ++i) {
    double m = 0, v = 0;
    for (int j = 0; j < 8; ++j) m += y.at(i * 8 + j) / 8;
    for (int j = 0; j < 8; ++j) v += (y.at(i * 8 + j) - m) * (y.at(i * 8 + j) - m) / 8;
    CHECK(std::abs(m) < 1e-9);
    CHECK(v == doctest::Approx(1.0));
  }
}

TEST_CASE("attention symmetries") {
  Tensor q = random_tensor({1, 2, 1, 4}, 1), k = random_tensor({1, 2, 1, 4}, 2), v = random_tensor({1, 2, 1, 4}, 3);
  CHECK(max_abs_diff(scaled_dot_product_attention(q, k, v), v) < 1e-12);

  Tensor q3 = random_tensor({1, 1, 3, 4}, 4), v3 = random_tensor({1, 1, 5, 4}, 6);
  Tensor k3 = Tensor::full({1, 1, 5, 4}, 0.3, Precision::f64);
  auto o = scaled_dot_product_attention(q3, k3, v3);
  for (int t = 0; t < 3; ++t)
    for (int d = 0; d < 4; ++d) {
      double m = 0;
      for (int s = 0; s < 5; ++s) m += v3.at(s * 4 + d) / 5;
      CHECK(o.at(t * 4 + d) == doctest::Approx(m));
    }
}

TEST_CASE("resize bilinear") {
  Tensor x = random_tensor({1, 2, 5, 3}, 9, Precision::f32);
  CHECK(bit_equal(resize_bilinear(x, 5, 3), x));
  Tensor c = Tensor::full({1, 1, 3, 3}, 2.5);
  for (double v : vals(resize_bilinear(c, 7, 4))) CHECK(v == doctest::Approx(2.5));

  // Half-pixel oracle: output pixel i samples source coordinate (i + 0.5) / 2 - 0.5,
  // clamped at the borders.
  Tensor s = Tensor::from({1, 1, 2, 2}, {0, 2, 4, 6});
  auto src = [](int i) { return std::clamp((i + 0.5) / 2.0 - 0.5, 0.0, 1.0); };
  std::vector<double> want;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) want.push_back(4 * src(i) + 2 * src(j));
  check_close(resize_bilinear(s, 4, 4), want);
  auto out = resize_bilinear(s, 4, 4);
  CHECK(out.at(0) == 0.0);
  CHECK(out.at(15) == 6.0);
}

TEST_CASE("bce with logits") {
  CHECK(bce_with_logits(Tensor::from({1, 1}, {0}), Tensor::from({1, 1}, {1})).item() == doctest::Approx(std::log(2.0)));
  auto big = bce_with_logits(Tensor::from({1, 1}, {40}), Tensor::from({1, 1}, {1})).item();
  CHECK(std::isfinite(big));
  CHECK(big < 1e-15);
  CHECK(std::isfinite(bce_with_logits(Tensor::from({1, 1}, {-1e4}), Tensor::from({1, 1}, {1})).item()));
}

TEST_CASE("tape semantics") {
  Tape tape;
  Tensor x = tape.watch(Tensor::from({3}, {1, 2, 3}, Precision::f64));
  tape.backward(sum(x));
  for (double v : vals(*tape.grad(x))) CHECK(v == 1.0);
  tape.backward(sum(x));
  for (double v : vals(*tape.grad(x))) CHECK(v == 2.0);
  tape.reset_grads();
  CHECK_FALSE(tape.has_grad(x));

  Tape t2;
  Tensor s = t2.watch(Tensor::scalar(3, Precision::f64));
  Tensor unused = t2.watch(Tensor::scalar(1, Precision::f64));
  t2.backward(mul(s, s));
  CHECK(t2.grad(s)->item() == 6.0);
  CHECK_FALSE(t2.grad(unused).has_value());

  Tensor detached = Tensor::scalar(2, Precision::f64);
  CHECK_FALSE(t2.grad(detached).has_value());
}

TEST_CASE("tape replay is deterministic") {
  auto run = [] {
    Tape tape;
    Tensor x = tape.watch(random_tensor({2, 3, 6, 6}, 1, Precision::f32));
    Tensor w = tape.watch(random_tensor({4, 3, 3, 3}, 2, Precision::f32));
    tape.backward(sum(relu(conv2d(x, w, Tensor(), 1, Padding::same))));
    return std::pair{*tape.grad(x), *tape.grad(w)};
  };
  auto a = run(), b = run();
  CHECK(bit_equal(a.first, b.first));
  CHECK(bit_equal(a.second, b.second));
}

TEST_CASE("f64 gradient checks of the primitives") {
  using V = std::vector<Tensor>;
  auto ok = [](const szoo::test::GradCheckResult& r) {
    CHECK(r.max_rel_error < 1e-5);
    return r.max_rel_error;
  };
  ok(gradcheck([](const V& v) { return conv2d(v[0], v[1], v[2], 1, Padding::same); },
               {random_tensor({2, 3, 8, 8}, 1), random_tensor({2, 3, 3, 3}, 2), random_tensor({2}, 3)}));
  ok(gradcheck([](const V& v) { return conv2d(v[0], v[1], Tensor(), 2, Padding::valid); },
               {random_tensor({1, 2, 7, 6}, 4), random_tensor({3, 2, 3, 2}, 5)}));
  ok(gradcheck([](const V& v) { return depthwise_conv2d(v[0], v[1], Tensor(), 2, Padding::same); },
               {random_tensor({2, 3, 5, 5}, 6), random_tensor({3, 1, 3, 3}, 7)}));
  ok(gradcheck([](const V& v) { return conv1d(v[0], v[1], v[2]); },
               {random_tensor({2, 1, 9}, 8), random_tensor({1, 1, 5}, 9), random_tensor({1}, 10)}));
  ok(gradcheck([](const V& v) { return dense(v[0], v[1], v[2]); },
               {random_tensor({3, 4}, 11), random_tensor({4, 5}, 12), random_tensor({5}, 13)}));
  ok(gradcheck([](const V& v) { return layernorm(v[0], v[1], v[2]); },
               {random_tensor({3, 6}, 14), random_tensor({6}, 15), random_tensor({6}, 16)}));
  ok(gradcheck([](const V& v) { return scaled_dot_product_attention(v[0], v[1], v[2]); },
               {random_tensor({1, 2, 3, 4}, 17), random_tensor({1, 2, 5, 4}, 18), random_tensor({1, 2, 5, 4}, 19)}));
  ok(gradcheck(
      [](const V& v) {
        Tensor rm = Tensor::zeros({3}, Precision::f64), rv = Tensor::full({3}, 1.0, Precision::f64);
        BatchNormOptions o;
        o.training = true;
        return batchnorm2d(v[0], v[1], v[2], rm, rv, o);
      },
      {random_tensor({2, 3, 3, 3}, 20), random_tensor({3}, 21), random_tensor({3}, 22)}));
  for (auto kind : {Activation::relu, Activation::sigmoid, Activation::swish, Activation::gelu, Activation::softmax})
    ok(gradcheck([kind](const V& v) { return activation(v[0], kind); }, {random_tensor({3, 5}, 23)}));
  for (auto kind : {PoolKind::gap, PoolKind::gmp})
    ok(gradcheck([kind](const V& v) { return pool(v[0], kind); }, {random_tensor({2, 3, 4, 4}, 24)}));
  ok(gradcheck([](const V& v) { return pool(v[0], PoolKind::max2d, 2, 2); }, {random_tensor({1, 2, 4, 4}, 25)}));
  ok(gradcheck([](const V& v) { return pool(v[0], PoolKind::avg2d, 2, 1); }, {random_tensor({1, 2, 4, 3}, 26)}));
  ok(gradcheck([](const V& v) { return resize_bilinear(v[0], 7, 3); }, {random_tensor({1, 2, 4, 5}, 27)}));
  Tensor targets = random_tensor({3, 4}, 29, Precision::f64, 0, 1);
  ok(gradcheck([&](const V& v) { return bce_with_logits(v[0], targets); },
               {random_tensor({3, 4}, 28, Precision::f64, -4, 4)}));
  ok(gradcheck([](const V& v) { return mul(add(v[0], v[1]), sub(v[0], v[2])); },
               {random_tensor({2, 3}, 30), random_tensor({1, 3}, 31), random_tensor({2, 1}, 32)}));
  ok(gradcheck([](const V& v) { return reduce_max(permute(v[0], {1, 0, 2}), 2); }, {random_tensor({2, 3, 4}, 33)}));
  ok(gradcheck([](const V& v) { return reduce_mean(concat({v[0], v[1]}, 1), 0); },
               {random_tensor({2, 3}, 34), random_tensor({2, 2}, 35)}));
  ok(gradcheck([](const V& v) { return slice(reshape(v[0], {4, -1}), 1, 1, 2); }, {random_tensor({2, 2, 3}, 36)}));
}

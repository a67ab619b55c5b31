#include <cmath>
#include <random>

#include "doctest.h"
#include "glyphgan/tensor.hpp"
#include "test_util.hpp"

using namespace glyphgan;
using glyphgan::testing::dot;
using glyphgan::testing::random_tensor;

TEST_CASE("conv2d with identity 1x1 kernel reproduces the input") {
  std::mt19937_64 rng(1);
  Tensor64 x = random_tensor({1, 1, 3, 3}, rng);
  Tensor64 k({1, 1, 1, 1}, 1.0);
  Tensor64 b({1}, 0.0);
  Tensor64 y = conv2d(x, k, b, 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d sums a constant window") {
  Tensor64 x({1, 1, 4, 4}, 1.0);
  Tensor64 k({1, 1, 2, 2}, 1.0);
  Tensor64 b({1}, 0.0);
  Tensor64 y = conv2d(x, k, b, 2, 0);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (double v : y.data()) CHECK(v == 4.0);
}

TEST_CASE("conv2d output size formula and channel errors") {
  Tensor64 x({2, 3, 16, 16});
  Tensor64 k({8, 3, 5, 5});
  Tensor64 b({8});
  CHECK(conv2d(x, k, b, 2, 2).shape() == Shape{2, 8, 8, 8});
  Tensor64 bad({8, 2, 5, 5});
  CHECK_THROWS_AS(conv2d(x, bad, b, 2, 2), DimensionError);
  Tensor64 tiny({1, 3, 2, 2});
  CHECK_THROWS_AS(conv2d(tiny, k, b, 1, 0), DimensionError);
}

TEST_CASE("conv2d gradients match central differences") {
  std::mt19937_64 rng(7);
  const Tensor64 x = random_tensor({1, 2, 5, 5}, rng);
  const Tensor64 k = random_tensor({3, 2, 3, 3}, rng);
  const Tensor64 b = random_tensor({3}, rng);
  CHECK(finite_diff_check([&](const Tensor64& p) { return sum(conv2d(p, k, b, 1, 1)); }, x, 1e-6) < 1e-4);
  CHECK(finite_diff_check([&](const Tensor64& p) { return sum(conv2d(x, p, b, 1, 1)); }, k, 1e-6) < 1e-4);
  CHECK(finite_diff_check([&](const Tensor64& p) { return sum(conv2d(x, k, p, 1, 1)); }, b, 1e-6) < 1e-4);
  // Non-uniform upstream gradient and stride 2.
  const Tensor64 wts = random_tensor({1, 3, 3, 3}, rng);
  CHECK(finite_diff_check([&](const Tensor64& p) { return sum(mul(conv2d(p, k, b, 2, 1), wts)); }, x, 1e-6) <
        1e-4);
}

TEST_CASE("conv_transpose2d broadcasts a single pixel and doubles size") {
  Tensor64 x({1, 1, 1, 1}, 0.75);
  Tensor64 k({1, 1, 2, 2}, 1.0);
  Tensor64 b({1}, 0.0);
  Tensor64 y = conv_transpose2d(x, k, b, 2, 0);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (double v : y.data()) CHECK(v == 0.75);
  CHECK(conv_transpose2d(Tensor64({1, 1, 2, 2}), k, b, 2, 0).shape() == Shape{1, 1, 4, 4});
  Tensor64 k5({1, 4, 5, 5});
  Tensor64 b4({4});
  CHECK(conv_transpose2d(Tensor64({1, 1, 8, 8}), k5, b4, 2, 2, 1).shape() == Shape{1, 4, 16, 16});
  CHECK_THROWS_AS(conv_transpose2d(Tensor64({1, 2, 2, 2}), k, b, 2, 0), DimensionError);
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  std::mt19937_64 rng(11);
  const Tensor64 a = random_tensor({2, 3, 8, 8}, rng);
  const Tensor64 k = random_tensor({4, 3, 5, 5}, rng);
  const Tensor64 zero_out({4}, 0.0), zero_in({3}, 0.0);
  const Tensor64 fa = conv2d(a, k, zero_out, 2, 2);
  const Tensor64 b = random_tensor(fa.shape(), rng);
  const Tensor64 tb = conv_transpose2d(b, k, zero_in, 2, 2, 1);
  REQUIRE(tb.shape() == a.shape());
  const double lhs = dot(fa, b), rhs = dot(a, tb);
  CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(std::abs(lhs), std::abs(rhs)));
}

TEST_CASE("conv_transpose2d gradients match central differences") {
  std::mt19937_64 rng(8);
  const Tensor64 x = random_tensor({1, 2, 3, 3}, rng);
  const Tensor64 k = random_tensor({2, 3, 5, 5}, rng);
  const Tensor64 b = random_tensor({3}, rng);
  const Tensor64 wts = random_tensor({1, 3, 6, 6}, rng);
  auto f = [&](const Tensor64& xi, const Tensor64& ki, const Tensor64& bi) {
    return sum(mul(conv_transpose2d(xi, ki, bi, 2, 2, 1), wts));
  };
  CHECK(finite_diff_check([&](const Tensor64& p) { return f(p, k, b); }, x, 1e-6) < 1e-4);
  CHECK(finite_diff_check([&](const Tensor64& p) { return f(x, p, b); }, k, 1e-6) < 1e-4);
  CHECK(finite_diff_check([&](const Tensor64& p) { return f(x, k, p); }, b, 1e-6) < 1e-4);
}

TEST_CASE("batch_norm normalizes each channel in training mode") {
  std::mt19937_64 rng(3);
  Tensor64 x = random_tensor({2, 3, 4, 4}, rng, -2.0, 5.0);
  Tensor64 gamma({3}, 1.0), beta({3}, 0.0);
  BatchNormState<double> state;
  Tensor64 y = batch_norm(x, gamma, beta, state, BatchNormOptions{});
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 16; ++i) m += y[(n * 3 + c) * 16 + i];
    m /= 32;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 16; ++i) v += std::pow(y[(n * 3 + c) * 16 + i] - m, 2);
    v /= 32;
    CHECK(std::abs(m) < 1e-9);
    // epsilon shifts the variance by eps / (var + eps)
    CHECK(std::abs(v - 1.0) < 1e-4);
  }
  CHECK(state.running_mean.size() == 3);
}

TEST_CASE("batch_norm with unit-scale data reaches variance 1 within 1e-6") {
  std::mt19937_64 rng(4);
  Tensor64 x = random_tensor({1, 1, 8, 8}, rng, -100.0, 100.0);
  Tensor64 gamma({1}, 1.0), beta({1}, 0.0);
  BatchNormState<double> state;
  Tensor64 y = batch_norm(x, gamma, beta, state, BatchNormOptions{});
  double m = 0, v = 0;
  for (double e : y.data()) m += e;
  m /= 64;
  for (double e : y.data()) v += (e - m) * (e - m);
  v /= 64;
  CHECK(std::abs(m) < 1e-9);
  CHECK(std::abs(v - 1.0) < 1e-6);
}

TEST_CASE("batch_norm of a constant input is zero and epsilon must be positive") {
  Tensor64 x({1, 2, 3, 3}, 4.2);
  Tensor64 gamma({2}, 1.0), beta({2}, 0.0);
  BatchNormState<double> state;
  Tensor64 y = batch_norm(x, gamma, beta, state, BatchNormOptions{});
  for (double v : y.data()) CHECK(v == 0.0);
  BatchNormOptions bad;
  bad.epsilon = 0;
  CHECK_THROWS_AS(batch_norm(x, gamma, beta, state, bad), ConfigError);
}

TEST_CASE("batch_norm inference mode uses running statistics") {
  Tensor64 x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor64 gamma({1}, 2.0), beta({1}, 0.5);
  BatchNormState<double> state{{1.0}, {4.0}};
  BatchNormOptions opts;
  opts.training = false;
  opts.epsilon = 1e-12;
  Tensor64 y = batch_norm(x, gamma, beta, state, opts);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[3] == doctest::Approx(2 * 1.5 + 0.5));
  CHECK(state.running_mean[0] == 1.0);
}

TEST_CASE("batch_norm gradients match central differences") {
  std::mt19937_64 rng(5);
  const Tensor64 x = random_tensor({2, 2, 3, 3}, rng);
  const Tensor64 gamma = random_tensor({2}, rng, 0.5, 1.5);
  const Tensor64 beta = random_tensor({2}, rng);
  const Tensor64 wts = random_tensor({2, 2, 3, 3}, rng);
  BatchNormState<double> state;
  for (bool training : {true, false}) {
    BatchNormOptions opts;
    opts.training = training;
    auto f = [&](const Tensor64& xi, const Tensor64& g, const Tensor64& b) {
      return sum(mul(batch_norm(xi, g, b, state, opts), wts));
    };
    CHECK(finite_diff_check([&](const Tensor64& p) { return f(p, gamma, beta); }, x, 1e-6) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor64& p) { return f(x, p, beta); }, gamma, 1e-6) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor64& p) { return f(x, gamma, p); }, beta, 1e-6) < 1e-4);
  }
}

TEST_CASE("activations") {
  Tensor64 x({3}, std::vector<double>{-3.0, 5.0, -2.0});
  Tensor64 r = relu(x);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 5.0);
  CHECK(leaky_relu(x, 0.2)[2] == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(sigmoid(Tensor64({1}, 0.0))[0] == 0.5);
  Tensor64 big({2}, std::vector<double>{-800.0, 800.0});
  Tensor64 s = sigmoid(big);
  CHECK(std::isfinite(s[0]));
  CHECK(s[1] == 1.0);

  std::mt19937_64 rng(9);
  const Tensor64 p = random_tensor({10}, rng, -3, 3);
  const Tensor64 w = random_tensor({10}, rng);
  CHECK(finite_diff_check([&](const Tensor64& v) { return sum(mul(sigmoid(v), w)); }, p, 1e-6) < 1e-4);
  CHECK(finite_diff_check([&](const Tensor64& v) { return sum(mul(leaky_relu(v, 0.2), w)); }, p, 1e-6) < 1e-4);
  CHECK(finite_diff_check([&](const Tensor64& v) { return sum(mul(relu(v), w)); }, p, 1e-6) < 1e-4);
}

TEST_CASE("concat_channels and slice_channels are inverse") {
  std::mt19937_64 rng(10);
  Tensor64 a = random_tensor({1, 2, 4, 4}, rng);
  Tensor64 b = random_tensor({1, 3, 4, 4}, rng);
  Tensor64 c = concat_channels(a, b);
  REQUIRE(c.shape() == Shape{1, 5, 4, 4});
  Tensor64 a2 = slice_channels(c, 0, 2), b2 = slice_channels(c, 2, 3);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a2[i] == a[i]);
  for (std::size_t i = 0; i < b.numel(); ++i) CHECK(b2[i] == b[i]);
  CHECK_THROWS_AS(concat_channels(a, Tensor64({1, 3, 4, 5})), DimensionError);
}

TEST_CASE("concat_channels routes gradients to the owning input") {
  std::mt19937_64 rng(12);
  Tensor64 a = random_tensor({2, 2, 3, 3}, rng, -1, 1, true);
  Tensor64 b = random_tensor({2, 3, 3, 3}, rng, -1, 1, true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(slice_channels(concat_channels(a, b), 0, 2)));
  for (double g : a.grad()) CHECK(g == 1.0);
  for (double g : b.grad()) CHECK(g == 0.0);

  const Tensor64 w = random_tensor({2, 5, 3, 3}, rng);
  const Tensor64 bp = b.detach(), ap = a.detach();
  CHECK(finite_diff_check([&](const Tensor64& p) { return sum(mul(concat_channels(p, bp), w)); }, ap, 1e-6) <
        1e-4);
  CHECK(finite_diff_check([&](const Tensor64& p) { return sum(mul(concat_channels(ap, p), w)); }, bp, 1e-6) <
        1e-4);
}

TEST_CASE("fully_connected") {
  Tensor64 x({1, 2}, std::vector<double>{1, 2});
  Tensor64 w({2, 1}, 1.0);
  Tensor64 b({1}, 0.0);
  CHECK(fully_connected(x, w, b)[0] == 3.0);
  Tensor64 zw({2, 1}, 0.0);
  Tensor64 bb({1}, 0.37);
  CHECK(fully_connected(x, zw, bb)[0] == 0.37);
  CHECK_THROWS_AS(fully_connected(x, Tensor64({3, 1}), b), DimensionError);

  std::mt19937_64 rng(13);
  const Tensor64 xi = random_tensor({3, 6}, rng);
  const Tensor64 wi = random_tensor({6, 1}, rng);
  const Tensor64 bi = random_tensor({1}, rng);
  const Tensor64 up = random_tensor({3, 1}, rng);
  CHECK(finite_diff_check([&](const Tensor64& p) { return sum(mul(fully_connected(p, wi, bi), up)); }, xi, 1e-6) <
        1e-4);
  CHECK(finite_diff_check([&](const Tensor64& p) { return sum(mul(fully_connected(xi, p, bi), up)); }, wi, 1e-6) <
        1e-4);
  CHECK(finite_diff_check([&](const Tensor64& p) { return sum(mul(fully_connected(xi, wi, p), up)); }, bi, 1e-6) <
        1e-4);
}

TEST_CASE("backward basics") {
  Tensor64 x({2, 2}, std::vector<double>{1, 2, 3, 4}, true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor64 v({2}, std::vector<double>{1, 2}, true);
  tape.clear();
  tape.backward(sum(mul(v, v)));
  CHECK(v.grad()[0] == 2.0);
  CHECK(v.grad()[1] == 4.0);
  // A second call without reset accumulates.
  tape.backward(sum(mul(v, v)));
  CHECK(v.grad()[0] == 4.0);
  CHECK(v.grad()[1] == 8.0);

  CHECK_THROWS_AS(tape.backward(mul(v, v)), ConfigError);
}

TEST_CASE("gradients accumulate over multiple consumers") {
  Tensor64 x({3}, std::vector<double>{0.5, -1.0, 2.0}, true);
  Tape tape;
  TapeScope scope(tape);
  // y = sum(3x) + sum(x*x): dy/dx = 3 + 2x
  tape.backward(add(sum(scale(x, 3.0)), sum(mul(x, x))));
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(3 + 2 * x[i]));
}

TEST_CASE("tape replays records in reverse execution order") {
  Tensor64 x({2}, 1.0, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor64 y = sigmoid(scale(x, 2.0));
  Tensor64 z = sum(y);
  REQUIRE(tape.size() == 3);
  CHECK(std::string(tape.records()[0].op) == "scale");
  CHECK(std::string(tape.records()[1].op) == "sigmoid");
  CHECK(std::string(tape.records()[2].op) == "sum");
  NoGradScope off;
  Tensor64 w = sum(x);
  CHECK_FALSE(w.requires_grad());
  CHECK(tape.size() == 3);
}

TEST_CASE("non-finite values abort with the op named") {
  Tensor64 x({2}, std::vector<double>{1.0, std::nan("")});
  try {
    (void)scale(x, 2.0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("scale") != std::string::npos);
  }
}

TEST_CASE("finite_diff_check oracles") {
  std::mt19937_64 rng(14);
  const Tensor64 p = random_tensor({6}, rng);
  CHECK(finite_diff_check([](const Tensor64& v) { return sum(v); }, p, 1e-5) < 1e-10);
  CHECK(finite_diff_check([](const Tensor64& v) { return sum(mul(v, v)); }, p, 1e-5) < 1e-6);
  CHECK(finite_diff_check([](const Tensor64& v) { return sum(sigmoid(mul(v, sigmoid(v)))); }, p, 1e-5) < 1e-4);
}

TEST_CASE("float engine matches double engine on a conv stack") {
  std::mt19937_64 rng(15);
  const Tensor64 x = random_tensor({1, 1, 8, 8}, rng);
  const Tensor64 k = random_tensor({2, 1, 5, 5}, rng);
  const Tensor64 b = random_tensor({2}, rng);
  auto to32 = [](const Tensor64& t) {
    std::vector<float> v(t.data().begin(), t.data().end());
    return Tensor32(t.shape(), std::move(v));
  };
  Tensor64 y64 = sigmoid(conv2d(x, k, b, 2, 2));
  Tensor32 y32 = sigmoid(conv2d(to32(x), to32(k), to32(b), 2, 2));
  for (std::size_t i = 0; i < y64.numel(); ++i) CHECK(std::abs(y64[i] - y32[i]) < 1e-5);
}

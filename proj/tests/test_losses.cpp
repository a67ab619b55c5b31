#include <cmath>
#include <random>

#include "doctest.h"
#include "glyphgan/errors.hpp"
#include "glyphgan/losses.hpp"
#include "test_util.hpp"

using namespace glyphgan;
using glyphgan::testing::random_tensor;

namespace {
Tensor64 scores(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor64({n, 1}, std::move(v));
}
Tensor64 image(std::size_t s, std::vector<double> v) { return Tensor64({1, 1, s, s}, std::move(v)); }
}  // namespace

TEST_CASE("discriminator loss values") {
  CHECK(discriminator_loss(scores({0.5}), scores({0.5})).item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  CHECK(discriminator_loss(scores({0.9}), scores({0.1})).item() ==
        doctest::Approx(-2 * std::log(0.9)).epsilon(1e-12));
  CHECK(discriminator_loss(scores({0.9}), scores({0.1})).item() == doctest::Approx(0.2107).epsilon(1e-4));
  const double perfect = discriminator_loss(scores({1.0}), scores({0.0})).item();
  CHECK(perfect >= 0);
  CHECK(perfect < 1e-6);
}

TEST_CASE("discriminator loss decreases only when real rises and fake falls") {
  const double base = discriminator_loss(scores({0.6}), scores({0.4})).item();
  CHECK(discriminator_loss(scores({0.7}), scores({0.4})).item() < base);
  CHECK(discriminator_loss(scores({0.6}), scores({0.3})).item() < base);
  CHECK(discriminator_loss(scores({0.5}), scores({0.4})).item() > base);
  CHECK(discriminator_loss(scores({0.6}), scores({0.5})).item() > base);
}

TEST_CASE("generator adversarial loss values") {
  CHECK(generator_adv_loss(scores({0.5})).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(generator_adv_loss(scores({std::exp(-1.0)})).item() - 1.0) < 1e-12);
  const double fooled = generator_adv_loss(scores({1.0})).item();
  CHECK(fooled == doctest::Approx(-std::log(1 - 1e-7)).epsilon(1e-6));
  CHECK(std::isfinite(generator_adv_loss(scores({0.0})).item()));
}

TEST_CASE("probability losses reject values outside [0,1]") {
  CHECK_THROWS_AS(discriminator_loss(scores({1.5}), scores({0.5})), DomainError);
  CHECK_THROWS_AS(generator_adv_loss(scores({-0.1})), DomainError);
}

TEST_CASE("l1 loss values") {
  Tensor64 a = image(2, {0.2, 0.8, 0.3, 0.9});
  CHECK(l1_loss(a, a).item() == 0.0);
  CHECK(l1_loss(Tensor64({1, 1, 3, 3}, 0.0), Tensor64({1, 1, 3, 3}, 1.0)).item() == 1.0);
  Tensor64 g({1, 2}, std::vector<double>{0.2, 0.8});
  Tensor64 t({1, 2}, std::vector<double>{0.0, 1.0});
  CHECK(l1_loss(g, t).item() == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_THROWS_AS(l1_loss(a, Tensor64({1, 1, 3, 3})), DimensionError);
}

TEST_CASE("tv loss hand cases") {
  CHECK(std::abs(tv_loss(image(2, {0, 1, 0, 1})).item() - 1.0) < 1e-6);
  CHECK(std::abs(tv_loss(image(2, {0, 1, 1, 1})).item() - std::sqrt(2.0)) < 1e-6);
  // The stabilizer offset is subtracted per term, so flat images give 0 at any size.
  CHECK(tv_loss(image(2, {0.3, 0.3, 0.3, 0.3})).item() == 0.0);
  CHECK(tv_loss(Tensor64({1, 1, 5, 5}, 0.7)).item() == 0.0);
  CHECK(tv_loss(Tensor64({1, 1, 64, 64}, 0.2)).item() == 0.0);
  CHECK_THROWS_AS(tv_loss(Tensor64({1, 1, 1, 1})), DomainError);
}

TEST_CASE("tv loss averages over the batch") {
  Tensor64 two({2, 1, 2, 2}, std::vector<double>{0, 1, 0, 1, 0, 1, 1, 1});
  CHECK(tv_loss(two).item() == doctest::Approx((1 + std::sqrt(2.0)) / 2).epsilon(1e-6));
}

TEST_CASE("tv loss under shifts that keep content off the excluded boundary") {
  std::mt19937_64 rng(4);
  const std::size_t s = 8;
  Tensor64 z({1, 1, s, s}, 0.0);
  for (std::size_t i = 1; i < 4; ++i) {
    for (std::size_t j = 1; j < 4; ++j) z[i * s + j] = std::uniform_real_distribution<double>(0, 1)(rng);
  }
  Tensor64 shifted({1, 1, s, s}, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) shifted[((i + 2) % s) * s + (j + 1) % s] = z[i * s + j];
  }
  CHECK(tv_loss(shifted).item() == doctest::Approx(tv_loss(z).item()).epsilon(1e-12));
}

TEST_CASE("total loss recombines its reported terms") {
  std::mt19937_64 rng(12);
  Tensor64 d_fake = random_tensor({2, 1}, rng, 0.05, 0.95);
  Tensor64 gen = random_tensor({2, 1, 6, 6}, rng, 0, 1);
  Tensor64 target = random_tensor({2, 1, 6, 6}, rng, 0, 1);
  LossWeights w;
  w.alpha = 7.5;
  w.beta = 0.3;
  const auto loss = generator_total_loss(d_fake, gen, target, w);
  CHECK(std::abs(loss.total.item() - (loss.adversarial + w.alpha * loss.l1 + w.beta * loss.tv)) < 1e-12);
  CHECK(loss.adversarial == generator_adv_loss(d_fake).item());
  CHECK(loss.l1 == l1_loss(gen, target).item());
  CHECK(loss.tv == tv_loss(gen).item());

  w.alpha = 0;
  w.beta = 0;
  CHECK(generator_total_loss(d_fake, gen, target, w).total.item() == generator_adv_loss(d_fake).item());
}

TEST_CASE("total loss with a perfect reconstruction") {
  Tensor64 target = image(3, {0, 1, 0, 1, 1, 1, 0, 1, 0});
  LossWeights w;
  const auto loss = generator_total_loss(scores({0.5}), target, target, w);
  CHECK(loss.total.item() == doctest::Approx(std::log(2.0) + w.beta * tv_loss(target).item()).epsilon(1e-12));
}

TEST_CASE("losses are non-negative and finite across the domain") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor64 a = random_tensor({3, 1}, rng, 0, 1);
    Tensor64 b = random_tensor({3, 1}, rng, 0, 1);
    Tensor64 g = random_tensor({1, 1, 4, 4}, rng, 0, 1);
    Tensor64 t = random_tensor({1, 1, 4, 4}, rng, 0, 1);
    for (double v : {discriminator_loss(a, b).item(), generator_adv_loss(a).item(), l1_loss(g, t).item(),
                     tv_loss(g).item()}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0);
    }
  }
}

TEST_CASE("loss weight validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.eps_log = 1e-2;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = LossWeights{};
  w.alpha = -1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

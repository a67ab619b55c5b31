#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "glyphgan/errors.hpp"
#include "glyphgan/model.hpp"
#include "test_util.hpp"

using namespace glyphgan;
using glyphgan::testing::random_tensor;

namespace {

ArchConfig small_arch(int size) {
  ArchConfig arch = ArchConfig::for_image_size(size);
  arch.base_channels = 2;
  arch.max_channels = 8;
  return arch;
}

std::vector<int> encoder_sizes(const ArchConfig& arch) {
  std::vector<int> sizes;
  for (const auto& layer : describe_generator(arch)) {
    if (layer.name.rfind("enc", 0) == 0) sizes.push_back(layer.out_size);
  }
  return sizes;
}

}  // namespace

TEST_CASE("encoder halves down to a 1x1 latent") {
  CHECK(encoder_sizes(ArchConfig::for_image_size(256)) == std::vector<int>{128, 64, 32, 16, 8, 4, 2, 1});
  CHECK(encoder_sizes(ArchConfig::for_image_size(64)) == std::vector<int>{32, 16, 8, 4, 2, 1});
  CHECK(ArchConfig::for_image_size(256).depth() == 8);
}

TEST_CASE("channel defaults by scale") {
  const ArchConfig big = ArchConfig::for_image_size(256);
  CHECK(big.base_channels == 64);
  CHECK(big.max_channels == 512);
  CHECK(big.encoder_channels(0) == 64);
  CHECK(big.encoder_channels(3) == 512);
  CHECK(big.encoder_channels(7) == 512);
  const ArchConfig desk = ArchConfig::for_image_size(32);
  CHECK(desk.base_channels == 16);
  CHECK(desk.max_channels == 128);
}

TEST_CASE("decoder has depth-1 blocks plus an output layer and skip accounting adds up") {
  const ArchConfig arch = ArchConfig::for_image_size(64);
  const auto layers = describe_generator(arch);
  const int n = arch.depth();
  REQUIRE(layers.size() == static_cast<std::size_t>(2 * n));
  std::vector<LayerInfo> dec(layers.begin() + n, layers.end());
  CHECK(dec.back().name == "out");
  CHECK_FALSE(dec.back().batchnorm);
  CHECK(dec.back().out_channels == 1);
  CHECK(dec.back().out_size == 64);
  CHECK(dec[0].skip_channels == 0);  // the bottleneck gets no skip
  for (std::size_t j = 1; j < dec.size(); ++j) {
    const int mirrored = arch.encoder_channels(n - 1 - static_cast<int>(j));
    CHECK(dec[j].skip_channels == mirrored);
    CHECK(dec[j].in_channels == dec[j - 1].out_channels + mirrored);
    CHECK(dec[j].out_size == 2 * dec[j - 1].out_size);
  }
}

TEST_CASE("discriminator post-conv size") {
  auto last_conv = [](int size) {
    const auto layers = describe_discriminator(ArchConfig::for_image_size(size));
    return layers[layers.size() - 2].out_size;
  };
  CHECK(last_conv(64) == 4);
  CHECK(last_conv(256) == 16);
}

TEST_CASE("invalid image sizes are config errors") {
  ArchConfig arch = ArchConfig::for_image_size(32);
  arch.image_size = 48;
  CHECK_THROWS_AS(arch.validate(), ConfigError);
  CHECK_THROWS_AS(build_generator<float>(arch, 1), ConfigError);
  arch.image_size = 8;  // four discriminator halvings need at least 16
  CHECK_THROWS_AS(build_discriminator<float>(arch, 1), ConfigError);
}

TEST_CASE("generator shape round trip for every supported size") {
  for (int size : {16, 32, 64, 128, 256}) {
    ArchConfig arch = small_arch(size);
    arch.max_channels = 4;
    Generator<float> g = build_generator<float>(arch, 3);
    std::mt19937_64 rng(size);
    Tensor32 x({1, 1, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& v : x.data()) v = u(rng);
    NoGradScope no_grad;
    Tensor32 y = generator_forward(g, x);
    CHECK(y.shape() == x.shape());
    for (float v : y.data()) {
      REQUIRE(v > 0.0f);
      REQUIRE(v < 1.0f);
    }
  }
}

TEST_CASE("generator forward is deterministic and every encoder weight matters") {
  const ArchConfig arch = small_arch(64);
  Generator<double> g = build_generator<double>(arch, 5);
  std::mt19937_64 rng(9);
  Tensor64 x = random_tensor({1, 1, 64, 64}, rng, 0, 1);
  NoGradScope no_grad;
  const ForwardMode mode{true, false};
  Tensor64 a = generator_forward(g, x, mode);
  Tensor64 b = generator_forward(g, x, mode);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));

  std::normal_distribution<double> n(0, 1e-2);
  Tensor64 kernel = g.encoder[0].kernel;
  kernel[std::uniform_int_distribution<std::size_t>(0, kernel.numel() - 1)(rng)] += n(rng);
  Tensor64 c = generator_forward(g, x, mode);
  double max_delta = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) max_delta = std::max(max_delta, std::abs(a[i] - c[i]));
  CHECK(max_delta > 0);
}

TEST_CASE("generator rejects mismatched input") {
  Generator<float> g = build_generator<float>(small_arch(32), 1);
  CHECK_THROWS_AS(generator_forward(g, Tensor32({1, 1, 16, 16})), DimensionError);
  CHECK_THROWS_AS(generator_forward(g, Tensor32({1, 2, 32, 32})), DimensionError);
}

TEST_CASE("discriminator scores are probabilities and react to the candidate") {
  const ArchConfig arch = small_arch(32);
  Discriminator<double> d = build_discriminator<double>(arch, 4, 0.2);
  std::mt19937_64 rng(2);
  Tensor64 cond = random_tensor({3, 1, 32, 32}, rng, 0, 1);
  Tensor64 cand = random_tensor({3, 1, 32, 32}, rng, 0, 1);
  NoGradScope no_grad;
  Tensor64 s = discriminator_forward(d, cond, cand);
  REQUIRE(s.shape() == Shape{3, 1});
  for (double v : s.data()) {
    CHECK(std::isfinite(v));
    CHECK(v > 0);
    CHECK(v < 1);
  }
  Tensor64 other = random_tensor({3, 1, 32, 32}, rng, 0, 1);
  Tensor64 s2 = discriminator_forward(d, cond, other);
  bool changed = false;
  for (std::size_t i = 0; i < 3; ++i) changed = changed || s[i] != s2[i];
  CHECK(changed);
}

TEST_CASE("discriminator batch permutation in inference mode") {
  // Training-mode batchnorm couples batch items through the statistics;
  // inference mode uses running stats so items are independent.
  const ArchConfig arch = small_arch(16);
  Discriminator<double> d = build_discriminator<double>(arch, 8, 0.2);
  std::mt19937_64 rng(6);
  const std::size_t n = 4;
  Tensor64 cond = random_tensor({n, 1, 16, 16}, rng, 0, 1);
  Tensor64 cand = random_tensor({n, 1, 16, 16}, rng, 0, 1);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tensor64 pc({n, 1, 16, 16}), pd({n, 1, 16, 16});
  const std::size_t img = 256;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < img; ++k) {
      pc[i * img + k] = cond[perm[i] * img + k];
      pd[i * img + k] = cand[perm[i] * img + k];
    }
  }
  NoGradScope no_grad;
  const ForwardMode inference{false, false};
  Tensor64 s = discriminator_forward(d, cond, cand, inference);
  Tensor64 sp = discriminator_forward(d, pc, pd, inference);
  for (std::size_t i = 0; i < n; ++i) CHECK(sp[i] == s[perm[i]]);
}

TEST_CASE("patch head scores every patch") {
  ArchConfig arch = small_arch(32);
  arch.disc_head = DiscriminatorHead::Patch;
  Discriminator<float> d = build_discriminator<float>(arch, 1);
  NoGradScope no_grad;
  Tensor32 s = discriminator_forward(d, Tensor32({2, 1, 32, 32}, 0.5f), Tensor32({2, 1, 32, 32}, 0.25f));
  CHECK(s.shape() == Shape{2, 4});
  for (float v : s.data()) CHECK((v > 0 && v < 1));
}

TEST_CASE("parameter shapes depend only on the arch, values on the seed") {
  const ArchConfig arch = small_arch(32);
  Generator<float> a = build_generator<float>(arch, 1);
  Generator<float> b = build_generator<float>(arch, 2);
  const auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(pa[i].tensor.shape() == pb[i].tensor.shape());
    count += pa[i].tensor.numel();
    any_diff = any_diff || !std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(),
                                       pb[i].tensor.data().begin());
  }
  CHECK(any_diff);
  CHECK(count == parameter_count(generator_param_specs(arch)));

  Generator<float> again = build_generator<float>(arch, 1);
  CHECK(snapshot(again.parameters()) == snapshot(pa));
}

TEST_CASE("only blocks without batchnorm carry a bias") {
  for (const auto& spec : generator_param_specs(ArchConfig::for_image_size(32))) {
    if (spec.role == ParamRole::Bias) {
      const bool ok = spec.name == "gen.out.bias" || spec.name == "gen.enc4.bias";
      CHECK_MESSAGE(ok, spec.name);
    }
  }
}

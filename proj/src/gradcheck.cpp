#include "glyphgan/gradcheck.hpp"

#include <algorithm>
#include <functional>
#include <random>

#include "glyphgan/losses.hpp"
#include "glyphgan/model.hpp"
#include "glyphgan/tensor.hpp"

namespace glyphgan {

namespace {

Tensor64 uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor64 t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

using Instance = std::function<double(std::mt19937_64&, double)>;

double check(const std::function<Tensor64(const std::vector<Tensor64>&)>& f, std::vector<Tensor64> leaves,
             double step) {
  return finite_diff_check_many([&] { return f(leaves); }, leaves, step);
}

// Each instance multiplies the op output by fixed random upstream weights so
// every output element contributes with a different factor.
std::vector<std::pair<std::string, Instance>> op_instances() {
  std::vector<std::pair<std::string, Instance>> ops;
  ops.reserve(16);

  ops.emplace_back("conv2d", [](std::mt19937_64& rng, double step) {
    const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = 2 * pick(rng, 0, 2) + 1;
    const std::size_t s = pick(rng, k, 7);
    const int stride = static_cast<int>(pick(rng, 1, 2)), pad = static_cast<int>(pick(rng, 0, k / 2));
    auto x = uniform({n, cin, s, s}, rng, -1, 1);
    auto w = uniform({cout, cin, k, k}, rng, -1, 1);
    auto b = uniform({cout}, rng, -1, 1);
    auto up = uniform(conv2d(x, w, b, stride, pad).shape(), rng, -1, 1);
    return check([&](const auto& p) { return sum(mul(conv2d(p[0], p[1], p[2], stride, pad), up)); }, {x, w, b},
                 step);
  });

  ops.emplace_back("conv_transpose2d", [](std::mt19937_64& rng, double step) {
    const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = 2 * pick(rng, 1, 2) + 1;
    const std::size_t s = pick(rng, 1, 4);
    const int stride = static_cast<int>(pick(rng, 1, 2));
    const int pad = static_cast<int>(pick(rng, 0, k / 2)), out_pad = stride - 1;
    auto x = uniform({n, cin, s, s}, rng, -1, 1);
    auto w = uniform({cin, cout, k, k}, rng, -1, 1);
    auto b = uniform({cout}, rng, -1, 1);
    auto up = uniform(conv_transpose2d(x, w, b, stride, pad, out_pad).shape(), rng, -1, 1);
    return check(
        [&](const auto& p) { return sum(mul(conv_transpose2d(p[0], p[1], p[2], stride, pad, out_pad), up)); },
        {x, w, b}, step);
  });

  ops.emplace_back("batch_norm", [](std::mt19937_64& rng, double step) {
    const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3), s = pick(rng, 2, 4);
    auto x = uniform({n, c, s, s}, rng, -2, 2);
    auto gamma = uniform({c}, rng, 0.5, 1.5);
    auto beta = uniform({c}, rng, -1, 1);
    auto up = uniform(x.shape(), rng, -1, 1);
    BatchNormState<double> state;
    BatchNormOptions opts;
    opts.training = pick(rng, 0, 3) != 0;
    return check([&](const auto& p) { return sum(mul(batch_norm(p[0], p[1], p[2], state, opts), up)); },
                 {x, gamma, beta}, step);
  });

  ops.emplace_back("relu", [](std::mt19937_64& rng, double step) {
    auto x = uniform({pick(rng, 2, 12)}, rng, -1, 1);
    auto up = uniform(x.shape(), rng, -1, 1);
    return check([&](const auto& p) { return sum(mul(relu(p[0]), up)); }, {x}, step);
  });

  ops.emplace_back("leaky_relu", [](std::mt19937_64& rng, double step) {
    auto x = uniform({pick(rng, 2, 12)}, rng, -1, 1);
    const double slope = std::uniform_real_distribution<double>(0.01, 0.5)(rng);
    auto up = uniform(x.shape(), rng, -1, 1);
    return check([&](const auto& p) { return sum(mul(leaky_relu(p[0], slope), up)); }, {x}, step);
  });

  ops.emplace_back("sigmoid", [](std::mt19937_64& rng, double step) {
    auto x = uniform({pick(rng, 2, 12)}, rng, -4, 4);
    auto up = uniform(x.shape(), rng, -1, 1);
    return check([&](const auto& p) { return sum(mul(sigmoid(p[0]), up)); }, {x}, step);
  });

  ops.emplace_back("concat_channels", [](std::mt19937_64& rng, double step) {
    const std::size_t n = pick(rng, 1, 2), s = pick(rng, 1, 4);
    auto a = uniform({n, pick(rng, 1, 3), s, s}, rng, -1, 1);
    auto b = uniform({n, pick(rng, 1, 3), s, s}, rng, -1, 1);
    auto up = uniform(concat_channels(a, b).shape(), rng, -1, 1);
    return check([&](const auto& p) { return sum(mul(concat_channels(p[0], p[1]), up)); }, {a, b}, step);
  });

  ops.emplace_back("fully_connected", [](std::mt19937_64& rng, double step) {
    const std::size_t n = pick(rng, 1, 3), f = pick(rng, 1, 8);
    auto x = uniform({n, f}, rng, -1, 1);
    auto w = uniform({f, 1}, rng, -1, 1);
    auto b = uniform({1}, rng, -1, 1);
    auto up = uniform({n, 1}, rng, -1, 1);
    return check([&](const auto& p) { return sum(mul(fully_connected(p[0], p[1], p[2]), up)); }, {x, w, b}, step);
  });

  ops.emplace_back("discriminator_loss", [](std::mt19937_64& rng, double step) {
    const std::size_t n = pick(rng, 1, 4);
    auto real = uniform({n, 1}, rng, 0.05, 0.95);
    auto fake = uniform({n, 1}, rng, 0.05, 0.95);
    return check([&](const auto& p) { return discriminator_loss(p[0], p[1]); }, {real, fake}, step);
  });

  ops.emplace_back("generator_adv_loss", [](std::mt19937_64& rng, double step) {
    auto fake = uniform({pick(rng, 1, 4), 1}, rng, 0.05, 0.95);
    return check([&](const auto& p) { return generator_adv_loss(p[0]); }, {fake}, step);
  });

  ops.emplace_back("l1_loss", [](std::mt19937_64& rng, double step) {
    const std::size_t s = pick(rng, 2, 5);
    auto g = uniform({1, 1, s, s}, rng, 0, 1);
    auto t = uniform({1, 1, s, s}, rng, 0, 1);
    return check([&](const auto& p) { return l1_loss(p[0], p[1]); }, {g, t}, step);
  });

  ops.emplace_back("tv_loss", [](std::mt19937_64& rng, double step) {
    const std::size_t s = pick(rng, 2, 6);
    auto z = uniform({pick(rng, 1, 2), 1, s, s}, rng, 0, 1);
    return check([&](const auto& p) { return tv_loss(p[0]); }, {z}, step);
  });

  return ops;
}

// Full generator objective L_gan + alpha L1 + beta TV at 16x16 against every
// generator and discriminator parameter, and the discriminator objective
// against every discriminator parameter. With a few thousand parameters some
// gradients are ~1e-7, so a plain 1e-6 central difference drowns in roundoff;
// the piecewise check takes larger steps and backs off near rectifier kinks.
std::vector<GradCheckRow> composite_rows(const GradCheckOptions& options) {
  ArchConfig arch = ArchConfig::for_image_size(16);
  arch.base_channels = 2;
  arch.max_channels = 8;
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  Generator<double> gen = build_generator<double>(arch, options.seed + 1, 0.3);
  Discriminator<double> disc = build_discriminator<double>(arch, options.seed + 2, 0.3);
  Tensor64 x = uniform({1, 1, 16, 16}, rng, 0, 1);
  // Binary targets like real glyphs; the generator output never equals them,
  // so the L1 term stays smooth.
  Tensor64 y({1, 1, 16, 16});
  std::bernoulli_distribution ink(0.3);
  for (auto& v : y.data()) v = ink(rng) ? 1.0 : 0.0;
  LossWeights weights;
  weights.alpha = 1.0;
  weights.beta = 0.01;

  auto params_of = [](const std::vector<NamedParam<double>>& named) {
    std::vector<Tensor64> out;
    for (const auto& p : named) out.push_back(p.tensor);
    return out;
  };
  std::vector<Tensor64> g_and_d = params_of(gen.parameters());
  for (auto& t : params_of(disc.parameters())) g_and_d.push_back(t);

  std::vector<GradCheckRow> rows;
  const double g_err = finite_diff_check_piecewise(
      [&] {
        Tensor64 fake = generator_forward(gen, x);
        Tensor64 d_fake = discriminator_forward(disc, x, fake);
        return generator_total_loss(d_fake, fake, y, weights).total;
      },
      g_and_d, options.composite_max_step, options.composite_min_step);
  rows.push_back({"generator_total_loss@16x16", 1, g_err, g_err < options.tolerance});

  const double d_err = finite_diff_check_piecewise(
      [&] {
        Tensor64 fake;
        {
          NoGradScope detached;
          fake = generator_forward(gen, x);
        }
        return discriminator_loss(discriminator_forward(disc, x, y), discriminator_forward(disc, x, fake));
      },
      params_of(disc.parameters()), options.composite_max_step, options.composite_min_step);
  rows.push_back({"discriminator_loss@16x16", 1, d_err, d_err < options.tolerance});
  return rows;
}

}  // namespace

std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& options) {
  std::vector<GradCheckRow> rows;
  std::mt19937_64 rng(options.seed);
  for (auto& [name, instance] : op_instances()) {
    GradCheckRow row{name, options.instances, 0.0, true};
    for (int i = 0; i < options.instances; ++i) row.max_rel_error = std::max(row.max_rel_error, instance(rng, options.step));
    row.passed = row.max_rel_error < options.tolerance;
    rows.push_back(row);
  }
  if (options.composite) {
    for (auto& row : composite_rows(options)) rows.push_back(row);
  }
  return rows;
}

}  // namespace glyphgan

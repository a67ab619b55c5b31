#include "glyphgan/losses.hpp"

#include <cmath>

namespace glyphgan {

void LossWeights::validate() const {
  if (!(alpha >= 0) || !(beta >= 0)) throw ConfigError("loss weights alpha and beta must be >= 0");
  if (!(eps_log > 0 && eps_log < 1e-3)) throw ConfigError("eps_log must lie in (0, 1e-3)");
}

namespace {

template <typename T>
void require_probabilities(const Tensor<T>& p, const char* op) {
  for (T v : p.data()) {
    if (!(v >= T(0) && v <= T(1))) throw DomainError(std::string(op) + ": probability outside [0,1]");
  }
}

// mean(log(clamp(p))) or mean(log(1 - clamp(p))); gradient is zero where the
// clamp is active.
template <typename T>
Tensor<T> mean_log(const Tensor<T>& p, bool complement, double eps, const char* op) {
  require_probabilities(p, op);
  const std::size_t n = p.numel();
  Tensor<T> out = make_result<T>({1}, {&p});
  double acc = 0;
  for (T v : p.data()) {
    const double c = std::clamp(static_cast<double>(v), eps, 1.0 - eps);
    if (branch_recording()) {
      note_branch(v < eps);
      note_branch(v > 1.0 - eps);
    }
    acc += std::log(complement ? 1.0 - c : c);
  }
  out[0] = static_cast<T>(acc / static_cast<double>(n));
  check_finite<T>(out.data(), op, "forward");
  record_op<T>(op, out, {p}, [p, complement, eps, n](std::span<const T> g) {
    if (!p.requires_grad()) return;
    auto gi = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double v = p[i];
      if (v < eps || v > 1.0 - eps) continue;
      const double d = complement ? -1.0 / (1.0 - v) : 1.0 / v;
      gi[i] += static_cast<T>(g[0] * d / static_cast<double>(n));
    }
  });
  return out;
}

}  // namespace

template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake, double eps_log) {
  Tensor<T> real_term = mean_log(d_real, false, eps_log, "discriminator_loss");
  Tensor<T> fake_term = mean_log(d_fake, true, eps_log, "discriminator_loss");
  return scale(add(real_term, fake_term), -1.0);
}

template <typename T>
Tensor<T> generator_adv_loss(const Tensor<T>& d_fake, double eps_log) {
  return scale(mean_log(d_fake, false, eps_log, "generator_adv_loss"), -1.0);
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& generated, const Tensor<T>& target) {
  if (generated.shape() != target.shape()) {
    throw DimensionError("l1_loss: shapes " + shape_str(generated.shape()) + " and " + shape_str(target.shape()) +
                         " differ");
  }
  const std::size_t n = generated.numel();
  Tensor<T> out = make_result<T>({1}, {&generated, &target});
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(generated[i]) - target[i];
    acc += std::abs(d);
    if (branch_recording()) {
      note_branch(d > 0);
      note_branch(d < 0);
    }
  }
  out[0] = static_cast<T>(acc / static_cast<double>(n));
  check_finite<T>(out.data(), "l1_loss", "forward");
  record_op<T>("l1_loss", out, {generated, target}, [generated, target, n](std::span<const T> g) {
    const T k = static_cast<T>(g[0] / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const T diff = generated[i] - target[i];
      const T s = diff > T(0) ? k : (diff < T(0) ? -k : T(0));
      if (generated.requires_grad()) generated.ensure_grad()[i] += s;
      if (target.requires_grad()) target.ensure_grad()[i] -= s;
    }
  });
  return out;
}

template <typename T>
Tensor<T> tv_loss(const Tensor<T>& z) {
  if (z.rank() != 4) throw DimensionError("tv_loss: expected [N,C,S,S], got " + shape_str(z.shape()));
  const std::size_t n = z.dim(0), c = z.dim(1), h = z.dim(2), w = z.dim(3);
  if (h < 2 || w < 2) throw DomainError("tv_loss: image side must be >= 2");
  constexpr double kStabilizer = 1e-12;
  // Each term drops sqrt(kStabilizer) again so flat regions contribute exactly 0.
  const double floor = std::sqrt(kStabilizer);
  Tensor<T> out = make_result<T>({1}, {&z});
  double acc = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* p = z.data().data() + plane * h * w;
    for (std::size_t i = 0; i + 1 < h; ++i) {
      for (std::size_t j = 0; j + 1 < w; ++j) {
        const double dx = static_cast<double>(p[i * w + j + 1]) - p[i * w + j];
        const double dy = static_cast<double>(p[(i + 1) * w + j]) - p[i * w + j];
        acc += std::sqrt(dx * dx + dy * dy + kStabilizer) - floor;
      }
    }
  }
  out[0] = static_cast<T>(acc / static_cast<double>(n));
  check_finite<T>(out.data(), "tv_loss", "forward");
  record_op<T>("tv_loss", out, {z}, [z, n, c, h, w](std::span<const T> g) {
    if (!z.requires_grad()) return;
    auto gz = z.ensure_grad();
    const double k = g[0] / static_cast<double>(n);
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      const std::size_t base = plane * h * w;
      for (std::size_t i = 0; i + 1 < h; ++i) {
        for (std::size_t j = 0; j + 1 < w; ++j) {
          const std::size_t at = base + i * w + j;
          const double dx = static_cast<double>(z[at + 1]) - z[at];
          const double dy = static_cast<double>(z[at + w]) - z[at];
          const double r = std::sqrt(dx * dx + dy * dy + kStabilizer);
          gz[at + 1] += static_cast<T>(k * dx / r);
          gz[at + w] += static_cast<T>(k * dy / r);
          gz[at] -= static_cast<T>(k * (dx + dy) / r);
        }
      }
    }
  });
  return out;
}

template <typename T>
GeneratorLoss<T> generator_total_loss(const Tensor<T>& d_fake, const Tensor<T>& generated, const Tensor<T>& target,
                                      const LossWeights& weights) {
  weights.validate();
  Tensor<T> adv = generator_adv_loss(d_fake, weights.eps_log);
  Tensor<T> l1 = l1_loss(generated, target);
  Tensor<T> tv = tv_loss(generated);
  GeneratorLoss<T> out;
  out.total = add(add(adv, scale(l1, weights.alpha)), scale(tv, weights.beta));
  out.adversarial = adv.item();
  out.l1 = l1.item();
  out.tv = tv.item();
  return out;
}

#define GLYPHGAN_INSTANTIATE(T)                                                                           \
  template Tensor<T> discriminator_loss<T>(const Tensor<T>&, const Tensor<T>&, double);                   \
  template Tensor<T> generator_adv_loss<T>(const Tensor<T>&, double);                                     \
  template Tensor<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> tv_loss<T>(const Tensor<T>&);                                                        \
  template GeneratorLoss<T> generator_total_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                                    const LossWeights&);

GLYPHGAN_INSTANTIATE(float)
GLYPHGAN_INSTANTIATE(double)

#undef GLYPHGAN_INSTANTIATE

}  // namespace glyphgan

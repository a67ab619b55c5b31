#include "glyphgan/optim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace glyphgan {

void TrainConfig::validate() const {
  auto lr_ok = [](double lr) { return lr > 0 && lr <= 1; };
  auto beta_ok = [](double b) { return b >= 0 && b < 1; };
  if (!lr_ok(lr_g) || !lr_ok(lr_d)) throw ConfigError("learning rates must lie in (0, 1]");
  if (!beta_ok(beta_g) || !beta_ok(beta_d) || !beta_ok(adam_beta2)) {
    throw ConfigError("Adam coefficients must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be > 0");
  if (!(decay > 0 && decay <= 1)) throw ConfigError("decay must lie in (0, 1]");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (init_std < 0) throw ConfigError("init_std must be >= 0");
  if (d_steps < 1) throw ConfigError("d_steps must be >= 1");
  if (grad_clip < 0) throw ConfigError("grad_clip must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (jitter_size < 0) throw ConfigError("jitter_size must be >= 0");
}

template <typename T>
std::vector<Tensor<T>> init_params(const std::vector<ParamSpec>& specs, double std, std::uint64_t seed) {
  if (std < 0) throw ConfigError("init std must be >= 0");
  std::mt19937_64 rng(seed);
  std::vector<Tensor<T>> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) {
    Tensor<T> t(spec.shape);
    switch (spec.role) {
      case ParamRole::Weight:
        if (std > 0) {
          std::normal_distribution<double> normal(0.0, std);
          for (auto& v : t.data()) v = static_cast<T>(normal(rng));
        }
        break;
      case ParamRole::Bias:
      case ParamRole::Beta:
        break;
      case ParamRole::Gamma:
        for (auto& v : t.data()) v = T(1);
        break;
    }
    t.set_requires_grad(true);
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
double adam_step(std::span<NamedParam<T>> params, AdamState<T>& state, const AdamHyper& hyper) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].tensor.numel(), T(0));
      state.v[i].assign(params[i].tensor.numel(), T(0));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor.numel()) {
      throw DimensionError("Adam state for " + params[i].name + " does not match its parameter");
    }
    if (params[i].tensor.has_grad()) {
      for (T g : params[i].tensor.grad()) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter " + params[i].name);
      }
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  double max_delta = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor;
    auto value = p.data();
    const bool has_grad = p.has_grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      double g = has_grad ? static_cast<double>(p.grad()[j]) : 0.0;
      if (hyper.grad_clip > 0) g = std::clamp(g, -hyper.grad_clip, hyper.grad_clip);
      const double mj = hyper.beta1 * m[j] + (1 - hyper.beta1) * g;
      const double vj = hyper.beta2 * v[j] + (1 - hyper.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double delta = -hyper.lr * (mj / bc1) / (std::sqrt(vj / bc2) + hyper.eps);
      const T updated = static_cast<T>(value[j] + delta);
      max_delta = std::max(max_delta, std::abs(static_cast<double>(updated) - static_cast<double>(value[j])));
      value[j] = updated;
    }
  }
  return max_delta;
}

double lr_at_epoch(double initial, double decay, int epoch) {
  if (epoch < 0) throw ConfigError("epoch must be >= 0");
  return initial * std::pow(decay, epoch);
}

template std::vector<Tensor<float>> init_params<float>(const std::vector<ParamSpec>&, double, std::uint64_t);
template std::vector<Tensor<double>> init_params<double>(const std::vector<ParamSpec>&, double, std::uint64_t);
template double adam_step<float>(std::span<NamedParam<float>>, AdamState<float>&, const AdamHyper&);
template double adam_step<double>(std::span<NamedParam<double>>, AdamState<double>&, const AdamHyper&);

}  // namespace glyphgan

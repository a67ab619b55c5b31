#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "glyphgan/tensor.hpp"

namespace glyphgan {

struct TrainConfig {
  double lr_g = 0.001;
  double lr_d = 0.001;
  double beta_g = 0.5;  // Adam first-moment coefficient, generator
  double beta_d = 0.5;  // Adam first-moment coefficient, discriminator
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double decay = 0.9;  // per-epoch learning-rate factor
  int epochs = 100;
  int batch_size = 1;
  double init_std = 0.02;
  std::uint64_t seed = 42;
  int d_steps = 1;         // discriminator updates per generator update
  double grad_clip = 0.0;  // elementwise clip when > 0
  int checkpoint_every = 1;
  bool augment = true;
  int jitter_size = 0;  // 0 selects round(image_size * 307 / 256)

  void validate() const;
};

enum class ParamRole { Weight, Bias, Gamma, Beta };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamRole role;
};

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// Weights ~ Normal(0, std^2), biases 0, batchnorm gamma 1 and beta 0. Draws
// happen in spec order from one generator seeded with `seed`.
template <typename T>
std::vector<Tensor<T>> init_params(const std::vector<ParamSpec>& specs, double std, std::uint64_t seed);

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

struct AdamHyper {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;
};

// Bias-corrected Adam update of every parameter from its gradient buffer
// (parameters without a gradient count as zero gradient). Returns the largest
// absolute parameter change. Throws NumericError naming the parameter on a
// non-finite gradient, before any parameter is modified.
template <typename T>
double adam_step(std::span<NamedParam<T>> params, AdamState<T>& state, const AdamHyper& hyper);

// initial * decay^epoch
double lr_at_epoch(double initial, double decay, int epoch);

}  // namespace glyphgan

#pragma once

#include "glyphgan/tensor.hpp"

namespace glyphgan {

struct LossWeights {
  double alpha = 100.0;   // L1 weight
  double beta = 1e-4;     // total-variation weight
  double eps_log = 1e-7;  // log arguments are clamped to [eps_log, 1 - eps_log]

  void validate() const;
};

// -mean(log D(real pair)) - mean(log(1 - D(fake pair))). The fake scores must
// come from a generator output that has been detached.
template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake, double eps_log = 1e-7);

// Non-saturating generator loss -mean(log D(fake pair)).
template <typename T>
Tensor<T> generator_adv_loss(const Tensor<T>& d_fake, double eps_log = 1e-7);

// Mean absolute difference over every element.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& generated, const Tensor<T>& target);

// Isotropic total variation over interior pixel pairs (last row/column only
// act as neighbors), summed per image and averaged over the batch.
template <typename T>
Tensor<T> tv_loss(const Tensor<T>& z);

template <typename T>
struct GeneratorLoss {
  Tensor<T> total;
  double adversarial = 0;
  double l1 = 0;
  double tv = 0;
};

// L_gan + alpha * L1 + beta * TV, with the unweighted terms reported.
template <typename T>
GeneratorLoss<T> generator_total_loss(const Tensor<T>& d_fake, const Tensor<T>& generated, const Tensor<T>& target,
                                      const LossWeights& weights);

}  // namespace glyphgan

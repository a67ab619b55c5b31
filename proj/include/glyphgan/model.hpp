#pragma once

// Encoder-decoder generator with skip links and a conditional discriminator,
// both parametrized by image size.

#include <cstdint>
#include <string>
#include <vector>

#include "glyphgan/optim.hpp"
#include "glyphgan/tensor.hpp"

namespace glyphgan {

enum class DiscriminatorHead { Scalar, Patch };

struct ArchConfig {
  int image_size = 32;
  int base_channels = 16;
  int max_channels = 128;
  int filter_size = 5;
  int stride = 2;
  int disc_blocks = 4;
  double encoder_slope = 0.0;  // 0 gives plain ReLU in encoder and discriminator
  DiscriminatorHead disc_head = DiscriminatorHead::Scalar;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  // Channel defaults: 64/512 at 256 pixels and above, 16/128 below.
  static ArchConfig for_image_size(int image_size);

  int depth() const;  // log2(image_size)
  int padding() const { return filter_size / 2; }
  int encoder_channels(int block) const;
  int disc_channels(int block) const;
  void validate() const;

  bool operator==(const ArchConfig&) const = default;
};

// One row of the structural description of a network.
struct LayerInfo {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int skip_channels = 0;  // channels concatenated from the mirrored encoder layer
  int out_size = 0;       // spatial side after the layer
  bool batchnorm = false;
};

std::vector<LayerInfo> describe_generator(const ArchConfig& arch);
std::vector<LayerInfo> describe_discriminator(const ArchConfig& arch);

// Parameter names/shapes in a fixed order; a pure function of the arch.
std::vector<ParamSpec> generator_param_specs(const ArchConfig& arch);
std::vector<ParamSpec> discriminator_param_specs(const ArchConfig& arch);

template <typename T>
struct ConvBlock {
  Tensor<T> kernel;
  Tensor<T> bias;   // only without batchnorm
  Tensor<T> gamma;  // undefined when the block has no batchnorm
  Tensor<T> beta;
  BatchNormState<T> bn;
  bool has_bn() const { return gamma.defined(); }
};

struct ForwardMode {
  bool training = true;
  bool update_running = true;
};

template <typename T>
struct Generator {
  ArchConfig arch;
  std::vector<ConvBlock<T>> encoder;
  std::vector<ConvBlock<T>> decoder;  // last entry is the sigmoid output layer

  std::vector<NamedParam<T>> parameters() const;
  std::vector<std::pair<std::string, std::vector<T>*>> buffers();
};

template <typename T>
struct Discriminator {
  ArchConfig arch;
  std::vector<ConvBlock<T>> blocks;
  Tensor<T> head_weight;  // fully-connected [F,1] or patch conv [1,C,k,k]
  Tensor<T> head_bias;

  std::vector<NamedParam<T>> parameters() const;
  std::vector<std::pair<std::string, std::vector<T>*>> buffers();
};

template <typename T>
struct ModelParams {
  ArchConfig arch;
  Generator<T> generator;
  Discriminator<T> discriminator;
};

template <typename T>
Generator<T> build_generator(const ArchConfig& arch, std::uint64_t seed, double init_std = 0.02);
template <typename T>
Discriminator<T> build_discriminator(const ArchConfig& arch, std::uint64_t seed, double init_std = 0.02);

// x: [N,1,S,S] in [0,1] -> [N,1,S,S] probabilities that each pixel is ink.
template <typename T>
Tensor<T> generator_forward(Generator<T>& g, const Tensor<T>& x, const ForwardMode& mode = {});

// Probability that (condition, candidate) is a real pair: [N,1] for the
// scalar head, [N,P] per patch for the patch head.
template <typename T>
Tensor<T> discriminator_forward(Discriminator<T>& d, const Tensor<T>& condition, const Tensor<T>& candidate,
                                const ForwardMode& mode = {});

// Copies of every parameter value and buffer, for bitwise comparisons.
template <typename T>
std::vector<std::vector<T>> snapshot(const std::vector<NamedParam<T>>& params);

template <typename T>
void set_requires_grad(const std::vector<NamedParam<T>>& params, bool on);

std::size_t parameter_count(const std::vector<ParamSpec>& specs);

}  // namespace glyphgan

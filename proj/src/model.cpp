#include "glyphgan/model.hpp"

#include <algorithm>

namespace glyphgan {

// ---------------------------------------------------------------------------
// Architecture

ArchConfig ArchConfig::for_image_size(int image_size) {
  ArchConfig arch;
  arch.image_size = image_size;
  if (image_size >= 256) {
    arch.base_channels = 64;
    arch.max_channels = 512;
  } else {
    arch.base_channels = 16;
    arch.max_channels = 128;
  }
  return arch;
}

int ArchConfig::depth() const {
  int d = 0;
  while ((1 << d) < image_size) ++d;
  return d;
}

int ArchConfig::encoder_channels(int block) const {
  long c = static_cast<long>(base_channels) << std::min(block, 30);
  return static_cast<int>(std::min<long>(c, max_channels));
}

int ArchConfig::disc_channels(int block) const { return encoder_channels(block); }

void ArchConfig::validate() const {
  if (image_size < 2 || (image_size & (image_size - 1)) != 0) {
    throw ConfigError("image_size must be a power of two >= 2, got " + std::to_string(image_size));
  }
  if (base_channels < 1 || max_channels < base_channels) {
    throw ConfigError("need 1 <= base_channels <= max_channels");
  }
  if (filter_size < 1 || filter_size % 2 == 0) throw ConfigError("filter_size must be odd and positive");
  if (stride != 2) throw ConfigError("stride must be 2 so each block halves the image");
  if (disc_blocks < 1) throw ConfigError("disc_blocks must be >= 1");
  if ((image_size >> disc_blocks) < 1) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is too small for " +
                      std::to_string(disc_blocks) + " discriminator halvings");
  }
  if (encoder_slope < 0 || encoder_slope >= 1) throw ConfigError("encoder_slope must lie in [0, 1)");
  if (!(bn_epsilon > 0)) throw ConfigError("bn_epsilon must be > 0");
  if (!(bn_momentum > 0 && bn_momentum <= 1)) throw ConfigError("bn_momentum must lie in (0, 1]");
}

// A block whose output is 1x1 gets no batchnorm: with one sample per batch its
// statistics would collapse every activation to beta.
namespace {
bool block_has_bn(int out_size) { return out_size > 1; }
}  // namespace

std::vector<LayerInfo> describe_generator(const ArchConfig& arch) {
  arch.validate();
  const int n = arch.depth();
  std::vector<LayerInfo> layers;
  int in = 1;
  for (int i = 0; i < n; ++i) {
    const int size = arch.image_size >> (i + 1);
    layers.push_back({"enc" + std::to_string(i), in, arch.encoder_channels(i), 0, size, block_has_bn(size)});
    in = arch.encoder_channels(i);
  }
  // Decoder block j mirrors encoder block n-2-j; its input concatenates the
  // previous decoder output with the encoder output at the same resolution.
  int prev = arch.encoder_channels(n - 1);
  for (int j = 0; j < n; ++j) {
    const bool output_layer = (j == n - 1);
    const int skip = j == 0 ? 0 : arch.encoder_channels(n - 1 - j);
    const int out = output_layer ? 1 : arch.encoder_channels(n - 2 - j);
    const int size = arch.image_size >> (n - 1 - j);
    layers.push_back({output_layer ? "out" : "dec" + std::to_string(j), prev + skip, out, skip, size,
                      !output_layer && block_has_bn(size)});
    prev = out;
  }
  return layers;
}

std::vector<LayerInfo> describe_discriminator(const ArchConfig& arch) {
  arch.validate();
  std::vector<LayerInfo> layers;
  int in = 2;
  for (int b = 0; b < arch.disc_blocks; ++b) {
    const int size = arch.image_size >> (b + 1);
    layers.push_back({"block" + std::to_string(b), in, arch.disc_channels(b), 0, size, block_has_bn(size)});
    in = arch.disc_channels(b);
  }
  const int size = arch.image_size >> arch.disc_blocks;
  if (arch.disc_head == DiscriminatorHead::Scalar) {
    layers.push_back({"head", in * size * size, 1, 0, 1, false});
  } else {
    layers.push_back({"head", in, 1, 0, size, false});
  }
  return layers;
}

namespace {

void append_block_specs(std::vector<ParamSpec>& specs, const std::string& prefix, Shape kernel_shape,
                        std::size_t out_channels, bool bn) {
  specs.push_back({prefix + ".kernel", std::move(kernel_shape), ParamRole::Weight});
  // batchnorm removes any per-channel shift, so a bias there is inert
  if (!bn) specs.push_back({prefix + ".bias", {out_channels}, ParamRole::Bias});
  if (bn) {
    specs.push_back({prefix + ".gamma", {out_channels}, ParamRole::Gamma});
    specs.push_back({prefix + ".beta", {out_channels}, ParamRole::Beta});
  }
}

}  // namespace

std::vector<ParamSpec> generator_param_specs(const ArchConfig& arch) {
  const auto k = static_cast<std::size_t>(arch.filter_size);
  std::vector<ParamSpec> specs;
  for (const auto& l : describe_generator(arch)) {
    const auto in = static_cast<std::size_t>(l.in_channels), out = static_cast<std::size_t>(l.out_channels);
    // conv kernels are [Cout,Cin,k,k]; transposed kernels are [Cin,Cout,k,k]
    Shape shape = l.name.starts_with("enc") ? Shape{out, in, k, k} : Shape{in, out, k, k};
    append_block_specs(specs, "gen." + l.name, shape, out, l.batchnorm);
  }
  return specs;
}

std::vector<ParamSpec> discriminator_param_specs(const ArchConfig& arch) {
  const auto k = static_cast<std::size_t>(arch.filter_size);
  std::vector<ParamSpec> specs;
  for (const auto& l : describe_discriminator(arch)) {
    const auto in = static_cast<std::size_t>(l.in_channels), out = static_cast<std::size_t>(l.out_channels);
    if (l.name == "head") {
      Shape shape = arch.disc_head == DiscriminatorHead::Scalar ? Shape{in, 1} : Shape{1, in, k, k};
      specs.push_back({"disc.head.weight", shape, ParamRole::Weight});
      specs.push_back({"disc.head.bias", {1}, ParamRole::Bias});
    } else {
      append_block_specs(specs, "disc." + l.name, {out, in, k, k}, out, l.batchnorm);
    }
  }
  return specs;
}

std::size_t parameter_count(const std::vector<ParamSpec>& specs) {
  std::size_t n = 0;
  for (const auto& s : specs) n += shape_numel(s.shape);
  return n;
}

// ---------------------------------------------------------------------------
// Construction

namespace {

template <typename T>
std::vector<ConvBlock<T>> take_blocks(const std::vector<LayerInfo>& layers, const std::vector<ParamSpec>& specs,
                                      std::vector<Tensor<T>>& values, std::size_t& cursor, std::size_t count) {
  std::vector<ConvBlock<T>> blocks;
  for (std::size_t i = 0; i < count; ++i) {
    ConvBlock<T> b;
    b.kernel = values[cursor++];
    if (!layers[i].batchnorm) b.bias = values[cursor++];
    if (layers[i].batchnorm) {
      b.gamma = values[cursor++];
      b.beta = values[cursor++];
      const auto c = static_cast<std::size_t>(layers[i].out_channels);
      b.bn.running_mean.assign(c, T(0));
      b.bn.running_var.assign(c, T(1));
    }
    blocks.push_back(std::move(b));
  }
  (void)specs;
  return blocks;
}

template <typename T>
void append_block_params(std::vector<NamedParam<T>>& out, const std::string& prefix, const ConvBlock<T>& b) {
  out.push_back({prefix + ".kernel", b.kernel});
  if (!b.has_bn()) out.push_back({prefix + ".bias", b.bias});
  if (b.has_bn()) {
    out.push_back({prefix + ".gamma", b.gamma});
    out.push_back({prefix + ".beta", b.beta});
  }
}

template <typename T>
void append_block_buffers(std::vector<std::pair<std::string, std::vector<T>*>>& out, const std::string& prefix,
                          ConvBlock<T>& b) {
  if (!b.has_bn()) return;
  out.emplace_back(prefix + ".running_mean", &b.bn.running_mean);
  out.emplace_back(prefix + ".running_var", &b.bn.running_var);
}

}  // namespace

template <typename T>
Generator<T> build_generator(const ArchConfig& arch, std::uint64_t seed, double init_std) {
  const auto layers = describe_generator(arch);
  const auto specs = generator_param_specs(arch);
  auto values = init_params<T>(specs, init_std, seed);
  const auto n = static_cast<std::size_t>(arch.depth());

  // Skip-link channel accounting.
  for (std::size_t j = 1; j < n; ++j) {
    const auto& dec = layers[n + j];
    const auto& prev = layers[n + j - 1];
    const auto& mirror = layers[n - 1 - j];
    if (dec.in_channels != prev.out_channels + mirror.out_channels || dec.out_size != mirror.out_size * 2 ||
        dec.skip_channels != mirror.out_channels) {
      throw ConfigError("internal: skip link channel accounting failed at " + dec.name);
    }
  }

  Generator<T> g;
  g.arch = arch;
  std::size_t cursor = 0;
  std::vector<LayerInfo> enc(layers.begin(), layers.begin() + static_cast<long>(n));
  std::vector<LayerInfo> dec(layers.begin() + static_cast<long>(n), layers.end());
  g.encoder = take_blocks<T>(enc, specs, values, cursor, n);
  g.decoder = take_blocks<T>(dec, specs, values, cursor, n);
  return g;
}

template <typename T>
Discriminator<T> build_discriminator(const ArchConfig& arch, std::uint64_t seed, double init_std) {
  const auto layers = describe_discriminator(arch);
  const auto specs = discriminator_param_specs(arch);
  auto values = init_params<T>(specs, init_std, seed);
  Discriminator<T> d;
  d.arch = arch;
  std::size_t cursor = 0;
  d.blocks = take_blocks<T>(layers, specs, values, cursor, static_cast<std::size_t>(arch.disc_blocks));
  d.head_weight = values[cursor++];
  d.head_bias = values[cursor++];
  return d;
}

template <typename T>
std::vector<NamedParam<T>> Generator<T>::parameters() const {
  std::vector<NamedParam<T>> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) append_block_params(out, "gen.enc" + std::to_string(i), encoder[i]);
  for (std::size_t j = 0; j < decoder.size(); ++j) {
    append_block_params(out, j + 1 == decoder.size() ? std::string("gen.out") : "gen.dec" + std::to_string(j),
                        decoder[j]);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, std::vector<T>*>> Generator<T>::buffers() {
  std::vector<std::pair<std::string, std::vector<T>*>> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) append_block_buffers(out, "gen.enc" + std::to_string(i), encoder[i]);
  for (std::size_t j = 0; j + 1 < decoder.size(); ++j) {
    append_block_buffers(out, "gen.dec" + std::to_string(j), decoder[j]);
  }
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Discriminator<T>::parameters() const {
  std::vector<NamedParam<T>> out;
  for (std::size_t b = 0; b < blocks.size(); ++b) append_block_params(out, "disc.block" + std::to_string(b), blocks[b]);
  out.push_back({"disc.head.weight", head_weight});
  out.push_back({"disc.head.bias", head_bias});
  return out;
}

template <typename T>
std::vector<std::pair<std::string, std::vector<T>*>> Discriminator<T>::buffers() {
  std::vector<std::pair<std::string, std::vector<T>*>> out;
  for (std::size_t b = 0; b < blocks.size(); ++b) append_block_buffers(out, "disc.block" + std::to_string(b), blocks[b]);
  return out;
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

template <typename T>
Tensor<T> normalize(ConvBlock<T>& block, const Tensor<T>& x, const ArchConfig& arch, const ForwardMode& mode) {
  if (!block.has_bn()) return x;
  BatchNormOptions opts;
  opts.epsilon = arch.bn_epsilon;
  opts.momentum = arch.bn_momentum;
  opts.training = mode.training;
  opts.update_running = mode.update_running;
  return batch_norm(x, block.gamma, block.beta, block.bn, opts);
}

template <typename T>
Tensor<T> block_bias(const ConvBlock<T>& block, std::size_t out_channels) {
  return block.bias.defined() ? block.bias : Tensor<T>({out_channels});
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, double slope) {
  return slope > 0 ? leaky_relu(x, slope) : relu(x);
}

void require_image(const Shape& shape, int image_size, int channels, const char* what) {
  const auto s = static_cast<std::size_t>(image_size);
  if (shape.size() != 4 || shape[1] != static_cast<std::size_t>(channels) || shape[2] != s || shape[3] != s) {
    throw DimensionError(std::string(what) + " must be [N," + std::to_string(channels) + "," +
                         std::to_string(image_size) + "," + std::to_string(image_size) + "], got " + shape_str(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T> generator_forward(Generator<T>& g, const Tensor<T>& x, const ForwardMode& mode) {
  const ArchConfig& arch = g.arch;
  require_image(x.shape(), arch.image_size, 1, "generator input");
  const int pad = arch.padding();
  std::vector<Tensor<T>> skips;
  Tensor<T> h = x;
  for (auto& block : g.encoder) {
    h = activate(
        normalize(block, conv2d(h, block.kernel, block_bias(block, block.kernel.dim(0)), arch.stride, pad), arch, mode),
        arch.encoder_slope);
    skips.push_back(h);
  }
  const std::size_t n = g.encoder.size();
  for (std::size_t j = 0; j < n; ++j) {
    auto& block = g.decoder[j];
    Tensor<T> in = j == 0 ? h : concat_channels(h, skips[n - 1 - j]);
    Tensor<T> y =
        conv_transpose2d(in, block.kernel, block_bias(block, block.kernel.dim(1)), arch.stride, pad, arch.stride - 1);
    h = j + 1 == n ? sigmoid(y) : relu(normalize(block, y, arch, mode));
  }
  return h;
}

template <typename T>
Tensor<T> discriminator_forward(Discriminator<T>& d, const Tensor<T>& condition, const Tensor<T>& candidate,
                                const ForwardMode& mode) {
  const ArchConfig& arch = d.arch;
  require_image(condition.shape(), arch.image_size, 1, "discriminator condition");
  require_image(candidate.shape(), arch.image_size, 1, "discriminator candidate");
  if (condition.dim(0) != candidate.dim(0)) throw DimensionError("discriminator: batch sizes differ");
  const int pad = arch.padding();
  Tensor<T> h = concat_channels(condition, candidate);
  for (auto& block : d.blocks) {
    h = activate(
        normalize(block, conv2d(h, block.kernel, block_bias(block, block.kernel.dim(0)), arch.stride, pad), arch, mode),
        arch.encoder_slope);
  }
  const std::size_t n = h.dim(0);
  if (arch.disc_head == DiscriminatorHead::Scalar) {
    return sigmoid(fully_connected(reshape(h, {n, h.numel() / n}), d.head_weight, d.head_bias));
  }
  Tensor<T> p = sigmoid(conv2d(h, d.head_weight, d.head_bias, 1, pad));
  return reshape(p, {n, p.numel() / n});
}

template <typename T>
std::vector<std::vector<T>> snapshot(const std::vector<NamedParam<T>>& params) {
  std::vector<std::vector<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

template <typename T>
void set_requires_grad(const std::vector<NamedParam<T>>& params, bool on) {
  for (auto p : params) p.tensor.set_requires_grad(on);
}

#define GLYPHGAN_INSTANTIATE(T)                                                                          \
  template struct Generator<T>;                                                                          \
  template struct Discriminator<T>;                                                                      \
  template Generator<T> build_generator<T>(const ArchConfig&, std::uint64_t, double);                    \
  template Discriminator<T> build_discriminator<T>(const ArchConfig&, std::uint64_t, double);            \
  template Tensor<T> generator_forward<T>(Generator<T>&, const Tensor<T>&, const ForwardMode&);          \
  template Tensor<T> discriminator_forward<T>(Discriminator<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                              const ForwardMode&);                                       \
  template std::vector<std::vector<T>> snapshot<T>(const std::vector<NamedParam<T>>&);                   \
  template void set_requires_grad<T>(const std::vector<NamedParam<T>>&, bool);

GLYPHGAN_INSTANTIATE(float)
GLYPHGAN_INSTANTIATE(double)

#undef GLYPHGAN_INSTANTIATE

}  // namespace glyphgan

#include "glyphgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "glyphgan/parallel.hpp"

namespace glyphgan {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad)
    : node_(std::make_shared<TensorNode<T>>()) {
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
  set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<TensorNode<T>>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  set_requires_grad(requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) {
    node_->grad.assign(node_->data.size(), T(0));
  } else {
    node_->grad.clear();
  }
}

template <typename T>
std::span<T> Tensor<T>::ensure_grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor<T>(node_->shape, node_->data, false);
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape g_default_tape;
thread_local Tape* g_active_tape = nullptr;
thread_local bool g_no_grad = false;
thread_local BranchRecorder* g_branches = nullptr;
}  // namespace

BranchRecorder::BranchRecorder() : previous_(g_branches) { g_branches = this; }
BranchRecorder::~BranchRecorder() { g_branches = previous_; }
void note_branch(bool taken) {
  if (g_branches) g_branches->pattern_.push_back(taken);
}
bool branch_recording() { return g_branches != nullptr; }

Tape& active_tape() { return g_active_tape ? *g_active_tape : g_default_tape; }

bool grad_recording_enabled() { return !g_no_grad; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_no_grad) { g_no_grad = true; }
NoGradScope::~NoGradScope() { g_no_grad = previous_; }

template <typename T>
void Tape::backward(const Tensor<T>& scalar) {
  if (scalar.numel() != 1) {
    throw ConfigError("backward() needs a one-element output, got shape " + shape_str(scalar.shape()));
  }
  if (!scalar.requires_grad()) {
    throw ConfigError("backward() on a tensor that does not require gradients");
  }
  // Intermediate gradients are rebuilt on every pass; only leaves accumulate.
  for (auto& r : records_) r.reset();
  scalar.ensure_grad()[0] += T(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
}

template <typename T>
Tensor<T> make_result(Shape shape, std::initializer_list<const Tensor<T>*> inputs) {
  bool needs = false;
  if (grad_recording_enabled()) {
    for (const auto* t : inputs) needs = needs || t->requires_grad();
  }
  Tensor<T> out(std::move(shape));
  if (needs) {
    out.node()->requires_grad = true;
    out.node()->is_leaf = false;
  }
  return out;
}

template <typename T>
void check_finite(std::span<const T> values, const char* op, const char* phase) {
  for (T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value in ") + op + " " + phase);
    }
  }
}

template <typename T>
void record_op(const char* op, const Tensor<T>& out, std::initializer_list<Tensor<T>> inputs,
               std::function<void(std::span<const T>)> fn) {
  if (!out.requires_grad()) return;
  auto out_node = out.node();
  std::vector<Tensor<T>> ins(inputs);
  Tape::Record record;
  record.op = op;
  record.backward = [op, out_node, ins, fn = std::move(fn)]() {
    if (out_node->grad.empty()) return;
    fn(out_node->grad);
    for (const auto& t : ins) {
      if (t.requires_grad() && t.has_grad()) check_finite<T>(t.grad(), op, "backward");
    }
  };
  record.reset = [out_node]() { out_node->grad.clear(); };
  active_tape().push(std::move(record));
}

// ---------------------------------------------------------------------------
// Convolutions

namespace {

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, oh, ow;
  long stride, pad;
};

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride,
                 int padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  if (stride < 1 || padding < 0) throw ConfigError("conv2d: stride must be >= 1 and padding >= 0");
  if (kernel.dim(1) != input.dim(1)) {
    throw DimensionError("conv2d: input channels " + std::to_string(input.dim(1)) +
                         " do not match kernel " + shape_str(kernel.shape()));
  }
  if (bias.numel() != kernel.dim(0)) {
    throw DimensionError("conv2d: bias has " + std::to_string(bias.numel()) + " entries for " +
                         std::to_string(kernel.dim(0)) + " output channels");
  }
  const long h = static_cast<long>(input.dim(2));
  const long w = static_cast<long>(input.dim(3));
  const long kh = static_cast<long>(kernel.dim(2));
  const long kw = static_cast<long>(kernel.dim(3));
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  ConvGeometry g{input.dim(0),
                 input.dim(1),
                 input.dim(2),
                 input.dim(3),
                 kernel.dim(0),
                 kernel.dim(2),
                 kernel.dim(3),
                 static_cast<std::size_t>((h + 2 * padding - kh) / stride + 1),
                 static_cast<std::size_t>((w + 2 * padding - kw) / stride + 1),
                 stride,
                 padding};

  Tensor<T> out = make_result<T>({g.n, g.cout, g.oh, g.ow}, {&input, &kernel, &bias});
  const T* in = input.data().data();
  const T* k = kernel.data().data();
  const T* b = bias.data().data();
  T* o = out.data().data();

  parallel_for(g.n * g.cout, [&](std::size_t job) {
    const std::size_t n = job / g.cout, co = job % g.cout;
    T* plane = o + job * g.oh * g.ow;
    std::fill(plane, plane + g.oh * g.ow, b[co]);
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const T* src = in + (n * g.cin + ci) * g.h * g.w;
      for (std::size_t y = 0; y < g.kh; ++y) {
        for (std::size_t x = 0; x < g.kw; ++x) {
          const T wv = k[((co * g.cin + ci) * g.kh + y) * g.kw + x];
          for (std::size_t r = 0; r < g.oh; ++r) {
            const long ih = static_cast<long>(r) * g.stride - g.pad + static_cast<long>(y);
            if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
            const T* row = src + ih * g.w;
            T* orow = plane + r * g.ow;
            for (std::size_t c = 0; c < g.ow; ++c) {
              const long iw = static_cast<long>(c) * g.stride - g.pad + static_cast<long>(x);
              if (iw < 0 || iw >= static_cast<long>(g.w)) continue;
              orow[c] += wv * row[iw];
            }
          }
        }
      }
    }
  });
  check_finite<T>(out.data(), "conv2d", "forward");

  record_op<T>("conv2d", out, {input, kernel, bias}, [input, kernel, bias, g](std::span<const T> gout) {
    const T* go = gout.data();
    const T* in = input.data().data();
    const T* k = kernel.data().data();
    if (bias.requires_grad()) {
      auto gb = bias.ensure_grad();
      for (std::size_t co = 0; co < g.cout; ++co) {
        T acc = 0;
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* p = go + (n * g.cout + co) * g.oh * g.ow;
          for (std::size_t i = 0; i < g.oh * g.ow; ++i) acc += p[i];
        }
        gb[co] += acc;
      }
    }
    if (kernel.requires_grad()) {
      T* gk = kernel.ensure_grad().data();
      parallel_for(g.cout, [&](std::size_t co) {
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* gplane = go + (n * g.cout + co) * g.oh * g.ow;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const T* src = in + (n * g.cin + ci) * g.h * g.w;
            for (std::size_t y = 0; y < g.kh; ++y) {
              for (std::size_t x = 0; x < g.kw; ++x) {
                T acc = 0;
                for (std::size_t r = 0; r < g.oh; ++r) {
                  const long ih = static_cast<long>(r) * g.stride - g.pad + static_cast<long>(y);
                  if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
                  for (std::size_t c = 0; c < g.ow; ++c) {
                    const long iw = static_cast<long>(c) * g.stride - g.pad + static_cast<long>(x);
                    if (iw < 0 || iw >= static_cast<long>(g.w)) continue;
                    acc += gplane[r * g.ow + c] * src[ih * g.w + iw];
                  }
                }
                gk[((co * g.cin + ci) * g.kh + y) * g.kw + x] += acc;
              }
            }
          }
        }
      });
    }
    if (input.requires_grad()) {
      T* gi = input.ensure_grad().data();
      parallel_for(g.n * g.cin, [&](std::size_t job) {
        const std::size_t n = job / g.cin, ci = job % g.cin;
        T* dst = gi + job * g.h * g.w;
        for (std::size_t co = 0; co < g.cout; ++co) {
          const T* gplane = go + (n * g.cout + co) * g.oh * g.ow;
          for (std::size_t y = 0; y < g.kh; ++y) {
            for (std::size_t x = 0; x < g.kw; ++x) {
              const T wv = k[((co * g.cin + ci) * g.kh + y) * g.kw + x];
              for (std::size_t r = 0; r < g.oh; ++r) {
                const long ih = static_cast<long>(r) * g.stride - g.pad + static_cast<long>(y);
                if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
                for (std::size_t c = 0; c < g.ow; ++c) {
                  const long iw = static_cast<long>(c) * g.stride - g.pad + static_cast<long>(x);
                  if (iw < 0 || iw >= static_cast<long>(g.w)) continue;
                  dst[ih * g.w + iw] += wv * gplane[r * g.ow + c];
                }
              }
            }
          }
        }
      });
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                           int stride, int padding, int output_padding) {
  require_rank(input, 4, "conv_transpose2d", "input");
  require_rank(kernel, 4, "conv_transpose2d", "kernel");
  if (stride < 1 || padding < 0 || output_padding < 0 || output_padding >= stride) {
    throw ConfigError("conv_transpose2d: need stride >= 1, padding >= 0, 0 <= output_padding < stride");
  }
  if (kernel.dim(0) != input.dim(1)) {
    throw DimensionError("conv_transpose2d: input channels " + std::to_string(input.dim(1)) +
                         " do not match kernel " + shape_str(kernel.shape()));
  }
  if (bias.numel() != kernel.dim(1)) {
    throw DimensionError("conv_transpose2d: bias has " + std::to_string(bias.numel()) + " entries for " +
                         std::to_string(kernel.dim(1)) + " output channels");
  }
  const long h = static_cast<long>(input.dim(2));
  const long w = static_cast<long>(input.dim(3));
  const long oh = (h - 1) * stride - 2 * padding + static_cast<long>(kernel.dim(2)) + output_padding;
  const long ow = (w - 1) * stride - 2 * padding + static_cast<long>(kernel.dim(3)) + output_padding;
  if (oh < 1 || ow < 1) throw DimensionError("conv_transpose2d: empty output for " + shape_str(input.shape()));
  // Reuse the conv geometry with roles swapped: h/w are the (small) input.
  ConvGeometry g{input.dim(0),
                 input.dim(1),
                 input.dim(2),
                 input.dim(3),
                 kernel.dim(1),
                 kernel.dim(2),
                 kernel.dim(3),
                 static_cast<std::size_t>(oh),
                 static_cast<std::size_t>(ow),
                 stride,
                 padding};

  Tensor<T> out = make_result<T>({g.n, g.cout, g.oh, g.ow}, {&input, &kernel, &bias});
  const T* in = input.data().data();
  const T* k = kernel.data().data();
  const T* b = bias.data().data();
  T* o = out.data().data();

  parallel_for(g.n * g.cout, [&](std::size_t job) {
    const std::size_t n = job / g.cout, co = job % g.cout;
    T* plane = o + job * g.oh * g.ow;
    std::fill(plane, plane + g.oh * g.ow, b[co]);
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const T* src = in + (n * g.cin + ci) * g.h * g.w;
      for (std::size_t y = 0; y < g.kh; ++y) {
        for (std::size_t x = 0; x < g.kw; ++x) {
          const T wv = k[((ci * g.cout + co) * g.kh + y) * g.kw + x];
          for (std::size_t r = 0; r < g.h; ++r) {
            const long orow = static_cast<long>(r) * g.stride - g.pad + static_cast<long>(y);
            if (orow < 0 || orow >= static_cast<long>(g.oh)) continue;
            for (std::size_t c = 0; c < g.w; ++c) {
              const long ocol = static_cast<long>(c) * g.stride - g.pad + static_cast<long>(x);
              if (ocol < 0 || ocol >= static_cast<long>(g.ow)) continue;
              plane[orow * g.ow + ocol] += wv * src[r * g.w + c];
            }
          }
        }
      }
    }
  });
  check_finite<T>(out.data(), "conv_transpose2d", "forward");

  record_op<T>("conv_transpose2d", out, {input, kernel, bias}, [input, kernel, bias, g](std::span<const T> gout) {
    const T* go = gout.data();
    const T* in = input.data().data();
    const T* k = kernel.data().data();
    if (bias.requires_grad()) {
      auto gb = bias.ensure_grad();
      for (std::size_t co = 0; co < g.cout; ++co) {
        T acc = 0;
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* p = go + (n * g.cout + co) * g.oh * g.ow;
          for (std::size_t i = 0; i < g.oh * g.ow; ++i) acc += p[i];
        }
        gb[co] += acc;
      }
    }
    if (kernel.requires_grad()) {
      T* gk = kernel.ensure_grad().data();
      parallel_for(g.cin, [&](std::size_t ci) {
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* src = in + (n * g.cin + ci) * g.h * g.w;
          for (std::size_t co = 0; co < g.cout; ++co) {
            const T* gplane = go + (n * g.cout + co) * g.oh * g.ow;
            for (std::size_t y = 0; y < g.kh; ++y) {
              for (std::size_t x = 0; x < g.kw; ++x) {
                T acc = 0;
                for (std::size_t r = 0; r < g.h; ++r) {
                  const long orow = static_cast<long>(r) * g.stride - g.pad + static_cast<long>(y);
                  if (orow < 0 || orow >= static_cast<long>(g.oh)) continue;
                  for (std::size_t c = 0; c < g.w; ++c) {
                    const long ocol = static_cast<long>(c) * g.stride - g.pad + static_cast<long>(x);
                    if (ocol < 0 || ocol >= static_cast<long>(g.ow)) continue;
                    acc += src[r * g.w + c] * gplane[orow * g.ow + ocol];
                  }
                }
                gk[((ci * g.cout + co) * g.kh + y) * g.kw + x] += acc;
              }
            }
          }
        }
      });
    }
    if (input.requires_grad()) {
      T* gi = input.ensure_grad().data();
      parallel_for(g.n * g.cin, [&](std::size_t job) {
        const std::size_t n = job / g.cin, ci = job % g.cin;
        T* dst = gi + job * g.h * g.w;
        for (std::size_t co = 0; co < g.cout; ++co) {
          const T* gplane = go + (n * g.cout + co) * g.oh * g.ow;
          for (std::size_t y = 0; y < g.kh; ++y) {
            for (std::size_t x = 0; x < g.kw; ++x) {
              const T wv = k[((ci * g.cout + co) * g.kh + y) * g.kw + x];
              for (std::size_t r = 0; r < g.h; ++r) {
                const long orow = static_cast<long>(r) * g.stride - g.pad + static_cast<long>(y);
                if (orow < 0 || orow >= static_cast<long>(g.oh)) continue;
                for (std::size_t c = 0; c < g.w; ++c) {
                  const long ocol = static_cast<long>(c) * g.stride - g.pad + static_cast<long>(x);
                  if (ocol < 0 || ocol >= static_cast<long>(g.ow)) continue;
                  dst[r * g.w + c] += wv * gplane[orow * g.ow + ocol];
                }
              }
            }
          }
        }
      });
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, const BatchNormOptions& options) {
  require_rank(input, 4, "batch_norm", "input");
  if (!(options.epsilon > 0)) throw ConfigError("batch_norm: epsilon must be > 0");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("batch_norm: gamma/beta must have " + std::to_string(c) + " entries");
  }
  const std::size_t count = n * hw;
  if (options.training && count < 1) throw DimensionError("batch_norm: empty channel in training mode");
  if (state.running_mean.size() != c) {
    state.running_mean.assign(c, T(0));
    state.running_var.assign(c, T(1));
  }

  // Per-channel statistics used for normalization.
  std::vector<T> mu(c), inv_std(c);
  const T* x = input.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (options.training) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) s += p[j];
      }
      const double m = s / static_cast<double>(count);
      double v = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) v += (p[j] - m) * (p[j] - m);
      }
      v /= static_cast<double>(count);
      mu[ch] = static_cast<T>(m);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(v + options.epsilon));
      if (options.update_running) {
        const double unbiased = count > 1 ? v * static_cast<double>(count) / static_cast<double>(count - 1) : v;
        state.running_mean[ch] =
            static_cast<T>((1 - options.momentum) * state.running_mean[ch] + options.momentum * m);
        state.running_var[ch] =
            static_cast<T>((1 - options.momentum) * state.running_var[ch] + options.momentum * unbiased);
      }
    } else {
      mu[ch] = state.running_mean[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) + options.epsilon));
    }
  }

  Tensor<T> out = make_result<T>(input.shape(), {&input, &gamma, &beta});
  Tensor<T> xhat(input.shape());
  {
    const T* gm = gamma.data().data();
    const T* bt = beta.data().data();
    T* o = out.data().data();
    T* xh = xhat.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (i * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) {
          xh[base + j] = (x[base + j] - mu[ch]) * inv_std[ch];
          o[base + j] = gm[ch] * xh[base + j] + bt[ch];
        }
      }
    }
  }
  check_finite<T>(out.data(), "batch_norm", "forward");

  const bool training = options.training;
  record_op<T>("batch_norm", out, {input, gamma, beta},
               [input, gamma, beta, xhat, inv_std, n, c, hw, training](std::span<const T> gout) {
                 const T* go = gout.data();
                 const T* xh = xhat.data().data();
                 const T* gm = gamma.data().data();
                 std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
                 for (std::size_t i = 0; i < n; ++i) {
                   for (std::size_t ch = 0; ch < c; ++ch) {
                     const std::size_t base = (i * c + ch) * hw;
                     for (std::size_t j = 0; j < hw; ++j) {
                       sum_g[ch] += go[base + j];
                       sum_gx[ch] += go[base + j] * xh[base + j];
                     }
                   }
                 }
                 if (gamma.requires_grad()) {
                   auto gg = gamma.ensure_grad();
                   for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += static_cast<T>(sum_gx[ch]);
                 }
                 if (beta.requires_grad()) {
                   auto gb = beta.ensure_grad();
                   for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += static_cast<T>(sum_g[ch]);
                 }
                 if (input.requires_grad()) {
                   T* gi = input.ensure_grad().data();
                   const double m = static_cast<double>(n * hw);
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t ch = 0; ch < c; ++ch) {
                       const std::size_t base = (i * c + ch) * hw;
                       const double k = static_cast<double>(gm[ch]) * inv_std[ch];
                       for (std::size_t j = 0; j < hw; ++j) {
                         if (training) {
                           gi[base + j] += static_cast<T>(
                               k * (go[base + j] - sum_g[ch] / m - xh[base + j] * sum_gx[ch] / m));
                         } else {
                           gi[base + j] += static_cast<T>(k * go[base + j]);
                         }
                       }
                     }
                   }
                 }
               });
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise activations

namespace {

template <typename T>
Tensor<T> leaky_impl(const Tensor<T>& x, double slope, const char* op) {
  Tensor<T> out = make_result<T>(x.shape(), {&x});
  const auto in = x.data();
  auto o = out.data();
  const T s = static_cast<T>(slope);
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > T(0) ? in[i] : s * in[i];
  if (branch_recording()) {
    for (const T v : in) note_branch(v > T(0));
  }
  check_finite<T>(out.data(), op, "forward");
  record_op<T>(op, out, {x}, [x, s](std::span<const T> g) {
    if (!x.requires_grad()) return;
    auto gi = x.ensure_grad();
    const auto in = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += in[i] > T(0) ? g[i] : s * g[i];
  });
  return out;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

}  // namespace

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return leaky_impl(x, 0.0, "relu");
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope) {
  return leaky_impl(x, slope, "leaky_relu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out = make_result<T>(x.shape(), {&x});
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    // Split by sign so exp() never overflows.
    if (in[i] >= T(0)) {
      o[i] = T(1) / (T(1) + std::exp(-in[i]));
    } else {
      const T e = std::exp(in[i]);
      o[i] = e / (T(1) + e);
    }
  }
  check_finite<T>(out.data(), "sigmoid", "forward");
  record_op<T>("sigmoid", out, {x}, [x, out_data = out.node()](std::span<const T> g) {
    if (!x.requires_grad()) return;
    auto gi = x.ensure_grad();
    const auto& y = out_data->data;
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * y[i] * (T(1) - y[i]);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 4, "concat_channels", "a");
  require_rank(b, 4, "concat_channels", "b");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ outside the channel axis");
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor<T> out = make_result<T>({n, ca + cb, a.dim(2), a.dim(3)}, {&a, &b});
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().begin() + i * ca * hw, ca * hw, o.begin() + i * (ca + cb) * hw);
    std::copy_n(b.data().begin() + i * cb * hw, cb * hw, o.begin() + (i * (ca + cb) + ca) * hw);
  }
  record_op<T>("concat_channels", out, {a, b}, [a, b, n, ca, cb, hw](std::span<const T> g) {
    for (std::size_t i = 0; i < n; ++i) {
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t j = 0; j < ca * hw; ++j) ga[i * ca * hw + j] += g[i * (ca + cb) * hw + j];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t j = 0; j < cb * hw; ++j) gb[i * cb * hw + j] += g[(i * (ca + cb) + ca) * hw + j];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require_rank(x, 4, "slice_channels", "input");
  if (begin + count > x.dim(1) || count == 0) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") outside " + std::to_string(x.dim(1)) + " channels");
  }
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out = make_result<T>({n, count, x.dim(2), x.dim(3)}, {&x});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data().begin() + (i * c + begin) * hw, count * hw, out.data().begin() + i * count * hw);
  }
  record_op<T>("slice_channels", out, {x}, [x, n, c, hw, begin, count](std::span<const T> g) {
    if (!x.requires_grad()) return;
    auto gi = x.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < count * hw; ++j) gi[(i * c + begin) * hw + j] += g[i * count * hw + j];
    }
  });
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  Tensor<T> out = make_result<T>(std::move(shape), {&x});
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  record_op<T>("reshape", out, {x}, [x](std::span<const T> g) {
    if (!x.requires_grad()) return;
    auto gi = x.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
  });
  return out;
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(input, 2, "fully_connected", "input");
  require_rank(weight, 2, "fully_connected", "weight");
  if (weight.dim(0) != input.dim(1) || bias.numel() != weight.dim(1)) {
    throw DimensionError("fully_connected: input " + shape_str(input.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t n = input.dim(0), f = input.dim(1), o = weight.dim(1);
  Tensor<T> out = make_result<T>({n, o}, {&input, &weight, &bias});
  const auto x = input.data();
  const auto w = weight.data();
  const auto b = bias.data();
  auto y = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < o; ++j) {
      T acc = b[j];
      for (std::size_t k = 0; k < f; ++k) acc += x[i * f + k] * w[k * o + j];
      y[i * o + j] = acc;
    }
  }
  check_finite<T>(out.data(), "fully_connected", "forward");
  record_op<T>("fully_connected", out, {input, weight, bias}, [input, weight, bias, n, f, o](std::span<const T> g) {
    const auto x = input.data();
    const auto w = weight.data();
    if (bias.requires_grad()) {
      auto gb = bias.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < o; ++j) gb[j] += g[i * o + j];
    }
    if (weight.requires_grad()) {
      auto gw = weight.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < f; ++k)
          for (std::size_t j = 0; j < o; ++j) gw[k * o + j] += x[i * f + k] * g[i * o + j];
    }
    if (input.requires_grad()) {
      auto gi = input.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < f; ++k) {
          T acc = 0;
          for (std::size_t j = 0; j < o; ++j) acc += w[k * o + j] * g[i * o + j];
          gi[i * f + k] += acc;
        }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Arithmetic and reductions

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = make_result<T>(a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  check_finite<T>(out.data(), "add", "forward");
  record_op<T>("add", out, {a, b}, [a, b](std::span<const T> g) {
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = make_result<T>(a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
  check_finite<T>(out.data(), "sub", "forward");
  record_op<T>("sub", out, {a, b}, [a, b](std::span<const T> g) {
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = make_result<T>(a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  check_finite<T>(out.data(), "mul", "forward");
  record_op<T>("mul", out, {a, b}, [a, b](std::span<const T> g) {
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
    }
    if (b.requires_grad()) {
      auto gb = b.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor) {
  Tensor<T> out = make_result<T>(x.shape(), {&x});
  const T f = static_cast<T>(factor);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * f;
  check_finite<T>(out.data(), "scale", "forward");
  record_op<T>("scale", out, {x}, [x, f](std::span<const T> g) {
    if (!x.requires_grad()) return;
    auto gi = x.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * f;
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> out = make_result<T>({1}, {&x});
  T acc = 0;
  for (T v : x.data()) acc += v;
  out[0] = acc;
  check_finite<T>(out.data(), "sum", "forward");
  record_op<T>("sum", out, {x}, [x](std::span<const T> g) {
    if (!x.requires_grad()) return;
    auto gi = x.ensure_grad();
    for (auto& v : gi) v += g[0];
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

// ---------------------------------------------------------------------------

double finite_diff_check(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& point,
                         double step) {
  Tensor64 p = point.detach();
  p.set_requires_grad(true);
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(f(p));
  }
  const std::vector<double> analytic(p.grad().begin(), p.grad().end());

  NoGradScope no_grad;
  double worst = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double up = f(p).item();
    p[i] = orig - step;
    const double down = f(p).item();
    p[i] = orig;
    const double numeric = (up - down) / (2 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

double finite_diff_check_many(const std::function<Tensor64()>& loss, const std::vector<Tensor64>& params,
                              double step) {
  std::vector<Tensor64> leaves = params;
  for (auto& p : leaves) p.set_requires_grad(true);
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss());
  }
  NoGradScope no_grad;
  double worst = 0;
  for (auto& p : leaves) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double orig = p[i];
      p[i] = orig + step;
      const double up = loss().item();
      p[i] = orig - step;
      const double down = loss().item();
      p[i] = orig;
      const double numeric = (up - down) / (2 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

double finite_diff_check_piecewise(const std::function<Tensor64()>& loss, const std::vector<Tensor64>& params,
                                   double max_step, double min_step) {
  if (!(max_step > 0) || !(min_step > 0) || min_step > max_step) {
    throw ConfigError("finite_diff_check_piecewise: need 0 < min_step <= max_step");
  }
  std::vector<Tensor64> leaves = params;
  for (auto& p : leaves) p.set_requires_grad(true);
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss());
  }
  NoGradScope no_grad;
  BranchRecorder branches;
  loss();
  const std::vector<bool> base = branches.pattern();

  double worst = 0;
  for (auto& p : leaves) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double orig = p[i];
      bool smooth = false;
      auto at = [&](double offset) {
        p[i] = orig + offset;
        branches.clear();
        const double v = loss().item();
        p[i] = orig;
        smooth = smooth && branches.pattern() == base;
        return v;
      };
      double numeric = 0;
      for (double h = max_step;; h *= 0.5) {
        smooth = true;
        const double f1 = at(h) - at(-h);
        const double f2 = at(2 * h) - at(-2 * h);
        numeric = (8 * f1 - f2) / (12 * h);
        if (smooth || h * 0.5 < min_step) break;
      }
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------

#define GLYPHGAN_INSTANTIATE(T)                                                                          \
  template class Tensor<T>;                                                                              \
  template void Tape::backward<T>(const Tensor<T>&);                                                     \
  template Tensor<T> make_result<T>(Shape, std::initializer_list<const Tensor<T>*>);                     \
  template void check_finite<T>(std::span<const T>, const char*, const char*);                           \
  template void record_op<T>(const char*, const Tensor<T>&, std::initializer_list<Tensor<T>>,            \
                             std::function<void(std::span<const T>)>);                                   \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);          \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int, \
                                         int);                                                           \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                                   BatchNormState<T>&, const BatchNormOptions&);                         \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                          \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, double);                                            \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                       \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, std::size_t, std::size_t);                      \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                                \
  template Tensor<T> fully_connected<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale<T>(const Tensor<T>&, double);                                                 \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                           \
  template Tensor<T> mean<T>(const Tensor<T>&);

GLYPHGAN_INSTANTIATE(float)
GLYPHGAN_INSTANTIATE(double)

#undef GLYPHGAN_INSTANTIATE

}  // namespace glyphgan

#pragma once

// Reverse-mode automatic differentiation over dense row-major tensors.
//
// Operations executed while a gradient-carrying input is involved push a
// record onto the active Tape. backward() replays those records in exact
// reverse order; leaf gradients accumulate across calls until zero_grad().
// The engine is instantiated for float (training) and double (gradient
// verification).

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "glyphgan/errors.hpp"

namespace glyphgan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool is_leaf = true;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T& operator[](std::size_t i) { return node_->data[i]; }
  const T& operator[](std::size_t i) const { return node_->data[i]; }
  // Value of a one-element tensor.
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  // Allocates the gradient buffer (zeros) if absent and returns it.
  std::span<T> ensure_grad() const;
  void zero_grad();

  // Copy of the values with no gradient history.
  Tensor detach() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

// ---------------------------------------------------------------------------
// Tape

class Tape {
 public:
  struct Record {
    const char* op;
    std::function<void()> backward;
    std::function<void()> reset;  // drops the output's gradient buffer
  };

  void push(Record record) { records_.push_back(std::move(record)); }
  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }
  void clear() { records_.clear(); }

  // Seeds d(scalar)/d(scalar) = 1 and runs every record in reverse order.
  template <typename T>
  void backward(const Tensor<T>& scalar);

 private:
  std::vector<Record> records_;
};

// The tape that receives records on this thread. A thread-local default tape
// is active when no TapeScope is open.
Tape& active_tape();
bool grad_recording_enabled();

// Installs a fresh tape for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suppresses recording; outputs produced inside do not require gradients.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

// While alive, every piecewise op (rectifiers, |x|, clamps) appends which
// branch each element took. Two evaluations with equal patterns lie on the
// same smooth piece, which is what a finite difference needs.
class BranchRecorder {
 public:
  BranchRecorder();
  ~BranchRecorder();
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;
  const std::vector<bool>& pattern() const { return pattern_; }
  void clear() { pattern_.clear(); }

 private:
  friend void note_branch(bool);
  std::vector<bool> pattern_;
  BranchRecorder* previous_;
};

void note_branch(bool taken);
bool branch_recording();

template <typename T>
void backward(const Tensor<T>& scalar) {
  active_tape().backward(scalar);
}

// ---------------------------------------------------------------------------
// Building blocks for differentiable operations defined outside this header.

// Allocates an output tensor that requires gradients iff recording is enabled
// and any input requires gradients.
template <typename T>
Tensor<T> make_result(Shape shape, std::initializer_list<const Tensor<T>*> inputs);

// Throws NumericError naming `op` when any value is NaN or infinite.
template <typename T>
void check_finite(std::span<const T> values, const char* op, const char* phase);

// Records the backward closure for `out`. `fn` receives the output gradient
// and accumulates into the inputs' ensure_grad() buffers. No-op when `out`
// does not require gradients.
template <typename T>
void record_op(const char* op, const Tensor<T>& out, std::initializer_list<Tensor<T>> inputs,
               std::function<void(std::span<const T>)> fn);

// ---------------------------------------------------------------------------
// Operations

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
};

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;   // weight of the newest batch statistic
  bool training = true;    // batch statistics vs running statistics
  bool update_running = true;
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride,
                 int padding);

// Transposed convolution. kernel is [Cin, Cout, kH, kW]. output_padding adds
// rows/columns at the bottom/right so that a stride-2 "same" convolution and
// its transpose map 2H <-> H exactly.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                           int stride, int padding, int output_padding = 0);

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, const BatchNormOptions& options);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// input [N,F] x weight [F,O] + bias [O] -> [N,O]
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor);
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// ---------------------------------------------------------------------------
// Verification

// Max over coordinates of |analytic - central difference| /
// max(|analytic|, |central|, 1e-8) for the scalar function f at `point`.
double finite_diff_check(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& point,
                         double step);

// Same measure over every coordinate of several leaf tensors that `loss`
// reads directly. The analytic side comes from one backward pass; each
// coordinate is then perturbed in place. Existing gradients are overwritten.
double finite_diff_check_many(const std::function<Tensor64()>& loss, const std::vector<Tensor64>& params,
                              double step);

// As above for losses built from piecewise-smooth ops. Each coordinate uses a
// fourth-order central difference whose step starts at `max_step` and is
// halved until no probe point changes any branch recorded by BranchRecorder,
// down to `min_step`.
double finite_diff_check_piecewise(const std::function<Tensor64()>& loss, const std::vector<Tensor64>& params,
                                   double max_step, double min_step);

}  // namespace glyphgan

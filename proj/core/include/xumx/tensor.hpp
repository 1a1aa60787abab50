#pragma once

// Dense row-major tensors and a tape-based reverse-mode autodiff core.
//
// Every differentiable computation in the library is recorded on a Tape as a
// sequence of nodes. A node owns its forward value and a backward rule that
// maps the gradient of its output onto the gradients of its inputs. Complex
// quantities never appear on the tape: spectra are carried as trailing
// (real, imag) channel pairs.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xumx {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor {
 public:
  /// Rank-1 tensor with zero elements.
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Rank-2 element access.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  /// Value of a one-element tensor.
  double item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double value);

 private:
  Shape shape_;
  std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op);
void require_rank(const Tensor& t, std::size_t rank, std::string_view op);

using NodeId = std::size_t;
class Tape;
class Gradients;

/// A tensor value recorded on a tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  NodeId id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// What a backward rule sees. `input_grads[i]` is null when input i does not
/// need a gradient; rules accumulate (+=) into the non-null ones.
struct BackwardArgs {
  const Tensor& grad;
  const Tensor& output;
  std::span<const Tensor* const> inputs;
  std::span<Tensor* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is reported by backward().
  Var parameter(Tensor value);
  /// Leaf that never receives a gradient.
  Var constant(Tensor value);

  /// Appends an operation node. Inputs must already live on this tape, which
  /// keeps the node list in topological order.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(NodeId id) const;
  bool requires_grad(NodeId id) const;
  bool is_parameter(NodeId id) const;
  bool owns(const Var& v) const { return v.tape() == this && v.id() < nodes_.size(); }

 private:
  friend Gradients backward(const Tape& tape, const Var& loss);

  struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool parameter = false;
  };
  std::deque<Node> nodes_;
};

/// dLoss/dParameter for every parameter leaf of a tape.
class Gradients {
 public:
  bool contains(NodeId id) const { return grads_.contains(id); }
  const Tensor& at(NodeId id) const;
  const Tensor& operator[](const Var& v) const { return at(v.id()); }
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Tape& tape, const Var& loss);
  std::map<NodeId, Tensor> grads_;
};

/// Reverse pass from a scalar node. Each node is visited once, in reverse
/// recording order; contributions from multiple consumers are summed.
Gradients backward(const Tape& tape, const Var& loss);

using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares backward() against central differences. Returns the max over all
/// parameter entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double grad_check(const ScalarFunction& f, std::span<const Tensor> params,
                  double step = 1e-5);

// ---------------------------------------------------------------------------
// Operations. All shape checks are strict; the only broadcast is the rank-1
// bias in add_bias() and linear().

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);

/// x[R,C] + b[C], broadcast over rows.
Var add_bias(const Var& x, const Var& b);
/// a[M,K] * b[K,N].
Var matmul(const Var& a, const Var& b);
/// x[T,in] * w[out,in]^T + b[out].
Var linear(const Var& x, const Var& w, const Var& b);

Var tanh(const Var& a);
Var relu(const Var& a);

Var sum(const Var& a);
Var dot(const Var& a, const Var& b);
/// sum_i (a_i - b_i)^2
Var sum_squared_difference(const Var& a, const Var& b);
/// a.b / (|a| |b|), defined as 0 (with zero gradient) when either norm is 0.
Var cosine_similarity(const Var& a, const Var& b);

/// Elementwise mean of equally shaped values.
Var mean(std::span<const Var> values);

/// Single-layer Elman recurrence h_t = tanh(W_ih x_t + W_hh h_{t-1} + b),
/// h_{-1} = 0. x[T,in], w_ih[H,in], w_hh[H,H], b[H] -> h[T,H].
Var elman_rnn(const Var& x, const Var& w_ih, const Var& w_hh, const Var& b);

}  // namespace xumx

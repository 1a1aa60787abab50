#include "xumx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "xumx/error.hpp"

namespace xumx {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != element_count(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + to_string(t.shape()));
  }
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const {
  if (!tape_) throw Error("value() on an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (!owns(in)) throw Error("operation input is not recorded on this tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(NodeId id) const {
  if (id >= nodes_.size()) throw Error("node " + std::to_string(id) + " not on tape");
  return nodes_[id].value;
}

bool Tape::requires_grad(NodeId id) const {
  return id < nodes_.size() && nodes_[id].requires_grad;
}

bool Tape::is_parameter(NodeId id) const {
  return id < nodes_.size() && nodes_[id].parameter;
}

const Tensor& Gradients::at(NodeId id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) {
    throw Error("no gradient recorded for node " + std::to_string(id));
  }
  return it->second;
}

Gradients backward(const Tape& tape, const Var& loss) {
  if (!tape.owns(loss)) throw Error("backward: loss node is not on this tape");
  const Tensor& loss_value = tape.value(loss.id());
  if (loss_value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     to_string(loss_value.shape()));
  }

  const auto& nodes = tape.nodes_;
  std::vector<Tensor> grads(loss.id() + 1);
  std::vector<bool> has_grad(loss.id() + 1, false);
  grads[loss.id()] = Tensor(loss_value.shape(), 1.0);
  has_grad[loss.id()] = true;

  std::vector<const Tensor*> inputs;
  std::vector<Tensor*> input_grads;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const auto& node = nodes[i];
    if (!has_grad[i] || !node.requires_grad || !node.backward) continue;
    inputs.clear();
    input_grads.clear();
    for (NodeId in : node.inputs) {
      inputs.push_back(&nodes[in].value);
      if (nodes[in].requires_grad) {
        if (!has_grad[in]) {
          grads[in] = Tensor(nodes[in].value.shape(), 0.0);
          has_grad[in] = true;
        }
        input_grads.push_back(&grads[in]);
      } else {
        input_grads.push_back(nullptr);
      }
    }
    node.backward(BackwardArgs{grads[i], node.value, inputs, input_grads});
    if (!node.parameter) grads[i] = Tensor();
  }

  Gradients out;
  for (std::size_t i = 0; i <= loss.id(); ++i) {
    if (!nodes[i].parameter) continue;
    out.grads_.emplace(i, has_grad[i] ? std::move(grads[i])
                                      : Tensor(nodes[i].value.shape(), 0.0));
  }
  // Parameters recorded after the loss cannot influence it.
  for (std::size_t i = loss.id() + 1; i < nodes.size(); ++i) {
    if (nodes[i].parameter) out.grads_.emplace(i, Tensor(nodes[i].value.shape(), 0.0));
  }
  return out;
}

double grad_check(const ScalarFunction& f, std::span<const Tensor> params,
                  double step) {
  if (!(step > 0.0)) throw Error("grad_check: step must be positive");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.parameter(p));
    Var loss = f(tape, vars);
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
    Gradients g = backward(tape, loss);
    for (const Var& v : vars) analytic.push_back(g[v]);
  }

  std::vector<Tensor> probe(params.begin(), params.end());
  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : probe) vars.push_back(tape.parameter(p));
    double v = f(tape, vars).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    return v;
  };

  double worst = 0.0;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t i = 0; i < probe[p].size(); ++i) {
      const double original = probe[p][i];
      probe[p][i] = original + step;
      const double plus = evaluate();
      probe[p][i] = original - step;
      const double minus = evaluate();
      probe[p][i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double exact = analytic[p][i];
      if (!std::isfinite(exact)) throw NumericError("grad_check: non-finite gradient");
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Operations

namespace {

Tape& tape_of(const Var& a, std::string_view op) {
  if (!a.valid()) throw Error(std::string(op) + ": unbound input");
  return *a.tape();
}

Tape& common_tape(const Var& a, const Var& b, std::string_view op) {
  Tape& t = tape_of(a, op);
  if (b.tape() != &t) throw Error(std::string(op) + ": inputs live on different tapes");
  return t;
}

template <typename Fwd, typename Bwd>
Var elementwise_unary(const Var& a, std::string_view op, Fwd fwd, Bwd bwd) {
  Tape& tape = tape_of(a, op);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return tape.record(std::move(out), {a}, [bwd](const BackwardArgs& args) {
    if (!args.input_grads[0]) return;
    Tensor& gx = *args.input_grads[0];
    const Tensor& x = *args.inputs[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      gx[i] += args.grad[i] * bwd(x[i], args.output[i]);
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return tape.record(std::move(out), {a, b}, [](const BackwardArgs& args) {
    for (Tensor* g : args.input_grads) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return tape.record(std::move(out), {a, b}, [](const BackwardArgs& args) {
    if (Tensor* g = args.input_grads[0]) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.grad[i];
    }
    if (Tensor* g = args.input_grads[1]) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= args.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return tape.record(std::move(out), {a, b}, [](const BackwardArgs& args) {
    const Tensor& x = *args.inputs[0];
    const Tensor& y = *args.inputs[1];
    if (Tensor* g = args.input_grads[0]) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.grad[i] * y[i];
    }
    if (Tensor* g = args.input_grads[1]) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.grad[i] * x[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  return elementwise_unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double offset) {
  return elementwise_unary(
      a, "add_scalar", [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Var add_bias(const Var& x, const Var& b) {
  Tape& tape = common_tape(x, b, "add_bias");
  require_rank(x.value(), 2, "add_bias");
  require_rank(b.value(), 1, "add_bias");
  const std::size_t rows = x.value().dim(0), cols = x.value().dim(1);
  if (b.value().dim(0) != cols) {
    throw ShapeError("add_bias: bias length " + std::to_string(b.value().dim(0)) +
                     " does not match " + std::to_string(cols) + " columns");
  }
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += b.value()[c];
  return tape.record(std::move(out), {x, b}, [rows, cols](const BackwardArgs& args) {
    if (Tensor* g = args.input_grads[0]) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.grad[i];
    }
    if (Tensor* g = args.input_grads[1]) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*g)[c] += args.grad.at(r, c);
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b, "matmul");
  require_rank(a.value(), 2, "matmul");
  require_rank(b.value(), 2, "matmul");
  const std::size_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
  if (b.value().dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) +
                     " x " + to_string(b.shape()));
  }
  Tensor out(Shape{m, n});
  const double* A = a.value().data();
  const double* B = b.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return tape.record(std::move(out), {a, b}, [m, k, n](const BackwardArgs& args) {
    const double* G = args.grad.data();
    const double* A = args.inputs[0]->data();
    const double* B = args.inputs[1]->data();
    if (Tensor* ga = args.input_grads[0]) {
      // dA = G B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          (*ga)[i * k + p] += acc;
        }
    }
    if (Tensor* gb = args.input_grads[1]) {
      // dB = A^T G
      double* GB = gb->data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double s = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += s * G[i * n + j];
        }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  Tape& tape = common_tape(x, w, "linear");
  if (b.tape() != &tape) throw Error("linear: inputs live on different tapes");
  require_rank(x.value(), 2, "linear");
  require_rank(w.value(), 2, "linear");
  require_rank(b.value(), 1, "linear");
  const std::size_t rows = x.value().dim(0), in = x.value().dim(1);
  const std::size_t out_dim = w.value().dim(0);
  if (w.value().dim(1) != in || b.value().dim(0) != out_dim) {
    throw ShapeError("linear: input " + to_string(x.shape()) + ", weight " +
                     to_string(w.shape()) + ", bias " + to_string(b.shape()));
  }
  Tensor out(Shape{rows, out_dim});
  const double* X = x.value().data();
  const double* W = w.value().data();
  const double* B = b.value().data();
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xr = X + t * in;
    double* yr = out.data() + t * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = W + o * in;
      double acc = B[o];
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  return tape.record(
      std::move(out), {x, w, b}, [rows, in, out_dim](const BackwardArgs& args) {
        const double* G = args.grad.data();
        const double* X = args.inputs[0]->data();
        const double* W = args.inputs[1]->data();
        if (Tensor* gx = args.input_grads[0]) {
          double* GX = gx->data();
          for (std::size_t t = 0; t < rows; ++t)
            for (std::size_t o = 0; o < out_dim; ++o) {
              const double g = G[t * out_dim + o];
              if (g == 0.0) continue;
              const double* wr = W + o * in;
              double* gxr = GX + t * in;
              for (std::size_t i = 0; i < in; ++i) gxr[i] += g * wr[i];
            }
        }
        if (Tensor* gw = args.input_grads[1]) {
          double* GW = gw->data();
          for (std::size_t t = 0; t < rows; ++t)
            for (std::size_t o = 0; o < out_dim; ++o) {
              const double g = G[t * out_dim + o];
              if (g == 0.0) continue;
              const double* xr = X + t * in;
              double* gwr = GW + o * in;
              for (std::size_t i = 0; i < in; ++i) gwr[i] += g * xr[i];
            }
        }
        if (Tensor* gb = args.input_grads[2]) {
          for (std::size_t t = 0; t < rows; ++t)
            for (std::size_t o = 0; o < out_dim; ++o) (*gb)[o] += G[t * out_dim + o];
        }
      });
}

Var tanh(const Var& a) {
  return elementwise_unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return elementwise_unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
  Tape& tape = tape_of(a, "sum");
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return tape.record(Tensor::scalar(total), {a}, [](const BackwardArgs& args) {
    if (Tensor* g = args.input_grads[0]) {
      const double s = args.grad.item();
      for (double& v : g->values()) v += s;
    }
  });
}

Var dot(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b, "dot");
  require_same_shape(a.value(), b.value(), "dot");
  double total = 0.0;
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < x.size(); ++i) total += x[i] * y[i];
  return tape.record(Tensor::scalar(total), {a, b}, [](const BackwardArgs& args) {
    const double s = args.grad.item();
    const Tensor& x = *args.inputs[0];
    const Tensor& y = *args.inputs[1];
    if (Tensor* g = args.input_grads[0])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * y[i];
    if (Tensor* g = args.input_grads[1])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * x[i];
  });
}

Var sum_squared_difference(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b, "sum_squared_difference");
  require_same_shape(a.value(), b.value(), "sum_squared_difference");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    total += d * d;
  }
  return tape.record(Tensor::scalar(total), {a, b}, [](const BackwardArgs& args) {
    const double s = 2.0 * args.grad.item();
    const Tensor& x = *args.inputs[0];
    const Tensor& y = *args.inputs[1];
    if (Tensor* g = args.input_grads[0])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * (x[i] - y[i]);
    if (Tensor* g = args.input_grads[1])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= s * (x[i] - y[i]);
  });
}

Var cosine_similarity(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b, "cosine_similarity");
  require_same_shape(a.value(), b.value(), "cosine_similarity");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  const bool degenerate = xx == 0.0 || yy == 0.0;
  // sqrt(xx * yy) rather than sqrt(xx) * sqrt(yy): identical inputs then
  // give exactly 1.
  double norms = std::sqrt(xx * yy);
  if (!std::isfinite(norms) || norms == 0.0) norms = std::sqrt(xx) * std::sqrt(yy);
  const double c = degenerate ? 0.0 : std::clamp(xy / norms, -1.0, 1.0);
  return tape.record(
      Tensor::scalar(c), {a, b}, [degenerate, c, xx, yy, norms](const BackwardArgs& args) {
        if (degenerate) return;
        const double s = args.grad.item();
        const Tensor& x = *args.inputs[0];
        const Tensor& y = *args.inputs[1];
        const double inv = 1.0 / norms;
        // dc/dx = y/(|x||y|) - c x/|x|^2
        if (Tensor* g = args.input_grads[0])
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += s * (y[i] * inv - c * x[i] / xx);
        if (Tensor* g = args.input_grads[1])
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += s * (x[i] * inv - c * y[i] / yy);
      });
}

Var mean(std::span<const Var> values) {
  if (values.empty()) throw Error("mean: no inputs");
  Tape& tape = tape_of(values.front(), "mean");
  Tensor out(values.front().shape());
  for (const Var& v : values) {
    if (v.tape() != &tape) throw Error("mean: inputs live on different tapes");
    require_same_shape(out, v.value(), "mean");
    const Tensor& x = v.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
  }
  const double inv = 1.0 / static_cast<double>(values.size());
  for (double& v : out.values()) v *= inv;
  return tape.record(std::move(out), values, [inv](const BackwardArgs& args) {
    for (Tensor* g : args.input_grads) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += inv * args.grad[i];
    }
  });
}

Var elman_rnn(const Var& x, const Var& w_ih, const Var& w_hh, const Var& b) {
  Tape& tape = common_tape(x, w_ih, "elman_rnn");
  if (w_hh.tape() != &tape || b.tape() != &tape)
    throw Error("elman_rnn: inputs live on different tapes");
  require_rank(x.value(), 2, "elman_rnn");
  require_rank(w_ih.value(), 2, "elman_rnn");
  require_rank(w_hh.value(), 2, "elman_rnn");
  require_rank(b.value(), 1, "elman_rnn");
  const std::size_t steps = x.value().dim(0), in = x.value().dim(1);
  const std::size_t hidden = w_ih.value().dim(0);
  if (w_ih.value().dim(1) != in || w_hh.value().dim(0) != hidden ||
      w_hh.value().dim(1) != hidden || b.value().dim(0) != hidden) {
    throw ShapeError("elman_rnn: input " + to_string(x.shape()) + ", w_ih " +
                     to_string(w_ih.shape()) + ", w_hh " + to_string(w_hh.shape()) +
                     ", bias " + to_string(b.shape()));
  }

  Tensor h(Shape{steps, hidden});
  const double* X = x.value().data();
  const double* Wih = w_ih.value().data();
  const double* Whh = w_hh.value().data();
  const double* B = b.value().data();
  for (std::size_t t = 0; t < steps; ++t) {
    const double* xt = X + t * in;
    const double* prev = t ? h.data() + (t - 1) * hidden : nullptr;
    double* ht = h.data() + t * hidden;
    for (std::size_t o = 0; o < hidden; ++o) {
      double acc = B[o];
      const double* wr = Wih + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xt[i];
      if (prev) {
        const double* ur = Whh + o * hidden;
        for (std::size_t i = 0; i < hidden; ++i) acc += ur[i] * prev[i];
      }
      ht[o] = std::tanh(acc);
    }
  }

  return tape.record(
      std::move(h), {x, w_ih, w_hh, b}, [steps, in, hidden](const BackwardArgs& args) {
        const double* H = args.output.data();
        const double* G = args.grad.data();
        const double* X = args.inputs[0]->data();
        const double* Wih = args.inputs[1]->data();
        const double* Whh = args.inputs[2]->data();
        Tensor* gx = args.input_grads[0];
        Tensor* gwih = args.input_grads[1];
        Tensor* gwhh = args.input_grads[2];
        Tensor* gb = args.input_grads[3];

        std::vector<double> carry(hidden, 0.0), da(hidden);
        for (std::size_t t = steps; t-- > 0;) {
          const double* ht = H + t * hidden;
          for (std::size_t o = 0; o < hidden; ++o) {
            const double g = G[t * hidden + o] + carry[o];
            da[o] = g * (1.0 - ht[o] * ht[o]);
          }
          const double* xt = X + t * in;
          if (gx) {
            double* gxt = gx->data() + t * in;
            for (std::size_t o = 0; o < hidden; ++o) {
              const double* wr = Wih + o * in;
              for (std::size_t i = 0; i < in; ++i) gxt[i] += da[o] * wr[i];
            }
          }
          if (gwih) {
            for (std::size_t o = 0; o < hidden; ++o) {
              double* gr = gwih->data() + o * in;
              for (std::size_t i = 0; i < in; ++i) gr[i] += da[o] * xt[i];
            }
          }
          if (gb) {
            for (std::size_t o = 0; o < hidden; ++o) (*gb)[o] += da[o];
          }
          std::fill(carry.begin(), carry.end(), 0.0);
          if (t > 0) {
            const double* prev = H + (t - 1) * hidden;
            for (std::size_t o = 0; o < hidden; ++o) {
              const double* ur = Whh + o * hidden;
              for (std::size_t i = 0; i < hidden; ++i) carry[i] += da[o] * ur[i];
              if (gwhh) {
                double* gr = gwhh->data() + o * hidden;
                for (std::size_t i = 0; i < hidden; ++i) gr[i] += da[o] * prev[i];
              }
            }
          }
        }
      });
}

}  // namespace xumx

/*
 * Copyright 2026 The modfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MODFEAT_NUMERICS_TAPE_HPP
#define MODFEAT_NUMERICS_TAPE_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "modfeat/errors.hpp"
#include "modfeat/numerics/array2.hpp"
#include "modfeat/numerics/random.hpp"

namespace modfeat {

/// A learnable (or frozen) array that lives across steps. Gradients from every
/// backward sweep are added into `grad` until `zero_grad` is called.
struct Parameter {
  std::string name;
  Array2 value;
  Array2 grad;
  bool learnable = true;

  Parameter() = default;
  Parameter(std::string n, Array2 v, bool is_learnable = true)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), learnable(is_learnable) {}

  void zero_grad() { grad = Array2(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Array2& value() const;
  const Array2& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

enum class GradMode { enabled, disabled };

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
/// so a reverse index sweep is a reverse topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(GradMode mode = GradMode::enabled) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return mode_ == GradMode::enabled; }

  Var constant(Array2 value) { return push(std::move(value), false, {}, nullptr); }

  /// Leaf bound to a parameter. Frozen parameters and no-grad tapes yield constants.
  Var leaf(Parameter& p) {
    const bool track = grad_enabled() && p.learnable;
    Var v = push(p.value, track, {}, nullptr);
    if (track) nodes_[v.id].param = &p;
    return v;
  }

  /// Appends an op result. `backward` runs only if some input requires a gradient.
  Var push(Array2 value, bool requires_grad, std::vector<std::size_t> parents, BackwardFn backward) {
    if (!value.all_finite()) throw Error("non-finite value produced on tape");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Array2& value(std::size_t id) const { return nodes_[id].value; }
  const Array2& grad(std::size_t id) const { return nodes_[id].grad; }

  /// Gradient buffer of a node, allocated on first use.
  Array2& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size() || n.grad.rows() != n.value.rows())
      n.grad = Array2(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Reverse sweep from a 1x1 node; accumulates into bound parameters.
  void backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: node belongs to another tape");
    const Array2& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward: loss must be 1x1, got " + lv.shape_string());
    }
    for (auto& n : nodes_) n.grad = Array2();
    if (!nodes_[loss.id].requires_grad) return;
    grad_buffer(loss.id)(0, 0) = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Array2 value;
    Array2 grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  GradMode mode_;
  std::vector<Node> nodes_;
};

inline const Array2& Var::value() const { return tape->value(id); }
inline const Array2& Var::grad() const { return tape->grad(id); }

namespace detail {

inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
  return *a.tape;
}

inline void add_into(Array2& dst, const Array2& src) { dst += src; }

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  Array2 out = matmul_values(a.value(), b.value());
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    if (tp.requires_grad(ai)) tp.grad_buffer(ai) += matmul_values(g, transpose(tp.value(bi)));
    if (tp.requires_grad(bi)) tp.grad_buffer(bi) += matmul_values(transpose(tp.value(ai)), g);
  });
}

enum class ElementwiseOp { add, sub, mul, scale, exp, relu };

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  a.value().require_same_shape(b.value(), "add");
  Array2 out = a.value();
  out += b.value();
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    if (tp.requires_grad(ai)) tp.grad_buffer(ai) += g;
    if (tp.requires_grad(bi)) tp.grad_buffer(bi) += g;
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  a.value().require_same_shape(b.value(), "sub");
  Array2 out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    if (tp.requires_grad(ai)) tp.grad_buffer(ai) += g;
    if (tp.requires_grad(bi)) {
      Array2& gb = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Hadamard product.
inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  a.value().require_same_shape(b.value(), "mul");
  Array2 out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    if (tp.requires_grad(ai)) {
      Array2& ga = tp.grad_buffer(ai);
      const Array2& bv = tp.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(bi)) {
      Array2& gb = tp.grad_buffer(bi);
      const Array2& av = tp.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Array2 out = a.value();
  for (auto& v : out.data()) v *= c;
  return t.push(std::move(out), t.requires_grad(a.id), {a.id}, [ai = a.id, c](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    Array2& ga = tp.grad_buffer(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

inline Var exp(Var a) {
  Tape& t = *a.tape;
  Array2 out = a.value();
  for (auto& v : out.data()) v = std::exp(v);
  return t.push(std::move(out), t.requires_grad(a.id), {a.id}, [ai = a.id](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    const Array2& y = tp.value(self);
    Array2& ga = tp.grad_buffer(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

inline Var relu(Var a) {
  Tape& t = *a.tape;
  Array2 out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return t.push(std::move(out), t.requires_grad(a.id), {a.id}, [ai = a.id](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    const Array2& x = tp.value(ai);
    Array2& ga = tp.grad_buffer(ai);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

/// Dispatch by op kind. `b` is ignored by unary ops; `constant` is used by scale.
/// Rescales each row to norm `scale`. Rows with norm below `eps` are
/// divided by eps instead (and differentiated as a plain scaling).
inline Var row_normalize(Var a, double scale, double eps = 1e-12) {
  Tape& t = *a.tape;
  const Array2& x = a.value();
  Array2 out(x.rows(), x.cols());
  std::vector<double> norms(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double ss = 0.0;
    for (double v : x.row(r)) ss += v * v;
    norms[r] = std::max(std::sqrt(ss), eps);
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = scale * x(r, c) / norms[r];
  }
  return t.push(std::move(out), t.requires_grad(a.id), {a.id},
                [ai = a.id, scale, eps, norms = std::move(norms)](Tape& tp, std::size_t self) {
                  const Array2& g = tp.grad(self);
                  const Array2& x = tp.value(ai);
                  Array2& ga = tp.grad_buffer(ai);
                  for (std::size_t r = 0; r < x.rows(); ++r) {
                    const double n = norms[r];
                    double xg = 0.0;
                    if (n > eps)
                      for (std::size_t c = 0; c < x.cols(); ++c) xg += x(r, c) * g(r, c);
                    for (std::size_t c = 0; c < x.cols(); ++c)
                      ga(r, c) += scale * (g(r, c) / n - x(r, c) * xg / (n * n * n));
                  }
                });
}

inline Var elementwise(ElementwiseOp op, Var a, Var b = {}, double constant = 1.0) {
  switch (op) {
    case ElementwiseOp::add: return add(a, b);
    case ElementwiseOp::sub: return sub(a, b);
    case ElementwiseOp::mul: return mul(a, b);
    case ElementwiseOp::scale: return scale(a, constant);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::relu: return relu(a);
  }
  throw ParameterError("unknown elementwise op");
}

/// a (n x m) + row (1 x m) broadcast over rows.
inline Var add_row(Var a, Var row) {
  Tape& t = detail::same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: " + a.value().shape_string() + " + " + row.value().shape_string());
  }
  Array2 out = a.value();
  const Array2& r = row.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += r(0, j);
  const bool rg = t.requires_grad(a.id) || t.requires_grad(row.id);
  return t.push(std::move(out), rg, {a.id, row.id}, [ai = a.id, ri = row.id](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    if (tp.requires_grad(ai)) tp.grad_buffer(ai) += g;
    if (tp.requires_grad(ri)) {
      Array2& gr = tp.grad_buffer(ri);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
    }
  });
}

inline Var row_log_softmax(Var a) {
  Tape& t = *a.tape;
  Array2 out = row_log_softmax_values(a.value());
  return t.push(std::move(out), t.requires_grad(a.id), {a.id}, [ai = a.id](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    const Array2& y = tp.value(self);
    Array2& ga = tp.grad_buffer(ai);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) gs += g(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) - std::exp(y(i, j)) * gs;
    }
  });
}

/// Multiplies by a fixed mask (no gradient to the mask).
inline Var apply_mask(Var a, const Array2& mask) {
  a.value().require_same_shape(mask, "apply_mask");
  Var m = a.tape->constant(mask);
  return mul(a, m);
}

/// Inverted dropout; identity when disabled.
inline Var dropout(Var a, double p, Rng& rng, bool enabled) {
  check_dropout_p(p);
  if (!enabled) return a;
  return apply_mask(a, make_dropout_mask(a.rows(), a.cols(), p, rng));
}

/// Row b*times + j of the result is row b of `a`.
inline Var repeat_rows(Var a, std::size_t times) {
  Tape& t = *a.tape;
  const Array2& av = a.value();
  Array2 out(av.rows() * times, av.cols());
  for (std::size_t b = 0; b < av.rows(); ++b)
    for (std::size_t j = 0; j < times; ++j) std::copy(av.row(b).begin(), av.row(b).end(), out.row(b * times + j).begin());
  return t.push(std::move(out), t.requires_grad(a.id), {a.id}, [ai = a.id, times](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    Array2& ga = tp.grad_buffer(ai);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto dst = ga.row(r / times);
      auto src = g.row(r);
      for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
    }
  });
}

/// Stacks `times` copies of `a` vertically.
inline Var tile_rows(Var a, std::size_t times) {
  Tape& t = *a.tape;
  const Array2& av = a.value();
  Array2 out(av.rows() * times, av.cols());
  for (std::size_t k = 0; k < times; ++k)
    std::copy(av.data().begin(), av.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(k * av.size()));
  return t.push(std::move(out), t.requires_grad(a.id), {a.id}, [ai = a.id](Tape& tp, std::size_t self) {
    const Array2& g = tp.grad(self);
    Array2& ga = tp.grad_buffer(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i % ga.size()] += g[i];
  });
}

struct Index2 {
  std::size_t row;
  std::size_t col;
};

/// Collects a(row, col) for each index into an n x 1 column.
inline Var gather(Var a, std::vector<Index2> idx) {
  Tape& t = *a.tape;
  const Array2& av = a.value();
  Array2 out(idx.size(), 1);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i].row >= av.rows() || idx[i].col >= av.cols()) throw DimensionError("gather: index out of range");
    out(i, 0) = av(idx[i].row, idx[i].col);
  }
  return t.push(std::move(out), t.requires_grad(a.id), {a.id},
                [ai = a.id, idx = std::move(idx)](Tape& tp, std::size_t self) {
                  const Array2& g = tp.grad(self);
                  Array2& ga = tp.grad_buffer(ai);
                  for (std::size_t i = 0; i < idx.size(); ++i) ga(idx[i].row, idx[i].col) += g(i, 0);
                });
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  Array2 out(1, 1, a.value().sum());
  return t.push(std::move(out), t.requires_grad(a.id), {a.id}, [ai = a.id](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)(0, 0);
    for (auto& v : tp.grad_buffer(ai).data()) v += g;
  });
}

/// Per-column maximum (1 x cols). Gradient flows to the first maximal entry.
inline Var col_max(Var a) {
  Tape& t = *a.tape;
  const Array2& av = a.value();
  if (av.rows() == 0) throw DimensionError("col_max: empty input");
  Array2 out(1, av.cols());
  std::vector<std::size_t> arg(av.cols(), 0);
  for (std::size_t j = 0; j < av.cols(); ++j) {
    out(0, j) = av(0, j);
    for (std::size_t i = 1; i < av.rows(); ++i)
      if (av(i, j) > out(0, j)) {
        out(0, j) = av(i, j);
        arg[j] = i;
      }
  }
  return t.push(std::move(out), t.requires_grad(a.id), {a.id},
                [ai = a.id, arg = std::move(arg)](Tape& tp, std::size_t self) {
                  const Array2& g = tp.grad(self);
                  Array2& ga = tp.grad_buffer(ai);
                  for (std::size_t j = 0; j < arg.size(); ++j) ga(arg[j], j) += g(0, j);
                });
}

/// Same value, no gradient path.
inline Var detach(Var a) { return a.tape->constant(a.value()); }

}  // namespace modfeat

#endif  // MODFEAT_NUMERICS_TAPE_HPP

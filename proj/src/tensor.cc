// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "molstack/error.h"

namespace molstack {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  fail(ErrorCode::kShapeMismatch,
       op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_2d(const std::string& op, const Tensor& t) {
  if (t.rank() != 2) {
    fail(ErrorCode::kShapeMismatch, op + ": expected a 2-D tensor, got " +
                                        shape_string(t.shape));
  }
}

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

// Size of b's repeating block in a, or throws.
std::size_t broadcast_period(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape == b.shape) return a.size();
  Shape trailing = b.shape;
  while (trailing.size() > 1 && trailing.front() == 1) trailing.erase(trailing.begin());
  if (trailing.size() > a.shape.size() || b.size() == 0 || a.size() % b.size() != 0) {
    shape_error(op, a.shape, b.shape);
  }
  if (!(trailing.size() == 1 && trailing[0] == 1)) {
    if (!std::equal(trailing.rbegin(), trailing.rend(), a.shape.rbegin())) {
      shape_error(op, a.shape, b.shape);
    }
  }
  return b.size();
}

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double pdf(double x) {
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(product(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != product(shape)) {
    fail(ErrorCode::kShapeMismatch, "tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_string(shape));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (size() != 1) {
    fail(ErrorCode::kNotScalar, "item() on tensor of shape " + shape_string(shape));
  }
  return data[0];
}

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape() != this) {
      fail(ErrorCode::kInvalidArgument, "operand recorded on a different tape");
    }
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor(node.value.shape);
  return Tensor(node.value.shape, node.grad);
}

void Tape::accumulate(Var v, std::span<const double> g) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}

void Tape::accumulate(Var v, std::size_t index, double g) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  node.grad[index] += g;
}

void Tape::backward(Var scalar) {
  const std::size_t root = scalar.id();
  if (nodes_[root].value.size() != 1) {
    fail(ErrorCode::kNotScalar, "backward() needs a one-element tensor, got " +
                                    shape_string(nodes_[root].value.shape));
  }
  for (Node& node : nodes_) node.grad.clear();
  std::vector<char> reachable(root + 1, 0);
  reachable[root] = 1;
  for (std::size_t id = root + 1; id-- > 0;) {
    if (!reachable[id]) continue;
    for (std::size_t p : nodes_[id].parents) reachable[p] = 1;
  }
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad.assign(1, 1.0);
  for (std::size_t id = root + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!reachable[id] || !node.backward || node.grad.empty()) continue;
    // Copy: the callback may accumulate into other nodes of this vector.
    const std::vector<double> g = node.grad;
    node.backward(*this, g);
  }
}

Var matmul(Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require_2d("matmul", ta);
  require_2d("matmul", tb);
  if (ta.cols() != tb.rows()) shape_error("matmul", ta.shape, tb.shape);
  Tensor out({ta.rows(), tb.cols()});
  MutMap(out.data.data(), ta.rows(), tb.cols()).noalias() = as_matrix(ta) * as_matrix(tb);
  const Var parents[] = {a, b};
  return a.tape()->record(std::move(out), parents,
                          [a, b](Tape& tape, const std::vector<double>& g) {
                            const Tensor& ta = a.value();
                            const Tensor& tb = b.value();
                            ConstMap gm(g.data(), ta.rows(), tb.cols());
                            if (tape.requires_grad(a)) {
                              RowMatrix ga = gm * as_matrix(tb).transpose();
                              tape.accumulate(a, std::span<const double>(ga.data(), ga.size()));
                            }
                            if (tape.requires_grad(b)) {
                              RowMatrix gb = as_matrix(ta).transpose() * gm;
                              tape.accumulate(b, std::span<const double>(gb.data(), gb.size()));
                            }
                          });
}

Var transpose(Var a) {
  const Tensor& ta = a.value();
  require_2d("transpose", ta);
  Tensor out({ta.cols(), ta.rows()});
  for (std::size_t r = 0; r < ta.rows(); ++r)
    for (std::size_t c = 0; c < ta.cols(); ++c) out(c, r) = ta(r, c);
  const Var parents[] = {a};
  return a.tape()->record(std::move(out), parents,
                          [a](Tape& tape, const std::vector<double>& g) {
                            const Tensor& ta = a.value();
                            std::vector<double> ga(ta.size());
                            for (std::size_t r = 0; r < ta.rows(); ++r)
                              for (std::size_t c = 0; c < ta.cols(); ++c)
                                ga[r * ta.cols() + c] = g[c * ta.rows() + r];
                            tape.accumulate(a, ga);
                          });
}

namespace {

enum class Binary { kAdd, kSub, kMul };

Var binary(Binary kind, const char* name, Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  const std::size_t period = broadcast_period(name, ta, tb);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const double x = ta.data[i];
    const double y = tb.data[i % period];
    out.data[i] = kind == Binary::kAdd ? x + y : kind == Binary::kSub ? x - y : x * y;
  }
  const Var parents[] = {a, b};
  return a.tape()->record(
      std::move(out), parents,
      [kind, a, b, period](Tape& tape, const std::vector<double>& g) {
        const Tensor& ta = a.value();
        const Tensor& tb = b.value();
        if (tape.requires_grad(a)) {
          if (kind == Binary::kMul) {
            std::vector<double> ga(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * tb.data[i % period];
            tape.accumulate(a, ga);
          } else {
            tape.accumulate(a, g);
          }
        }
        if (tape.requires_grad(b)) {
          std::vector<double> gb(tb.size(), 0.0);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double d = kind == Binary::kAdd   ? g[i]
                             : kind == Binary::kSub ? -g[i]
                                                    : g[i] * ta.data[i];
            gb[i % period] += d;
          }
          tape.accumulate(b, gb);
        }
      });
}

}  // namespace

Var add(Var a, Var b) { return binary(Binary::kAdd, "add", a, b); }
Var sub(Var a, Var b) { return binary(Binary::kSub, "sub", a, b); }
Var mul(Var a, Var b) { return binary(Binary::kMul, "mul", a, b); }

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& x : out.data) x *= factor;
  const Var parents[] = {a};
  return a.tape()->record(std::move(out), parents,
                          [a, factor](Tape& tape, const std::vector<double>& g) {
                            std::vector<double> ga(g);
                            for (double& x : ga) x *= factor;
                            tape.accumulate(a, ga);
                          });
}

Var add_scalar(Var a, double value) {
  Tensor out = a.value();
  for (double& x : out.data) x += value;
  const Var parents[] = {a};
  return a.tape()->record(std::move(out), parents,
                          [a](Tape& tape, const std::vector<double>& g) {
                            tape.accumulate(a, g);
                          });
}

Var reshape(Var a, Shape shape) {
  Tensor out(std::move(shape), a.value().data);
  const Var parents[] = {a};
  return a.tape()->record(std::move(out), parents,
                          [a](Tape& tape, const std::vector<double>& g) {
                            tape.accumulate(a, g);
                          });
}

Var sum(Var a) {
  const Tensor& ta = a.value();
  double total = 0.0;
  for (double x : ta.data) total += x;
  const Var parents[] = {a};
  return a.tape()->record(Tensor::scalar(total), parents,
                          [a](Tape& tape, const std::vector<double>& g) {
                            std::vector<double> ga(a.size(), g[0]);
                            tape.accumulate(a, ga);
                          });
}

Var sum(Var a, int axis) {
  const Tensor& ta = a.value();
  require_2d("sum", ta);
  if (axis != 0 && axis != 1) fail(ErrorCode::kInvalidArgument, "sum: axis must be 0 or 1");
  const std::size_t rows = ta.rows();
  const std::size_t cols = ta.cols();
  Tensor out({axis == 0 ? cols : rows});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.data[axis == 0 ? c : r] += ta(r, c);
  const Var parents[] = {a};
  return a.tape()->record(std::move(out), parents,
                          [a, axis, rows, cols](Tape& tape, const std::vector<double>& g) {
                            std::vector<double> ga(rows * cols);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c)
                                ga[r * cols + c] = g[axis == 0 ? c : r];
                            tape.accumulate(a, ga);
                          });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var mean(Var a, int axis) {
  const std::size_t n = axis == 0 ? a.value().rows() : a.value().cols();
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Var softmax_lastdim(Var x, const Tensor* additive_mask) {
  const Tensor& tx = x.value();
  if (additive_mask && additive_mask->shape != tx.shape) {
    shape_error("softmax_lastdim", tx.shape, additive_mask->shape);
  }
  const std::size_t cols = tx.cols();
  const std::size_t rows = cols == 0 ? 0 : tx.size() / cols;
  Tensor out(tx.shape);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> z(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = kNegInf;
    for (std::size_t c = 0; c < cols; ++c) {
      z[c] = tx.data[r * cols + c] + (additive_mask ? additive_mask->data[r * cols + c] : 0.0);
      m = std::max(m, z[c]);
    }
    if (m == kNegInf) continue;  // fully masked row stays zero
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      z[c] = std::exp(z[c] - m);
      denom += z[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = z[c] / denom;
  }
  const Var parents[] = {x};
  Tape* tape = x.tape();
  const std::size_t self = tape->size();
  return tape->record(std::move(out), parents,
                      [x, self, rows, cols](Tape& tape, const std::vector<double>& g) {
                        const Tensor& y = tape.value(Var(&tape, self));
                        std::vector<double> gx(rows * cols);
                        for (std::size_t r = 0; r < rows; ++r) {
                          double dot = 0.0;
                          for (std::size_t c = 0; c < cols; ++c)
                            dot += g[r * cols + c] * y.data[r * cols + c];
                          for (std::size_t c = 0; c < cols; ++c) {
                            const std::size_t i = r * cols + c;
                            gx[i] = y.data[i] * (g[i] - dot);
                          }
                        }
                        tape.accumulate(x, gx);
                      });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data) v = v * phi(v);
  const Var parents[] = {x};
  return x.tape()->record(std::move(out), parents,
                          [x](Tape& tape, const std::vector<double>& g) {
                            const Tensor& tx = x.value();
                            std::vector<double> gx(g.size());
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              const double v = tx.data[i];
                              gx[i] = g[i] * (phi(v) + v * pdf(v));
                            }
                            tape.accumulate(x, gx);
                          });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& tx = x.value();
  const std::size_t cols = tx.cols();
  if (gain.size() != cols || bias.size() != cols) {
    shape_error("layer_norm", tx.shape, gain.shape());
  }
  const std::size_t rows = tx.size() / cols;
  std::vector<double> xhat(tx.size());
  std::vector<double> inv_std(rows);
  Tensor out(tx.shape);
  const Tensor& tg = gain.value();
  const Tensor& tb = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += tx.data[r * cols + c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = tx.data[r * cols + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      xhat[i] = (tx.data[i] - mu) * inv_std[r];
      out.data[i] = xhat[i] * tg.data[c] + tb.data[c];
    }
  }
  const Var parents[] = {x, gain, bias};
  return x.tape()->record(
      std::move(out), parents,
      [x, gain, bias, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& tape, const std::vector<double>& g) {
        const Tensor& tg = gain.value();
        if (tape.requires_grad(gain) || tape.requires_grad(bias)) {
          std::vector<double> gg(cols, 0.0), gb(cols, 0.0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
              gg[c] += g[r * cols + c] * xhat[r * cols + c];
              gb[c] += g[r * cols + c];
            }
          tape.accumulate(gain, gg);
          tape.accumulate(bias, gb);
        }
        if (tape.requires_grad(x)) {
          std::vector<double> gx(rows * cols);
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = g[r * cols + c] * tg.data[c];
              sum_d += d;
              sum_dx += d * xhat[r * cols + c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t i = r * cols + c;
              const double d = g[i] * tg.data[c];
              gx[i] = inv_std[r] * (d - sum_d / n - xhat[i] * sum_dx / n);
            }
          }
          tape.accumulate(x, gx);
        }
      });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
  const Tensor& tx = x.value();
  require_2d("slice_cols", tx);
  if (start + count > tx.cols()) {
    fail(ErrorCode::kShapeMismatch, "slice_cols: range exceeds " + shape_string(tx.shape));
  }
  const std::size_t rows = tx.rows();
  const std::size_t cols = tx.cols();
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = tx(r, start + c);
  const Var parents[] = {x};
  return x.tape()->record(std::move(out), parents,
                          [x, start, count, rows, cols](Tape& tape, const std::vector<double>& g) {
                            std::vector<double> gx(rows * cols, 0.0);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < count; ++c)
                                gx[r * cols + start + c] = g[r * count + c];
                            tape.accumulate(x, gx);
                          });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorCode::kInvalidArgument, "concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_2d("concat_cols", p.value());
    if (p.rows() != rows) shape_error("concat_cols", parts[0].shape(), p.shape());
    total += p.cols();
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& tp = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < tp.cols(); ++c) out(r, offset + c) = tp(r, c);
    offset += tp.cols();
  }
  std::vector<Var> copy(parts.begin(), parts.end());
  return parts[0].tape()->record(
      std::move(out), parts, [copy, rows, total](Tape& tape, const std::vector<double>& g) {
        std::size_t offset = 0;
        for (const Var& p : copy) {
          const std::size_t cols = p.cols();
          if (tape.requires_grad(p)) {
            std::vector<double> gp(rows * cols);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < cols; ++c) gp[r * cols + c] = g[r * total + offset + c];
            tape.accumulate(p, gp);
          }
          offset += cols;
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorCode::kInvalidArgument, "concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts[0].shape(), p.shape());
    rows += p.size() / cols;
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + offset);
    offset += p.size();
  }
  std::vector<Var> copy(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts,
                                 [copy](Tape& tape, const std::vector<double>& g) {
                                   std::size_t offset = 0;
                                   for (const Var& p : copy) {
                                     tape.accumulate(p, std::span<const double>(
                                                            g.data() + offset, p.size()));
                                     offset += p.size();
                                   }
                                 });
}

Var gather_rows(Var x, std::span<const std::size_t> indices) {
  const Tensor& tx = x.value();
  require_2d("gather_rows", tx);
  const std::size_t cols = tx.cols();
  Tensor out({indices.size(), cols});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= tx.rows()) {
      fail(ErrorCode::kShapeMismatch, "gather_rows: index " + std::to_string(indices[k]) +
                                          " out of range for " + shape_string(tx.shape));
    }
    std::copy_n(tx.data.begin() + indices[k] * cols, cols, out.data.begin() + k * cols);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const Var parents[] = {x};
  return x.tape()->record(std::move(out), parents,
                          [x, idx = std::move(idx), cols](Tape& tape, const std::vector<double>& g) {
                            std::vector<double> gx(x.size(), 0.0);
                            for (std::size_t k = 0; k < idx.size(); ++k)
                              for (std::size_t c = 0; c < cols; ++c)
                                gx[idx[k] * cols + c] += g[k * cols + c];
                            tape.accumulate(x, gx);
                          });
}

Var scatter_matrix(Var values,
                   std::span<const std::pair<std::size_t, std::size_t>> positions,
                   std::size_t rows, std::size_t cols) {
  const Tensor& tv = values.value();
  if (tv.size() != positions.size()) {
    fail(ErrorCode::kShapeMismatch, "scatter_matrix: values/positions length mismatch");
  }
  Tensor out({rows, cols});
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const auto [r, c] = positions[k];
    if (r >= rows || c >= cols) fail(ErrorCode::kShapeMismatch, "scatter_matrix: out of range");
    out(r, c) += tv.data[k];
  }
  std::vector<std::pair<std::size_t, std::size_t>> pos(positions.begin(), positions.end());
  const Var parents[] = {values};
  return values.tape()->record(
      std::move(out), parents,
      [values, pos = std::move(pos), cols](Tape& tape, const std::vector<double>& g) {
        std::vector<double> gv(pos.size());
        for (std::size_t k = 0; k < pos.size(); ++k) gv[k] = g[pos[k].first * cols + pos[k].second];
        tape.accumulate(values, gv);
      });
}

Var embed_block(Var x, std::size_t rows, std::size_t cols, std::size_t row,
                std::size_t col) {
  const Tensor& tx = x.value();
  require_2d("embed_block", tx);
  if (row + tx.rows() > rows || col + tx.cols() > cols) {
    fail(ErrorCode::kShapeMismatch, "embed_block: block does not fit");
  }
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < tx.rows(); ++r)
    for (std::size_t c = 0; c < tx.cols(); ++c) out(row + r, col + c) = tx(r, c);
  const Var parents[] = {x};
  return x.tape()->record(std::move(out), parents,
                          [x, cols, row, col](Tape& tape, const std::vector<double>& g) {
                            const Tensor& tx = x.value();
                            std::vector<double> gx(tx.size());
                            for (std::size_t r = 0; r < tx.rows(); ++r)
                              for (std::size_t c = 0; c < tx.cols(); ++c)
                                gx[r * tx.cols() + c] = g[(row + r) * cols + col + c];
                            tape.accumulate(x, gx);
                          });
}

Var embedding_bag(std::span<const Var> tables,
                  const std::vector<std::vector<Lookup>>& lookups) {
  if (tables.empty()) fail(ErrorCode::kInvalidArgument, "embedding_bag: no tables");
  const std::size_t width = tables[0].cols();
  for (const Var& t : tables) {
    require_2d("embedding_bag", t.value());
    if (t.cols() != width) shape_error("embedding_bag", tables[0].shape(), t.shape());
  }
  Tensor out({lookups.size(), width});
  for (std::size_t tok = 0; tok < lookups.size(); ++tok) {
    for (const Lookup& l : lookups[tok]) {
      if (l.table >= tables.size() || l.row >= tables[l.table].rows()) {
        fail(ErrorCode::kShapeMismatch, "embedding_bag: lookup out of range");
      }
      const Tensor& t = tables[l.table].value();
      for (std::size_t c = 0; c < width; ++c) out(tok, c) += t(l.row, c);
    }
  }
  std::vector<Var> copy(tables.begin(), tables.end());
  return tables[0].tape()->record(
      std::move(out), tables, [copy, lookups, width](Tape& tape, const std::vector<double>& g) {
        std::vector<std::vector<double>> grads(copy.size());
        for (std::size_t tok = 0; tok < lookups.size(); ++tok) {
          for (const Lookup& l : lookups[tok]) {
            auto& gt = grads[l.table];
            if (gt.empty()) gt.assign(copy[l.table].size(), 0.0);
            for (std::size_t c = 0; c < width; ++c) gt[l.row * width + c] += g[tok * width + c];
          }
        }
        for (std::size_t t = 0; t < copy.size(); ++t)
          if (!grads[t].empty()) tape.accumulate(copy[t], grads[t]);
      });
}

namespace {

void require_same(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

}  // namespace

Var l1_loss(Var pred, Var target) {
  require_same("l1_loss", pred, target);
  const Tensor& p = pred.value();
  const Tensor& t = target.value();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p.data[i] - t.data[i]);
  const double n = static_cast<double>(p.size());
  const Var parents[] = {pred, target};
  return pred.tape()->record(
      Tensor::scalar(total / n), parents,
      [pred, target, n](Tape& tape, const std::vector<double>& g) {
        const Tensor& p = pred.value();
        const Tensor& t = target.value();
        std::vector<double> gp(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double d = p.data[i] - t.data[i];
          gp[i] = g[0] * (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / n;
        }
        tape.accumulate(pred, gp);
        for (double& x : gp) x = -x;
        tape.accumulate(target, gp);
      });
}

Var mse_loss(Var pred, Var target) {
  require_same("mse_loss", pred, target);
  const Tensor& p = pred.value();
  const Tensor& t = target.value();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.data[i] - t.data[i];
    total += d * d;
  }
  const double n = static_cast<double>(p.size());
  const Var parents[] = {pred, target};
  return pred.tape()->record(
      Tensor::scalar(total / n), parents,
      [pred, target, n](Tape& tape, const std::vector<double>& g) {
        const Tensor& p = pred.value();
        const Tensor& t = target.value();
        std::vector<double> gp(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] = g[0] * 2.0 * (p.data[i] - t.data[i]) / n;
        tape.accumulate(pred, gp);
        for (double& x : gp) x = -x;
        tape.accumulate(target, gp);
      });
}

Var bce_with_logits_loss(Var logits, Var target) {
  require_same("bce_with_logits_loss", logits, target);
  const Tensor& x = logits.value();
  const Tensor& t = target.value();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data[i];
    total += std::max(v, 0.0) - v * t.data[i] + std::log1p(std::exp(-std::abs(v)));
  }
  const double n = static_cast<double>(x.size());
  const Var parents[] = {logits, target};
  return logits.tape()->record(
      Tensor::scalar(total / n), parents,
      [logits, target, n](Tape& tape, const std::vector<double>& g) {
        const Tensor& x = logits.value();
        const Tensor& t = target.value();
        std::vector<double> gx(x.size()), gt(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double v = x.data[i];
          const double sig = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                    : std::exp(v) / (1.0 + std::exp(v));
          gx[i] = g[0] * (sig - t.data[i]) / n;
          gt[i] = -g[0] * v / n;
        }
        tape.accumulate(logits, gx);
        tape.accumulate(target, gt);
      });
}

Var cosine_similarity_loss(Var pred, Var target) {
  require_same("cosine_similarity_loss", pred, target);
  const Tensor& p = pred.value();
  const Tensor& t = target.value();
  const std::size_t cols = p.cols();
  const std::size_t rows = cols == 0 ? 0 : p.size() / cols;
  if (rows == 0) fail(ErrorCode::kShapeMismatch, "cosine_similarity_loss: empty input");
  std::vector<double> np(rows), nt(rows), cosv(rows);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double pp = 0.0, tt = 0.0, pt = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double a = p.data[r * cols + c];
      const double b = t.data[r * cols + c];
      pp += a * a;
      tt += b * b;
      pt += a * b;
    }
    if (pp == 0.0 || tt == 0.0) {
      fail(ErrorCode::kDegenerateVector,
           "cosine_similarity_loss: zero-norm row " + std::to_string(r));
    }
    np[r] = std::sqrt(pp);
    nt[r] = std::sqrt(tt);
    cosv[r] = pt / (np[r] * nt[r]);
    total += 1.0 - cosv[r];
  }
  const double n = static_cast<double>(rows);
  const Var parents[] = {pred, target};
  return pred.tape()->record(
      Tensor::scalar(total / n), parents,
      [pred, target, rows, cols, n, np = std::move(np), nt = std::move(nt),
       cosv = std::move(cosv)](Tape& tape, const std::vector<double>& g) {
        const Tensor& p = pred.value();
        const Tensor& t = target.value();
        std::vector<double> gp(p.size()), gt(p.size());
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            // d(1 - cos)/dp = -(t / (|p||t|) - cos * p / |p|^2)
            gp[i] = -g[0] / n * (t.data[i] / (np[r] * nt[r]) - cosv[r] * p.data[i] / (np[r] * np[r]));
            gt[i] = -g[0] / n * (p.data[i] / (np[r] * nt[r]) - cosv[r] * t.data[i] / (nt[r] * nt[r]));
          }
        }
        tape.accumulate(pred, gp);
        tape.accumulate(target, gt);
      });
}

}  // namespace molstack

// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// Dense 64-bit tensors and a tape for reverse-mode differentiation.
//
// Values are plain `Tensor`s. Differentiable computation happens on a
// `Tape`: leaves and constants are registered on it, every op appends a
// node, and `Tape::backward` sweeps the nodes in reverse creation order.
// A tape is confined to one thread; separate tapes are independent.

#ifndef MOLSTACK_TENSOR_H_
#define MOLSTACK_TENSOR_H_

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace molstack {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double item() const;

  bool operator==(const Tensor&) const = default;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the gradient of the loss w.r.t. this node's output.
  using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  // Gradient after backward(); zeros if the node was not reached.
  Tensor grad(Var v) const;

  // Accumulates into the gradient buffer of `v`; no-op for constants.
  void accumulate(Var v, std::span<const double> g);
  void accumulate(Var v, std::size_t index, double g);

  // Reverse sweep from a one-element node. Gradients from an earlier call
  // are discarded first.
  void backward(Var scalar);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  // A deque keeps value() references valid while the tape grows.
  std::deque<Node> nodes_;
};

// Ops. Binary elementwise ops accept either equal shapes or a right operand
// whose shape (leading 1s ignored) matches the trailing dims of the left
// operand, in which case it is broadcast over the leading dims.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var reshape(Var a, Shape shape);

Var sum(Var a);             // -> [1]
Var sum(Var a, int axis);   // 2-D only; axis 0 -> [cols], axis 1 -> [rows]
Var mean(Var a);
Var mean(Var a, int axis);

// Row-wise softmax over the last dimension. The optional additive mask has
// the same shape as `x` and is added before normalization; -inf entries are
// supported and a row that is entirely -inf yields all zeros.
Var softmax_lastdim(Var x, const Tensor* additive_mask = nullptr);

// Exact x * Phi(x).
Var gelu(Var x);
// Normalizes over the last dimension with biased variance, then applies
// gain and bias (both of length cols).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var slice_cols(Var x, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
// out[k] = x[indices[k]]; gradients scatter-add back.
Var gather_rows(Var x, std::span<const std::size_t> indices);
// Dense [rows x cols] matrix that is zero except out[r][c] = values[k] for
// each (r, c) = positions[k]. Repeated positions add up.
Var scatter_matrix(Var values, std::span<const std::pair<std::size_t, std::size_t>> positions,
                   std::size_t rows, std::size_t cols);
// Places `x` at (row, col) inside a zero matrix of the given size.
Var embed_block(Var x, std::size_t rows, std::size_t cols, std::size_t row,
                std::size_t col);

// out[t] = sum over lookups[t] of tables[table_id].row(row_index).
struct Lookup {
  std::size_t table;
  std::size_t row;
};
Var embedding_bag(std::span<const Var> tables,
                  const std::vector<std::vector<Lookup>>& lookups);

// Losses; each returns a [1] scalar averaged as documented.
Var l1_loss(Var pred, Var target);              // mean |p - t|
Var mse_loss(Var pred, Var target);             // mean (p - t)^2
Var bce_with_logits_loss(Var logits, Var target);  // mean over elements
// Mean over rows of 1 - cos(pred_row, target_row). Throws
// kDegenerateVector on a zero-norm row in either argument.
Var cosine_similarity_loss(Var pred, Var target);

}  // namespace molstack

#endif  // MOLSTACK_TENSOR_H_

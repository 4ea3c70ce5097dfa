// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/nn.h"

#include <cmath>
#include <algorithm>
#include <numbers>

#include "molstack/error.h"

namespace molstack {

std::size_t ParamStore::add(std::string name, Tensor init) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

std::size_t ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  fail(ErrorCode::kInvalidArgument, "no parameter named " + name);
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

std::vector<Var> ParamStore::bind(Tape& tape) const {
  std::vector<Var> vars;
  vars.reserve(values_.size());
  for (const Tensor& t : values_) vars.push_back(tape.leaf(t));
  return vars;
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (double& x : t.data) x = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

double sine_lr(long step, long total_steps, double min_lr, double max_lr) {
  if (total_steps <= 0 || step < 0 || step > total_steps) {
    fail(ErrorCode::kStepOutOfRange, "sine_lr: step " + std::to_string(step) +
                                         " outside [0, " + std::to_string(total_steps) + "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(step) /
                       static_cast<double>(total_steps);
  return min_lr + (max_lr - min_lr) * std::sin(phase);
}

Adam::Adam(const ParamStore& params, AdamOptions options) : options_(options) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.value(i).size(), 0.0);
    v_.emplace_back(params.value(i).size(), 0.0);
  }
}

void Adam::step(ParamStore& params, const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != params.size()) {
    fail(ErrorCode::kShapeMismatch, "Adam: gradient count does not match parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    std::vector<double>& w = params.value(p).data;
    const std::vector<double>& g = grads[p].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[p][i] = options_.beta1 * m_[p][i] + (1.0 - options_.beta1) * g[i];
      v_[p][i] = options_.beta2 * v_[p][i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double mhat = m_[p][i] / c1;
      const double vhat = v_[p][i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

Var linear(Var x, Var weight, Var bias) { return add(matmul(x, weight), bias); }

std::vector<Tensor> collect_grads(const Tape& tape, const std::vector<Var>& bound) {
  std::vector<Tensor> grads;
  grads.reserve(bound.size());
  for (const Var& v : bound) grads.push_back(tape.grad(v));
  return grads;
}

}  // namespace molstack

namespace molstack {

TrainHistory run_training(ParamStore& params, std::size_t n_examples,
                          const TrainLoopOptions& options, const BatchLossFn& batch_loss,
                          const EvalMaeFn& eval_mae) {
  if (n_examples == 0) fail(ErrorCode::kInvalidArgument, "training set is empty");
  if (options.epochs < 1 || options.batch_size < 1) {
    fail(ErrorCode::kInvalidArgument, "epochs and batch_size must be >= 1");
  }
  const std::size_t batch = static_cast<std::size_t>(options.batch_size);
  const long steps_per_epoch = static_cast<long>((n_examples + batch - 1) / batch);
  TrainHistory history;
  history.total_steps = steps_per_epoch * options.epochs;
  history.initial_mae = eval_mae();

  Rng rng(options.seed);
  Rng shuffle_rng = rng.split();
  Adam adam(params);
  std::vector<std::size_t> order(n_examples);
  long step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = 0; i < n_examples; ++i) order[i] = i;
    for (std::size_t i = n_examples; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    for (std::size_t start = 0; start < n_examples; start += batch, ++step) {
      const std::size_t end = std::min(n_examples, start + batch);
      const double lr = sine_lr(step, history.total_steps, options.min_lr, options.max_lr);
      Tape tape;
      const std::vector<Var> bound = params.bind(tape);
      Var loss = batch_loss(tape, bound,
                            std::span<const std::size_t>(order.data() + start, end - start), rng);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        fail(ErrorCode::kDivergedLoss, "non-finite loss " + std::to_string(value) +
                                           " at step " + std::to_string(step) + " (epoch " +
                                           std::to_string(epoch) + ")");
      }
      tape.backward(loss);
      adam.step(params, collect_grads(tape, bound), lr);
      history.step_lr.push_back(lr);
      history.step_loss.push_back(value);
    }
    history.epoch_mae.push_back(eval_mae());
  }
  return history;
}

}  // namespace molstack

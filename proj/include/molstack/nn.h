// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLSTACK_NN_H_
#define MOLSTACK_NN_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "molstack/rng.h"
#include "molstack/tensor.h"

namespace molstack {

// Named, ordered model parameters. Indices returned by add() are stable.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor init);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  std::size_t find(const std::string& name) const;  // throws if absent
  std::size_t parameter_count() const;

  // Registers every parameter as a leaf of `tape`, in index order.
  std::vector<Var> bind(Tape& tape) const;

  bool operator==(const ParamStore&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// Glorot/Xavier uniform with bound sqrt(6 / (rows + cols)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// lr = min_lr + (max_lr - min_lr) * sin(pi * step / total_steps).
double sine_lr(long step, long total_steps, double min_lr, double max_lr);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParamStore& params, AdamOptions options = {});

  // One update using gradients in `grads` (same order as the store).
  void step(ParamStore& params, const std::vector<Tensor>& grads, double lr);

  long steps() const { return t_; }

 private:
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

// x W + b.
Var linear(Var x, Var weight, Var bias);

// Gradients of the bound leaves after tape.backward().
std::vector<Tensor> collect_grads(const Tape& tape, const std::vector<Var>& bound);

struct TrainHistory {
  double initial_mae = 0.0;
  std::vector<double> epoch_mae;  // training-set MAE after each epoch
  std::vector<double> step_lr;
  std::vector<double> step_loss;
  long total_steps = 0;
};

struct TrainLoopOptions {
  int epochs = 1;
  int batch_size = 1;
  double min_lr = 1e-8;
  double max_lr = 1e-3;
  std::uint64_t seed = 0;
};

// Builds the mean loss of one mini-batch on `tape`.
using BatchLossFn = std::function<Var(Tape& tape, const std::vector<Var>& bound,
                                      std::span<const std::size_t> batch, Rng& rng)>;
using EvalMaeFn = std::function<double()>;

// Adam with the sine schedule over epochs * ceil(n / batch_size) steps.
// Example order is reshuffled every epoch from `seed`. Throws kDivergedLoss
// when a batch loss is not finite.
TrainHistory run_training(ParamStore& params, std::size_t n_examples,
                          const TrainLoopOptions& options, const BatchLossFn& batch_loss,
                          const EvalMaeFn& eval_mae);

}  // namespace molstack

#endif  // MOLSTACK_NN_H_

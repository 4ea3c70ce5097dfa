// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "gradcheck.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "molstack/rng.h"

namespace molstack::testing {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  return f(tape, leaves).value().item();
}

}  // namespace

GradCheckResult gradient_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h,
                               double floor) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  tape.backward(f(tape, leaves));

  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = tape.grad(leaves[i]);
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double x = inputs[i].data[k];
      probe[i].data[k] = x + h;
      const double up = evaluate(f, probe);
      probe[i].data[k] = x - h;
      const double down = evaluate(f, probe);
      probe[i].data[k] = x;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.data[k];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.checked;
      if (err > result.max_error || std::isnan(err)) {
        result.max_error = std::isnan(err) ? INFINITY : err;
        std::ostringstream s;
        s << "input " << i << "[" << k << "]: analytic " << a << ", numeric " << numeric;
        result.worst = s.str();
      }
    }
  }
  return result;
}

Var weighted_sum(Var x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(x.shape());
  for (double& v : w.data) v = rng.uniform() * 2.0 - 1.0;
  return sum(mul(x, x.tape()->constant(std::move(w))));
}

}  // namespace molstack::testing

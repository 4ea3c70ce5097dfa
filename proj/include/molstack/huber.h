// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// Robust linear regression with a jointly estimated scale. Minimizes
//
//   L(w, c, s) = n s + sum_i s H((y_i - x_i w - c) / s) + alpha |w|^2
//
// with H(z) = z^2 for |z| < epsilon and 2 epsilon |z| - epsilon^2 beyond,
// the same objective as scikit-learn's HuberRegressor. The intercept c is
// not penalized.

#ifndef MOLSTACK_HUBER_H_
#define MOLSTACK_HUBER_H_

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace molstack {

struct HuberOptions {
  double epsilon = 1.35;
  double alpha = 1e-4;  // ridge strength on the weights
  double tolerance = 1e-8;
  int max_iterations = 200;
};

struct HuberFit {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double scale = 1.0;
  int iterations = 0;
  std::vector<bool> outliers;  // |residual| > epsilon * scale
};

// Alternates an exact minimization over the scale with a reweighted least
// squares step over (w, c): unit weight for inliers, epsilon s / |r| for
// outliers. Stops when no parameter moves by more than `tolerance`, then
// refines with Newton steps on the identified inlier/outlier partition.
// Throws kSingularSystem if the centered design is rank deficient or has
// fewer rows than columns, kNonConvergence after max_iterations.
HuberFit fit_huber_regressor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             const HuberOptions& options = {});

// Objective value at the given parameters.
double huber_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, double c, double s, double epsilon, double alpha);

// argmin over s > 0 of the objective with residuals held fixed.
double optimal_scale(const Eigen::VectorXd& residuals, double epsilon);

}  // namespace molstack

#endif  // MOLSTACK_HUBER_H_

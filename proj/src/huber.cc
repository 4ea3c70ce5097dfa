// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/huber.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "molstack/error.h"

namespace molstack {
namespace {

// Keeps the reweighting finite when the data are fitted exactly.
constexpr double kMinScale = 1e-12;

// Newton steps on (w, c, s) using the current inlier/outlier partition,
// with backtracking so the objective never increases beyond rounding.
// IRLS contracts only linearly; once it is near the optimum a few steps
// reach it to rounding, including when a residual sits at the partition
// boundary.
void polish(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, Eigen::VectorXd& theta,
            double& s, const HuberOptions& options) {
  const Eigen::Index n = z.rows();
  const Eigen::Index q = z.cols();  // weights plus intercept
  const double eps = options.epsilon;
  auto objective = [&](const Eigen::VectorXd& t, double scale) {
    return huber_objective(z.leftCols(q - 1), y, t.head(q - 1), t[q - 1], scale, eps,
                           options.alpha);
  };
  for (int step = 0; step < 50; ++step) {
    const Eigen::VectorXd r = y - z * theta;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(q + 1);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(q + 1, q + 1);
    g[q] = static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto zi = z.row(i).transpose();
      if (std::abs(r[i]) < eps * s) {
        g.head(q) -= 2.0 * r[i] / s * zi;
        g[q] -= r[i] * r[i] / (s * s);
        h.topLeftCorner(q, q) += 2.0 / s * zi * zi.transpose();
        h.col(q).head(q) += 2.0 * r[i] / (s * s) * zi;
        h(q, q) += 2.0 * r[i] * r[i] / (s * s * s);
      } else {
        g.head(q) -= 2.0 * eps * (r[i] > 0 ? 1.0 : -1.0) * zi;
        g[q] -= eps * eps;
      }
    }
    g.head(q - 1) += 2.0 * options.alpha * theta.head(q - 1);
    h.diagonal().head(q - 1).array() += 2.0 * options.alpha;
    h.row(q).head(q) = h.col(q).head(q).transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return;
    const Eigen::VectorXd d = ldlt.solve(-g);
    if (!d.allFinite()) return;
    const double before = objective(theta, s);
    double t = 1.0;
    bool moved = false;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      const double next_s = s + t * d[q];
      if (!(next_s > 0.0)) continue;
      const Eigen::VectorXd next = theta + t * d.head(q);
      if (objective(next, next_s) <= before + 1e-13 * std::abs(before)) {
        theta = next;
        s = next_s;
        moved = true;
        break;
      }
    }
    if (!moved) return;
    if (t * d.cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + theta.cwiseAbs().maxCoeff() + s)) return;
  }
}

}  // namespace

double huber_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, double c, double s, double epsilon,
                       double alpha) {
  const Eigen::VectorXd r = y - x * w - Eigen::VectorXd::Constant(y.size(), c);
  double total = static_cast<double>(y.size()) * s + alpha * w.squaredNorm();
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double a = std::abs(r[i]);
    total += a < epsilon * s ? r[i] * r[i] / s : 2.0 * epsilon * a - epsilon * epsilon * s;
  }
  return total;
}

double optimal_scale(const Eigen::VectorXd& residuals, double epsilon) {
  // dL/ds = n - eps^2 * #{|r| >= eps s} - sum_{|r| < eps s} r^2 / s^2 is
  // non-decreasing in s; walk the breakpoints |r| / eps in ascending order.
  std::vector<double> a(residuals.size());
  for (Eigen::Index i = 0; i < residuals.size(); ++i) a[i] = std::abs(residuals[i]);
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double inlier_ss = 0.0;
  double lower = 0.0;
  for (std::size_t k = 0; k <= a.size(); ++k) {
    // Interval (lower, upper]: the first k residuals are inliers.
    const double upper = k < a.size() ? a[k] / epsilon : INFINITY;
    const double slope = n - epsilon * epsilon * static_cast<double>(a.size() - k);
    if (slope > 0.0) {
      const double s = std::sqrt(inlier_ss / slope);
      if (s <= lower) return std::max(lower, kMinScale);
      if (s <= upper) return std::max(s, kMinScale);
    }
    if (k < a.size()) {
      inlier_ss += a[k] * a[k];
      lower = upper;
    }
  }
  return std::max(lower, kMinScale);
}

HuberFit fit_huber_regressor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             const HuberOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n) fail(ErrorCode::kLengthMismatch, "fit_huber: X and y row counts differ");
  if (!(options.epsilon > 1.0) || !(options.alpha >= 0.0)) {
    fail(ErrorCode::kInvalidArgument, "fit_huber: need epsilon > 1 and alpha >= 0");
  }
  if (n < p + 1) {
    fail(ErrorCode::kSingularSystem, "fit_huber: " + std::to_string(n) + " rows for " +
                                         std::to_string(p) + " columns plus intercept");
  }
  if (p > 0) {
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(centered);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      fail(ErrorCode::kSingularSystem, "fit_huber: centered design has rank " +
                                           std::to_string(qr.rank()) + " < " + std::to_string(p));
    }
  }

  Eigen::MatrixXd z(n, p + 1);
  z.leftCols(p) = x;
  z.col(p).setOnes();
  // Least-squares start.
  Eigen::VectorXd theta = z.colPivHouseholderQr().solve(y);
  Eigen::VectorXd r = y - z * theta;
  double s = optimal_scale(r, options.epsilon);

  HuberFit fit;
  double delta = INFINITY;
  for (int it = 1; it <= options.max_iterations; ++it) {
    Eigen::VectorXd omega(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = std::abs(r[i]);
      omega[i] = a <= options.epsilon * s ? 1.0 : options.epsilon * s / a;
    }
    Eigen::MatrixXd lhs = z.transpose() * omega.asDiagonal() * z;
    lhs.diagonal().head(p).array() += options.alpha * s;
    const Eigen::VectorXd rhs = z.transpose() * omega.cwiseProduct(y);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      fail(ErrorCode::kSingularSystem, "fit_huber: weighted normal equations are singular");
    }
    const Eigen::VectorXd next = ldlt.solve(rhs);
    r = y - z * next;
    const double next_s = optimal_scale(r, options.epsilon);
    delta = std::max((next - theta).cwiseAbs().maxCoeff(), std::abs(next_s - s));
    theta = next;
    s = next_s;
    if (!theta.allFinite() || !std::isfinite(s)) {
      fail(ErrorCode::kNonConvergence, "fit_huber: non-finite parameters at iteration " +
                                           std::to_string(it));
    }
    if (delta < options.tolerance) {
      polish(z, y, theta, s, options);
      r = y - z * theta;
      fit.iterations = it;
      fit.weights = theta.head(p);
      fit.intercept = theta[p];
      fit.scale = s;
      fit.outliers.resize(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) fit.outliers[i] = std::abs(r[i]) > options.epsilon * s;
      return fit;
    }
  }
  fail(ErrorCode::kNonConvergence, "fit_huber: no convergence after " +
                                       std::to_string(options.max_iterations) +
                                       " iterations, last change " + std::to_string(delta));
}

}  // namespace molstack

#pragma once

#include <Eigen/Cholesky>
#include <cfloat>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mmtfl/loss.hpp"
#include "mmtfl/regularizer.hpp"

namespace mmtfl {

struct SolverOptions {
  /// Target on the KKT / gradient residual of the subproblem.
  double tol = 1e-8;
  int max_inner_iters = 10000;
};

struct SolverResult {
  Vector beta;
  bool converged = true;
  int iterations = 0;
  /// Residual actually achieved (same measure as kkt_residual).
  double kkt = 0.0;
  /// Objective per iteration; filled by the proximal-gradient solver only.
  std::vector<double> objective_trace;
};

inline double soft_threshold(double z, double t) {
  if (t < 0.0) throw std::invalid_argument("soft_threshold: t must be >= 0");
  const double m = std::abs(z) - t;
  return m <= 0.0 ? 0.0 : (z < 0.0 ? -m : m);
}

/// Optimality residual of min_beta L(beta; X, y) + gamma1 ||beta||_p^p.
/// p = 2: Euclidean norm of the full gradient. p = 1: largest violation of
/// the subdifferential inclusion (zero at an exact optimum).
inline double kkt_residual(const Vector& beta, const Matrix& X,
                           const Vector& y, Loss loss, int p, double gamma1) {
  const Vector g = loss_and_gradient(beta, X, y, loss).gradient;
  if (p == 2) return (g + 2.0 * gamma1 * beta).norm();
  if (p != 1) throw std::invalid_argument("kkt_residual: p must be 1 or 2");
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double v = beta[j] == 0.0
                         ? std::max(std::abs(g[j]) - gamma1, 0.0)
                         : std::abs(g[j] + gamma1 * (beta[j] > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

/// Ridge subproblem, solved in closed form via the normal equations
/// (X'X + gamma1 I) beta = X'y, or their n x n dual when n < d.
inline Vector solve_ridge_ls(const Matrix& X, const Vector& y, double gamma1) {
  if (!(gamma1 > 0.0))
    throw std::invalid_argument("solve_ridge_ls: gamma1 must be > 0");
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n >= d) {
    Matrix G = X.transpose() * X;
    G.diagonal().array() += gamma1;
    return Eigen::LLT<Matrix>(G).solve(X.transpose() * y);
  }
  Matrix G = X * X.transpose();
  G.diagonal().array() += gamma1;
  return X.transpose() * Eigen::LLT<Matrix>(G).solve(y);
}

/// Lasso subproblem min sum_i (x_i.b - y_i)^2 + gamma1 ||b||_1 by cyclic
/// coordinate descent with soft thresholding. Fixed coordinate order; stops
/// on the subdifferential residual.
inline SolverResult solve_lasso_ls(const Matrix& X, const Vector& y,
                                   double gamma1,
                                   const SolverOptions& opts = {}) {
  if (!(gamma1 > 0.0))
    throw std::invalid_argument("solve_lasso_ls: gamma1 must be > 0");
  const Eigen::Index d = X.cols();
  SolverResult res;
  res.beta = Vector::Zero(d);
  const Vector col_sq = X.colwise().squaredNorm();
  Vector r = -y;  // r = X beta - y
  res.converged = false;
  int sweep = 0;
  for (; sweep < opts.max_inner_iters; ++sweep) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (col_sq[j] == 0.0) continue;
      const double old = res.beta[j];
      // u = -2 x_j'(r - x_j old): gradient of the 1-D restriction at 0
      const double u = 2.0 * (col_sq[j] * old - X.col(j).dot(r));
      const double next = soft_threshold(u, gamma1) / (2.0 * col_sq[j]);
      if (next != old) {
        r += (next - old) * X.col(j);
        res.beta[j] = next;
      }
    }
    // KKT pass on the updated residual
    double worst = 0.0;
    const Vector g = 2.0 * (X.transpose() * r);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v =
          res.beta[j] == 0.0
              ? std::max(std::abs(g[j]) - gamma1, 0.0)
              : std::abs(g[j] + gamma1 * (res.beta[j] > 0 ? 1.0 : -1.0));
      worst = std::max(worst, v);
    }
    res.kkt = worst;
    if (worst <= opts.tol) {
      res.converged = true;
      ++sweep;
      break;
    }
  }
  res.iterations = sweep;
  return res;
}

/// l2-regularized logistic regression by Newton's method with Armijo
/// backtracking; stops when the full gradient norm is within tolerance.
inline SolverResult solve_logistic_l2(const Matrix& X, const Vector& y,
                                      double gamma1,
                                      const SolverOptions& opts = {}) {
  if (!(gamma1 > 0.0))
    throw std::invalid_argument("solve_logistic_l2: gamma1 must be > 0");
  detail::require_pm1_labels(y);
  const Eigen::Index n = X.rows(), d = X.cols();
  SolverResult res;
  res.beta = Vector::Zero(d);
  res.converged = false;
  double value = loss_value(res.beta, X, y, Loss::logistic);
  for (int it = 0; it < opts.max_inner_iters; ++it) {
    const Vector scores = X * res.beta;
    Vector slope(n), curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = y[i] * scores[i];
      const double s = detail::sigmoid(-m);
      slope[i] = -y[i] * s;
      curv[i] = s * (1.0 - s);
    }
    const Vector grad = X.transpose() * slope + 2.0 * gamma1 * res.beta;
    res.kkt = grad.norm();
    res.iterations = it;
    if (res.kkt <= opts.tol) {
      res.converged = true;
      return res;
    }
    Matrix H = X.transpose() * curv.asDiagonal() * X;
    H.diagonal().array() += 2.0 * gamma1;
    const Vector step = Eigen::LLT<Matrix>(H).solve(grad);
    const double slope_dir = grad.dot(step);
    const double full_value = value + gamma1 * res.beta.squaredNorm();
    // near the optimum the Armijo decrease falls below rounding, so a step
    // that does not increase the objective within rounding is also accepted
    const double round_slack = 8.0 * DBL_EPSILON * std::abs(full_value);
    double eta = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60 && !accepted; ++ls) {
      const Vector cand = res.beta - eta * step;
      const double cand_value = loss_value(cand, X, y, Loss::logistic) +
                                gamma1 * cand.squaredNorm();
      const bool tail_step = eta * eta * step.squaredNorm() <= 1e-10;
      if (cand_value <= full_value - 1e-4 * eta * slope_dir ||
          (tail_step && cand_value <= full_value + round_slack)) {
        res.beta = cand;
        value = cand_value - gamma1 * cand.squaredNorm();
        accepted = true;
      }
      eta *= 0.5;
    }
    if (!accepted) break;  // stalled at rounding level
  }
  res.kkt = (loss_and_gradient(res.beta, X, y, Loss::logistic).gradient +
             2.0 * gamma1 * res.beta)
                .norm();
  res.converged = res.kkt <= opts.tol;
  return res;
}

/// l1-regularized logistic regression by proximal gradient with backtracking
/// line search (initial step 1, shrink 0.5, sufficient-decrease 1e-4). The
/// step size is floored at 1/L with L = lambda_max(X'X)/4, the global
/// Lipschitz bound of the logistic loss sum; at that step the quadratic
/// majorization holds exactly, so the step is accepted without a function
/// comparison and the iteration keeps contracting below the resolution of
/// objective values. The objective never increases across iterations.
inline SolverResult solve_logistic_l1(const Matrix& X, const Vector& y,
                                      double gamma1,
                                      const SolverOptions& opts = {}) {
  if (!(gamma1 > 0.0))
    throw std::invalid_argument("solve_logistic_l1: gamma1 must be > 0");
  detail::require_pm1_labels(y);
  const Eigen::Index n = X.rows(), d = X.cols();
  SolverResult res;
  res.beta = Vector::Zero(d);
  res.converged = false;
  auto objective = [&](const Vector& b) {
    return loss_value(b, X, y, Loss::logistic) + gamma1 * b.lpNorm<1>();
  };
  auto prox_step = [&](const Vector& from, const Vector& grad, double eta) {
    Vector out = from - eta * grad;
    for (Eigen::Index j = 0; j < d; ++j)
      out[j] = soft_threshold(out[j], eta * gamma1);
    return out;
  };
  // spectral norm of the smaller Gram matrix; the loss curvature per
  // example is at most 1/4
  const Matrix gram = n <= d ? Matrix(X * X.transpose())
                             : Matrix(X.transpose() * X);
  const double lip =
      0.25 * Eigen::SelfAdjointEigenSolver<Matrix>(gram)
                 .eigenvalues()
                 .maxCoeff() +
      1e-12;
  const double eta_floor = 1.0 / lip;

  double value = objective(res.beta);
  res.objective_trace.push_back(value);
  for (int it = 0; it < opts.max_inner_iters; ++it) {
    const LossGradient lg = loss_and_gradient(res.beta, X, y, Loss::logistic);
    res.kkt = kkt_residual(res.beta, X, y, Loss::logistic, 1, gamma1);
    res.iterations = it;
    if (res.kkt <= opts.tol) {
      res.converged = true;
      return res;
    }
    Vector cand;
    bool accepted = false;
    for (double eta = 1.0; eta > eta_floor; eta *= 0.5) {
      cand = prox_step(res.beta, lg.gradient, eta);
      const double move = (cand - res.beta).squaredNorm();
      if (move == 0.0 ||
          objective(cand) <= value - 1e-4 * move / eta) {
        accepted = true;
        break;
      }
    }
    if (!accepted) cand = prox_step(res.beta, lg.gradient, eta_floor);
    res.beta = cand;
    value = std::min(value, objective(res.beta));
    res.objective_trace.push_back(value);
  }
  res.kkt = kkt_residual(res.beta, X, y, Loss::logistic, 1, gamma1);
  res.converged = res.kkt <= opts.tol;
  return res;
}

/// Per-task subproblem dispatcher for the alternating algorithm:
/// min_beta L(beta; X, y) + gamma1 ||beta||_p^p.
inline SolverResult solve_subproblem(const Matrix& X, const Vector& y,
                                     const RegularizerSpec& spec,
                                     const SolverOptions& opts = {}) {
  if (spec.loss == Loss::least_squares) {
    if (spec.p == 2) {
      SolverResult res;
      res.beta = solve_ridge_ls(X, y, spec.gamma1);
      res.kkt = kkt_residual(res.beta, X, y, spec.loss, 2, spec.gamma1);
      res.iterations = 1;
      return res;
    }
    return solve_lasso_ls(X, y, spec.gamma1, opts);
  }
  return spec.p == 2 ? solve_logistic_l2(X, y, spec.gamma1, opts)
                     : solve_logistic_l1(X, y, spec.gamma1, opts);
}

}  // namespace mmtfl

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "mmtfl/objectives.hpp"
#include "mmtfl/parallel.hpp"
#include "mmtfl/solvers.hpp"
#include "mmtfl/types.hpp"

namespace mmtfl {

struct FitOptions {
  /// Outer termination threshold on max |change in alpha|.
  double epsilon = 1e-6;
  int max_outer_iters = 500;
  SolverOptions solver;
  /// Keep c at its initial value and stop after one pass over the tasks
  /// (the single-task-learning baseline).
  bool freeze_c = false;
  /// Initial across-task vector; all ones when unset.
  std::optional<Vector> init_c;
  /// Secondary stop: relative objective change below this counts as
  /// converged, guarding against alpha-scale stalls.
  double objective_rel_tol = 1e-12;
  /// Threads for the per-task subproblems within one outer iteration.
  unsigned jobs = 1;
};

/// Which gamma2 exponent the sigma update uses. `derived` is the exponent
/// consistent with the closed-form-c table and the variational subproblem;
/// `as_published` reproduces a typeset variant kept for the verification
/// harness to demonstrate the discrepancy.
enum class SigmaExponent { derived, as_published };

inline Matrix scale_features(const Matrix& X, const Vector& c) {
  if (X.cols() != c.size())
    throw std::invalid_argument("scale_features: c length != feature count");
  if (!c.allFinite() || (c.array() < 0.0).any())
    throw std::invalid_argument("scale_features: c must be finite and >= 0");
  return X * c.asDiagonal();
}

/// Closed-form minimizer of the variational objective in sigma at fixed A:
///   sigma_j = gamma1^(1 - p/(2kq)) * gamma2^(p/(2kq) - 1)
///             * (sum_t |a_j^t|^p)^(1/(2q))
/// Zero rows of A map to sigma_j = 0 exactly.
inline Vector update_sigma(const Matrix& A, const RegularizerSpec& spec,
                           SigmaExponent variant = SigmaExponent::derived) {
  spec.validate();
  const double q = spec.q();
  const double e1 = 1.0 - spec.p / (2.0 * spec.k * q);
  const double e2 = variant == SigmaExponent::derived
                        ? spec.p / (2.0 * spec.k * q) - 1.0
                        : 0.5 - 1.0 / (2.0 * spec.k);
  const double scale =
      std::pow(spec.gamma1, e1) * std::pow(spec.gamma2, e2);
  Vector sigma(A.rows());
  for (Eigen::Index j = 0; j < A.rows(); ++j) {
    const double s = detail::abs_power_sum(A.row(j).transpose(), spec.p);
    sigma[j] = s == 0.0 ? 0.0 : scale * std::pow(s, 1.0 / (2.0 * q));
  }
  return sigma;
}

inline Vector sigma_to_c(const Vector& sigma, int k) {
  if ((sigma.array() < 0.0).any())
    throw std::invalid_argument("sigma_to_c: sigma must be >= 0");
  if (k == 1) return sigma;
  if (k == 2) return sigma.array().sqrt();
  return sigma.array().pow(1.0 / k);
}

/// Optimal c as a function of the task-specific matrix:
///   c_j = (gamma1/gamma2)^(1/k) * (sum_t |b_j^t|^p)^(1/(2kq - p))
/// For q = (k+p)/(2k) the exponent 1/(2kq - p) reduces to 1/k, matching the
/// four-cell shrinkage table.
inline Vector closed_form_c_from_B(const Matrix& B,
                                   const RegularizerSpec& spec) {
  spec.validate();
  const double ratio_pow =
      std::pow(spec.gamma1 / spec.gamma2, 1.0 / spec.k);
  const double inv_exp = 1.0 / (2.0 * spec.k * spec.q() - spec.p);
  Vector c(B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    const double w = detail::abs_power_sum(B.row(j).transpose(), spec.p);
    c[j] = w == 0.0 ? 0.0 : ratio_pow * std::pow(w, inv_exp);
  }
  return c;
}

namespace detail {

// B with A's rows divided by c where c_j > 0 and zeroed where c_j = 0, so
// that A = diag(c) B holds exactly.
inline Matrix consistent_B(const Matrix& A, const Vector& c) {
  Matrix B = Matrix::Zero(A.rows(), A.cols());
  for (Eigen::Index j = 0; j < A.rows(); ++j)
    if (c[j] > 0.0) B.row(j) = A.row(j) / c[j];
  return B;
}

}  // namespace detail

/// Alternating optimization for the multiplicative formulation. Each outer
/// iteration scales every task's features by the current c, solves the T
/// independent subproblems for the task-specific vectors, forms
/// A = diag(c) B, and refreshes c through the closed-form sigma update.
/// Stops when max |change in alpha| drops below epsilon. The returned
/// decomposition is re-paired (B = pseudo-inverse of diag(c) applied to A)
/// so A = diag(c) B holds exactly at the reported point.
inline FitResult fit(const MultitaskDataset& data, const RegularizerSpec& spec,
                     const FitOptions& opts = {}) {
  data.validate();
  spec.validate();
  if (!(opts.epsilon > 0.0))
    throw std::invalid_argument("fit: epsilon must be > 0");
  if (opts.max_outer_iters < 1)
    throw std::invalid_argument("fit: max_outer_iters must be >= 1");
  const Eigen::Index d = data.feature_count();
  const Eigen::Index T = data.task_count();

  Vector c = opts.init_c.value_or(Vector::Ones(d));
  if (c.size() != d)
    throw std::invalid_argument("fit: init_c length != feature count");
  if ((c.array() < 0.0).any())
    throw std::invalid_argument("fit: init_c must be >= 0");

  FitResult result;
  Matrix B = Matrix::Zero(d, T);
  Matrix A = Matrix::Zero(d, T);
  Matrix A_prev = Matrix::Zero(d, T);
  double prev_objective = std::numeric_limits<double>::infinity();

  // For the ridge subproblem the scaled normal equations are
  // diag(c) X'X diag(c) + gamma1 I, so X'X and X'y are cached per task and
  // each outer iteration costs O(d^2) + one factorization.
  const bool cached_ridge =
      spec.loss == Loss::least_squares && spec.p == 2;
  std::vector<Matrix> gram(static_cast<std::size_t>(T));
  std::vector<Vector> xty(static_cast<std::size_t>(T));
  if (cached_ridge) {
    parallel_for(static_cast<std::size_t>(T), opts.jobs, [&](std::size_t t) {
      gram[t] = data.tasks[t].X.transpose() * data.tasks[t].X;
      xty[t] = data.tasks[t].X.transpose() * data.tasks[t].y;
    });
  }
  auto solve_ridge_cached = [&](std::size_t t) {
    Matrix G = c.asDiagonal() * gram[t] * c.asDiagonal();
    G.diagonal().array() += spec.gamma1;
    const Vector rhs = c.asDiagonal() * xty[t];
    SolverResult out;
    out.beta = Eigen::LLT<Matrix>(G).solve(rhs);
    // stationarity residual of the scaled problem, from cached pieces
    out.kkt = 2.0 * (G * out.beta - rhs).norm();
    out.iterations = 1;
    return out;
  };

  for (int s = 1; s <= opts.max_outer_iters; ++s) {
    std::vector<SolverResult> solved(static_cast<std::size_t>(T));
    parallel_for(static_cast<std::size_t>(T), opts.jobs, [&](std::size_t t) {
      if (cached_ridge) {
        solved[t] = solve_ridge_cached(t);
        return;
      }
      const TaskData& task = data.tasks[t];
      const Matrix scaled = scale_features(task.X, c);
      solved[t] = solve_subproblem(scaled, task.y, spec, opts.solver);
    });
    for (Eigen::Index t = 0; t < T; ++t) {
      B.col(t) = solved[t].beta;
      result.worst_subproblem_kkt =
          std::max(result.worst_subproblem_kkt, solved[t].kkt);
      result.subproblems_converged &= solved[t].converged;
    }
    A = c.asDiagonal() * B;
    result.max_delta = (A - A_prev).cwiseAbs().maxCoeff();
    result.iterations = s;

    if (!opts.freeze_c) {
      c = sigma_to_c(update_sigma(A, spec), spec.k);
    }
    const Decomposition current{c, detail::consistent_B(A, c)};
    const double objective = multiplicative_objective(current, data, spec);
    result.objective_trace.push_back(objective);

    if (opts.freeze_c) {
      result.converged = true;
      break;
    }
    if (result.max_delta < opts.epsilon) {
      result.converged = true;
      break;
    }
    if (s >= 2 && std::abs(objective - prev_objective) <=
                      opts.objective_rel_tol *
                          std::max(1.0, std::abs(prev_objective))) {
      result.converged = true;
      break;
    }
    A_prev = A;
    prev_objective = objective;
  }

  result.decomposition = Decomposition{c, detail::consistent_B(A, c)};
  return result;
}

}  // namespace mmtfl

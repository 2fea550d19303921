#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "mmtfl/loss.hpp"
#include "mmtfl/regularizer.hpp"
#include "mmtfl/types.hpp"

namespace mmtfl {

namespace detail {

// sum_t |v_t|^p with fast paths for the supported exponents
inline double abs_power_sum(const Eigen::Ref<const Vector>& v, double p) {
  if (p == 1.0) return v.array().abs().sum();
  if (p == 2.0) return v.squaredNorm();
  return v.array().abs().pow(p).sum();
}

inline void check_dims(const MultitaskDataset& data, Eigen::Index rows,
                       Eigen::Index cols, const char* what) {
  if (rows != data.feature_count() ||
      cols != static_cast<Eigen::Index>(data.tasks.size()))
    throw std::invalid_argument(std::string(what) +
                                ": shape does not match dataset");
}

}  // namespace detail

/// Generalized row penalty (sum_t |v_t|^p)^(1/q). Coincides with the l_p
/// norm when q = p; the zero vector maps to 0 for any exponents.
inline double row_operator_norm(const Eigen::Ref<const Vector>& v, double p,
                                double q) {
  if (!(p > 0.0) || !(q > 0.0))
    throw std::invalid_argument("row_operator_norm: p, q must be > 0");
  if (!v.allFinite())
    throw std::invalid_argument("row_operator_norm: non-finite input");
  const double s = detail::abs_power_sum(v, p);
  return s == 0.0 ? 0.0 : std::pow(s, 1.0 / q);
}

/// Objective of the multiplicative formulation:
///   sum_t L(diag(c) b_t) + gamma1 sum_t sum_j |b_j^t|^p + gamma2 sum_j c_j^k
inline double multiplicative_objective(const Decomposition& dec,
                                       const MultitaskDataset& data,
                                       const RegularizerSpec& spec) {
  spec.validate();
  dec.validate();
  detail::check_dims(data, dec.B.rows(), dec.B.cols(), "multiplicative_objective");
  const Matrix A = dec.weights();
  double total = 0.0;
  for (Eigen::Index t = 0; t < data.task_count(); ++t)
    total += loss_value(A.col(t), data.tasks[t].X, data.tasks[t].y, spec.loss);
  for (Eigen::Index t = 0; t < dec.B.cols(); ++t)
    total += spec.gamma1 * detail::abs_power_sum(dec.B.col(t), spec.p);
  if (spec.k == 1)
    total += spec.gamma2 * dec.c.sum();
  else
    total += spec.gamma2 * dec.c.squaredNorm();
  return total;
}

/// Objective of the joint formulation:
///   sum_t L(a_t) + lambda sum_j (sum_t |a_j^t|^p)^(1/(2q))
/// with (q, lambda) derived from the spec.
inline double joint_objective(const Matrix& A, const MultitaskDataset& data,
                              const RegularizerSpec& spec) {
  spec.validate();
  if (!A.allFinite())
    throw std::invalid_argument("joint_objective: non-finite entries");
  detail::check_dims(data, A.rows(), A.cols(), "joint_objective");
  double total = 0.0;
  for (Eigen::Index t = 0; t < data.task_count(); ++t)
    total += loss_value(A.col(t), data.tasks[t].X, data.tasks[t].y, spec.loss);
  const double lambda = spec.lambda();
  const double inv_2q = 1.0 / (2.0 * spec.q());
  for (Eigen::Index j = 0; j < A.rows(); ++j) {
    const double s = detail::abs_power_sum(A.row(j).transpose(), spec.p);
    if (s > 0.0) total += lambda * std::pow(s, inv_2q);
  }
  return total;
}

/// Objective of the variational formulation with auxiliary sigma > 0:
///   sum_t L(a_t) + mu1 sum_j sigma_j^-1 (sum_t |a_j^t|^p)^(1/q)
///               + mu2 sum_j sigma_j
inline double variational_objective(const Matrix& A, const Vector& sigma,
                                    const MultitaskDataset& data,
                                    const RegularizerSpec& spec, double mu1,
                                    double mu2) {
  spec.validate();
  if (!A.allFinite() || !sigma.allFinite())
    throw std::invalid_argument("variational_objective: non-finite entries");
  detail::check_dims(data, A.rows(), A.cols(), "variational_objective");
  if (sigma.size() != A.rows())
    throw std::invalid_argument("variational_objective: sigma length != d");
  if ((sigma.array() <= 0.0).any())
    throw std::invalid_argument("variational_objective: sigma must be > 0");
  double total = 0.0;
  for (Eigen::Index t = 0; t < data.task_count(); ++t)
    total += loss_value(A.col(t), data.tasks[t].X, data.tasks[t].y, spec.loss);
  const double inv_q = 1.0 / spec.q();
  for (Eigen::Index j = 0; j < A.rows(); ++j) {
    const double s = detail::abs_power_sum(A.row(j).transpose(), spec.p);
    if (s > 0.0) total += mu1 * std::pow(s, inv_q) / sigma[j];
    total += mu2 * sigma[j];
  }
  return total;
}

}  // namespace mmtfl

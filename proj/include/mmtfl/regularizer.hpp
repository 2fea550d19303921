#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "mmtfl/loss.hpp"

namespace mmtfl {

/// Configuration of the multiplicative regularizer: an l_p^p penalty (weight
/// gamma1) on every task-specific vector and an l_k^k penalty (weight gamma2)
/// on the across-task vector c. The joint-form parameters (q, lambda) and the
/// variational weights (mu1, mu2) are derived, never stored.
struct RegularizerSpec {
  int p = 2;
  int k = 2;
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  Loss loss = Loss::least_squares;

  void validate() const {
    if (p != 1 && p != 2)
      throw std::invalid_argument("regularizer: p must be 1 or 2");
    if (k != 1 && k != 2)
      throw std::invalid_argument("regularizer: k must be 1 or 2");
    if (!(gamma1 > 0.0) || !(gamma2 > 0.0))
      throw std::invalid_argument("regularizer: gamma1, gamma2 must be > 0");
  }

  double q() const { return (k + p) / (2.0 * k); }

  /// Joint-form penalty weight: lambda = 2 sqrt(gamma1^(2 - p/(k q)) *
  /// gamma2^(p/(k q))).
  double lambda() const {
    const double e = p / (k * q());
    return 2.0 * std::sqrt(std::pow(gamma1, 2.0 - e) * std::pow(gamma2, e));
  }

  /// Weights of the variational form equivalent to this spec:
  /// mu1 = gamma1^((2kq-p)/(kq)) * gamma2^((p-kq)/(kq)), mu2 = gamma2.
  struct Mu {
    double mu1;
    double mu2;
  };
  Mu variational_weights() const {
    const double kq = k * q();
    const double mu1 = std::pow(gamma1, (2.0 * kq - p) / kq) *
                       std::pow(gamma2, (p - kq) / kq);
    return {mu1, gamma2};
  }

  std::string method_name() const {
    return "MMTFL(" + std::to_string(p) + "," + std::to_string(k) + ")";
  }
};

struct JointForm {
  double q;
  double lambda;
};

struct MultiplicativeForm {
  int k;
  double gamma1;
  double gamma2;
};

inline JointForm map_multiplicative_to_joint(int p, int k, double gamma1,
                                             double gamma2) {
  RegularizerSpec spec{p, k, gamma1, gamma2, Loss::least_squares};
  spec.validate();
  return {spec.q(), spec.lambda()};
}

/// Inverse of the hyperparameter mapping. The multiplicative side has one
/// more degree of freedom than the joint side, so the caller fixes the
/// gamma1:gamma2 ratio (default 1 makes lambda = 2*gamma when both agree).
inline MultiplicativeForm map_joint_to_multiplicative(int p, double q,
                                                      double lambda,
                                                      double ratio = 1.0) {
  if (p != 1 && p != 2) throw std::invalid_argument("p must be 1 or 2");
  if (!(2.0 * q - 1.0 > 0.0))
    throw std::invalid_argument("inverse mapping requires q > 1/2");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  if (!(ratio > 0.0)) throw std::invalid_argument("ratio must be > 0");
  const double k_real = p / (2.0 * q - 1.0);
  const int k = static_cast<int>(std::lround(k_real));
  if ((k != 1 && k != 2) || std::abs(k_real - k) > 1e-9 * k_real)
    throw std::invalid_argument("q maps to unsupported k = " +
                                std::to_string(k_real));
  // lambda^2 = 4 gamma1^e1 gamma2^e2 with e1 + e2 = 2 and gamma1 = r*gamma2
  // gives gamma2 = lambda / (2 r^(e1/2)).
  const double e1 = 2.0 - p / (k * ((k + p) / (2.0 * k)));
  const double gamma2 = lambda / (2.0 * std::pow(ratio, e1 / 2.0));
  return {k, ratio * gamma2, gamma2};
}

}  // namespace mmtfl

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mmtfl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Loss { least_squares, logistic };

inline std::string to_string(Loss loss) {
  return loss == Loss::least_squares ? "least_squares" : "logistic";
}

inline Loss loss_from_string(const std::string& s) {
  if (s == "least_squares") return Loss::least_squares;
  if (s == "logistic") return Loss::logistic;
  throw std::invalid_argument("unknown loss kind: " + s);
}

namespace detail {

inline void require_pm1_labels(const Vector& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 1.0 && y[i] != -1.0)
      throw std::invalid_argument(
          "logistic loss requires labels in {-1,+1}, got " +
          std::to_string(y[i]) + " at index " + std::to_string(i));
}

// log(1 + exp(-m)) without overflow for large |m|
inline double softplus_neg(double m) {
  return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

inline double sigmoid(double m) {
  return m >= 0 ? 1.0 / (1.0 + std::exp(-m))
                : std::exp(m) / (1.0 + std::exp(m));
}

}  // namespace detail

// Empirical loss of a single linear model. Plain sums over examples, no 1/2
// or 1/n factor:
//   least squares:  sum_i (x_i.w - y_i)^2
//   logistic:       sum_i log(1 + exp(-y_i x_i.w)),  y_i in {-1,+1}
inline double loss_value(const Vector& w, const Matrix& X, const Vector& y,
                         Loss loss) {
  if (X.rows() != y.size() || X.cols() != w.size())
    throw std::invalid_argument("loss_value: dimension mismatch");
  const Vector scores = X * w;
  if (loss == Loss::least_squares) return (scores - y).squaredNorm();
  detail::require_pm1_labels(y);
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    total += detail::softplus_neg(y[i] * scores[i]);
  return total;
}

struct LossGradient {
  double value = 0.0;
  Vector gradient;
};

inline LossGradient loss_and_gradient(const Vector& w, const Matrix& X,
                                      const Vector& y, Loss loss) {
  if (X.rows() != y.size() || X.cols() != w.size())
    throw std::invalid_argument("loss_and_gradient: dimension mismatch");
  LossGradient out;
  const Vector scores = X * w;
  if (loss == Loss::least_squares) {
    const Vector r = scores - y;
    out.value = r.squaredNorm();
    out.gradient = 2.0 * (X.transpose() * r);
    return out;
  }
  detail::require_pm1_labels(y);
  Vector slope(y.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double m = y[i] * scores[i];
    total += detail::softplus_neg(m);
    slope[i] = -y[i] * detail::sigmoid(-m);
  }
  out.value = total;
  out.gradient = X.transpose() * slope;
  return out;
}

}  // namespace mmtfl

// Per-task subproblem solvers, certified against independent oracles:
// a pseudo-inverse linear solve for ridge, a proximal-gradient reference for
// the lasso, 1-D bisection and dense grids for the logistic cases.

#include <gtest/gtest.h>

#include <cmath>

#include "mmtfl/rng.hpp"
#include "mmtfl/solvers.hpp"

using namespace mmtfl;

namespace {

Matrix random_matrix(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Matrix X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = rng.normal();
  return X;
}

Vector random_labels(Eigen::Index n, Rng& rng) {
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.coin_flip() ? 1.0 : -1.0;
  return y;
}

double lasso_objective(const Matrix& X, const Vector& y, const Vector& b,
                       double gamma1) {
  return (X * b - y).squaredNorm() + gamma1 * b.lpNorm<1>();
}

// reference lasso solver: plain proximal gradient with a conservative fixed
// step run to a tight tolerance, independent of the coordinate-descent path
Vector ista_lasso_oracle(const Matrix& X, const Vector& y, double gamma1,
                         int iters = 200000) {
  const double lip = 2.0 * (X.transpose() * X).operatorNorm() + 1e-12;
  const double eta = 1.0 / lip;
  Vector b = Vector::Zero(X.cols());
  for (int i = 0; i < iters; ++i) {
    const Vector g = 2.0 * (X.transpose() * (X * b - y));
    Vector next = b - eta * g;
    for (Eigen::Index j = 0; j < next.size(); ++j)
      next[j] = soft_threshold(next[j], eta * gamma1);
    if ((next - b).lpNorm<Eigen::Infinity>() < 1e-14 && i > 100) {
      b = next;
      break;
    }
    b = next;
  }
  return b;
}

}  // namespace

TEST(SoftThreshold, KnownValues) {
  EXPECT_DOUBLE_EQ(soft_threshold(3.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(soft_threshold(-0.5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(soft_threshold(-4.0, 1.5), -2.5);
  EXPECT_DOUBLE_EQ(soft_threshold(0.0, 0.0), 0.0);
  EXPECT_THROW(soft_threshold(1.0, -0.1), std::invalid_argument);
}

TEST(RidgeLS, OneDimensional) {
  Matrix X(1, 1);
  X << 1;
  Vector y(1);
  y << 2;
  // stationarity: 2(b - 2) + 2b = 0  =>  b = 1
  EXPECT_NEAR(solve_ridge_ls(X, y, 1.0)[0], 1.0, 1e-12);
}

TEST(RidgeLS, ZeroTargetsGiveZero) {
  Rng rng(1);
  const Matrix X = random_matrix(10, 4, rng);
  EXPECT_NEAR(solve_ridge_ls(X, Vector::Zero(10), 0.5).norm(), 0.0, 1e-14);
}

TEST(RidgeLS, MatchesNormalEquationsOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 20, d = 5;
    const Matrix X = random_matrix(n, d, rng);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.normal();
    const double gamma1 = rng.log_uniform(1e-3, 1e2);
    // oracle: dense solve of (X'X + gamma1 I) b = X'y via full-pivot LU
    Matrix G = X.transpose() * X;
    G.diagonal().array() += gamma1;
    const Vector oracle = Eigen::FullPivLU<Matrix>(G).solve(X.transpose() * y);
    const Vector beta = solve_ridge_ls(X, y, gamma1);
    EXPECT_LT((beta - oracle).norm() / std::max(1.0, oracle.norm()), 1e-8);
    EXPECT_LT(kkt_residual(beta, X, y, Loss::least_squares, 2, gamma1), 1e-8);
  }
}

TEST(RidgeLS, DualPathAgreesWithPrimal) {
  Rng rng(3);
  const Matrix X = random_matrix(8, 30, rng);  // n < d triggers the dual path
  Vector y(8);
  for (Eigen::Index i = 0; i < 8; ++i) y[i] = rng.normal();
  const Vector beta = solve_ridge_ls(X, y, 0.7);
  Matrix G = X.transpose() * X;
  G.diagonal().array() += 0.7;
  const Vector primal = Eigen::FullPivLU<Matrix>(G).solve(X.transpose() * y);
  EXPECT_LT((beta - primal).norm(), 1e-8);
}

TEST(RidgeLS, MatchesOracleUpToDimension100) {
  Rng rng(4);
  for (Eigen::Index d : {50, 100}) {
    const Eigen::Index n = d + 20;
    const Matrix X = random_matrix(n, d, rng);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.normal();
    Matrix G = X.transpose() * X;
    G.diagonal().array() += 2.5;
    const Vector oracle = Eigen::FullPivLU<Matrix>(G).solve(X.transpose() * y);
    const Vector beta = solve_ridge_ls(X, y, 2.5);
    EXPECT_LT((beta - oracle).norm() / oracle.norm(), 1e-8);
  }
}

TEST(LassoLS, ThresholdDominationGivesZero) {
  Rng rng(5);
  const Matrix X = random_matrix(15, 6, rng);
  Vector y(15);
  for (Eigen::Index i = 0; i < 15; ++i) y[i] = rng.normal();
  const double gamma1 =
      2.0 * (X.transpose() * y).lpNorm<Eigen::Infinity>() + 1e-6;
  const auto res = solve_lasso_ls(X, y, gamma1);
  EXPECT_TRUE(res.converged);
  EXPECT_DOUBLE_EQ(res.beta.norm(), 0.0);
}

TEST(LassoLS, OneDimensionalAnalytic) {
  Matrix X(1, 1);
  X << 1;
  Vector y(1);
  y << 2;
  // minimize (b-2)^2 + 2|b|: b = soft_threshold(4, 2) / 2 = 1
  const auto res = solve_lasso_ls(X, y, 2.0);
  EXPECT_TRUE(res.converged);
  EXPECT_NEAR(res.beta[0], 1.0, 1e-12);
}

TEST(LassoLS, MatchesProximalGradientOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 30, d = 8;
    const Matrix X = random_matrix(n, d, rng);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.normal();
    const double gamma1 = rng.log_uniform(0.1, 10.0);
    const Vector oracle = ista_lasso_oracle(X, y, gamma1);
    const auto res = solve_lasso_ls(X, y, gamma1);
    EXPECT_TRUE(res.converged);
    EXPECT_NEAR(lasso_objective(X, y, res.beta, gamma1),
                lasso_objective(X, y, oracle, gamma1), 1e-6);
  }
}

TEST(LassoLS, ZeroColumnStaysZero) {
  Rng rng(7);
  Matrix X = random_matrix(12, 4, rng);
  X.col(2).setZero();
  Vector y(12);
  for (Eigen::Index i = 0; i < 12; ++i) y[i] = rng.normal();
  const auto res = solve_lasso_ls(X, y, 0.5);
  EXPECT_DOUBLE_EQ(res.beta[2], 0.0);
  EXPECT_TRUE(res.converged);
}

TEST(LassoLS, L1NormMonotoneInGamma) {
  Rng rng(8);
  const Matrix X = random_matrix(25, 6, rng);
  Vector y(25);
  for (Eigen::Index i = 0; i < 25; ++i) y[i] = rng.normal() * 2.0;
  double prev = std::numeric_limits<double>::infinity();
  for (double gamma1 : {0.01, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0}) {
    const auto res = solve_lasso_ls(X, y, gamma1);
    ASSERT_TRUE(res.converged);
    EXPECT_LE(res.beta.lpNorm<1>(), prev + 1e-8);
    prev = res.beta.lpNorm<1>();
  }
}

TEST(LogisticL2, BalancedPairBisectionOracle) {
  Matrix X(2, 1);
  X << 1, -1;
  Vector y(2);
  y << 1, -1;
  // stationarity in beta: -2 sigmoid(-b) + 2b = 0; solve by bisection
  auto f = [](double b) { return b - 1.0 / (1.0 + std::exp(b)); };
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0 ? lo : hi) = mid;
  }
  const double oracle = 0.5 * (lo + hi);
  const auto res = solve_logistic_l2(X, y, 1.0);
  EXPECT_TRUE(res.converged);
  EXPECT_GT(res.beta[0], 0.0);
  EXPECT_NEAR(res.beta[0], oracle, 1e-6);
}

TEST(LogisticL2, ConstantLossMinimizesPenalty) {
  const Matrix X = Matrix::Zero(6, 3);
  const Vector y = Vector::Ones(6);
  const auto res = solve_logistic_l2(X, y, 1.0);
  EXPECT_TRUE(res.converged);
  EXPECT_DOUBLE_EQ(res.beta.norm(), 0.0);
}

TEST(LogisticL2, GradientNormWithinTolerance) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 40, d = 7;
    const Matrix X = random_matrix(n, d, rng);
    const Vector y = random_labels(n, rng);
    const double gamma1 = rng.log_uniform(0.01, 10.0);
    const auto res = solve_logistic_l2(X, y, gamma1);
    EXPECT_TRUE(res.converged);
    EXPECT_LE(res.kkt, 1e-8);
  }
}

TEST(LogisticL2, RejectsBadLabels) {
  Matrix X(2, 1);
  X << 1, -1;
  Vector y(2);
  y << 1, 2;
  EXPECT_THROW(solve_logistic_l2(X, y, 1.0), std::invalid_argument);
}

TEST(LogisticL1, ZeroWhenPenaltyDominates) {
  Rng rng(10);
  const Matrix X = random_matrix(20, 5, rng);
  const Vector y = random_labels(20, rng);
  const auto g0 =
      loss_and_gradient(Vector::Zero(5), X, y, Loss::logistic).gradient;
  const auto res =
      solve_logistic_l1(X, y, g0.lpNorm<Eigen::Infinity>() + 1e-6);
  EXPECT_TRUE(res.converged);
  EXPECT_DOUBLE_EQ(res.beta.norm(), 0.0);
}

TEST(LogisticL1, SingleFeatureMatchesGridOracle) {
  Rng rng(11);
  Matrix X(30, 1);
  Vector y(30);
  for (Eigen::Index i = 0; i < 30; ++i) {
    y[i] = i < 15 ? 1.0 : -1.0;
    X(i, 0) = y[i] * rng.uniform(0.5, 2.0);  // separable by sign
  }
  const double gamma1 = 2.0;
  auto objective = [&](double b) {
    Vector beta(1);
    beta << b;
    return loss_value(beta, X, y, Loss::logistic) + gamma1 * std::abs(b);
  };
  double best_b = 0.0, best_f = objective(0.0);
  for (int i = -40000; i <= 40000; ++i) {
    const double b = i * 1e-4;
    const double f = objective(b);
    if (f < best_f) {
      best_f = f;
      best_b = b;
    }
  }
  const auto res = solve_logistic_l1(X, y, gamma1);
  EXPECT_TRUE(res.converged);
  EXPECT_NEAR(res.beta[0], best_b, 1e-4);
}

TEST(LogisticL1, ObjectiveNeverIncreases) {
  Rng rng(12);
  const Matrix X = random_matrix(35, 6, rng);
  const Vector y = random_labels(35, rng);
  const auto res = solve_logistic_l1(X, y, 0.3);
  ASSERT_GE(res.objective_trace.size(), 2u);
  for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
    EXPECT_LE(res.objective_trace[i], res.objective_trace[i - 1] + 1e-12);
}

TEST(LogisticL1, KktResidualWithinTolerance) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix X = random_matrix(40, 6, rng);
    const Vector y = random_labels(40, rng);
    const double gamma1 = rng.log_uniform(0.05, 5.0);
    const auto res = solve_logistic_l1(X, y, gamma1);
    EXPECT_TRUE(res.converged);
    EXPECT_LE(res.kkt, 1e-8);
  }
}

TEST(KktResidual, ExactSolutionsScoreZero) {
  Rng rng(14);
  const Matrix X = random_matrix(20, 5, rng);
  Vector y(20);
  for (Eigen::Index i = 0; i < 20; ++i) y[i] = rng.normal();
  const Vector beta = solve_ridge_ls(X, y, 1.0);
  EXPECT_LE(kkt_residual(beta, X, y, Loss::least_squares, 2, 1.0), 1e-10);

  const double big = 2.0 * (X.transpose() * y).lpNorm<Eigen::Infinity>() + 1.0;
  EXPECT_DOUBLE_EQ(
      kkt_residual(Vector::Zero(5), X, y, Loss::least_squares, 1, big), 0.0);
}

TEST(KktResidual, GrowsMonotonicallyUnderPerturbation) {
  Rng rng(15);
  const Matrix X = random_matrix(20, 4, rng);
  Vector y(20);
  for (Eigen::Index i = 0; i < 20; ++i) y[i] = rng.normal();
  const Vector beta = solve_ridge_ls(X, y, 1.0);
  Vector dir(4);
  for (Eigen::Index j = 0; j < 4; ++j) dir[j] = rng.normal();
  dir.normalize();
  double prev = kkt_residual(beta, X, y, Loss::least_squares, 2, 1.0);
  for (double delta : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) {
    const double r =
        kkt_residual(beta + delta * dir, X, y, Loss::least_squares, 2, 1.0);
    EXPECT_GT(r, prev);
    prev = r;
  }
}

TEST(Solvers, DeterministicAcrossRuns) {
  Rng rng(16);
  const Matrix X = random_matrix(25, 6, rng);
  Vector y(25);
  for (Eigen::Index i = 0; i < 25; ++i) y[i] = rng.normal();
  const auto a = solve_lasso_ls(X, y, 0.8);
  const auto b = solve_lasso_ls(X, y, 0.8);
  EXPECT_TRUE(a.beta == b.beta);  // bitwise
  const Vector ya = random_labels(25, rng);
  const auto c = solve_logistic_l1(X, ya, 0.4);
  const auto d = solve_logistic_l1(X, ya, 0.4);
  EXPECT_TRUE(c.beta == d.beta);
}

TEST(Solvers, NonConvergenceIsFlagged) {
  Rng rng(17);
  const Matrix X = random_matrix(30, 8, rng);
  Vector y(30);
  for (Eigen::Index i = 0; i < 30; ++i) y[i] = rng.normal();
  SolverOptions opts;
  opts.max_inner_iters = 1;
  opts.tol = 1e-14;
  const auto res = solve_lasso_ls(X, y, 0.01, opts);
  EXPECT_FALSE(res.converged);
  EXPECT_GT(res.beta.norm(), 0.0);  // best iterate still returned
}

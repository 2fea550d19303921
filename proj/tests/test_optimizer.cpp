// Alternating optimization: feature scaling, the closed-form across-task
// updates, and the full fit loop with its equivalence and monotonicity
// contracts.

#include <gtest/gtest.h>

#include <cmath>

#include "mmtfl/objectives.hpp"
#include "mmtfl/optimizer.hpp"
#include "mmtfl/rng.hpp"
#include "mmtfl/solvers.hpp"

using namespace mmtfl;

namespace {

MultitaskDataset random_regression(Eigen::Index d, Eigen::Index T,
                                   Eigen::Index n, Rng& rng,
                                   double noise = 0.5) {
  MultitaskDataset data;
  Vector shared(d);
  for (Eigen::Index j = 0; j < d; ++j)
    shared[j] = rng.uniform() < 0.6 ? rng.normal() : 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    TaskData task;
    task.task_id = "task_" + std::to_string(t);
    task.X.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) task.X(i, j) = rng.normal();
    Vector w = shared;
    for (Eigen::Index j = 0; j < d; ++j)
      if (w[j] != 0.0) w[j] += 0.3 * rng.normal();
    task.y = task.X * w;
    for (Eigen::Index i = 0; i < n; ++i) task.y[i] += noise * rng.normal();
    data.tasks.push_back(std::move(task));
  }
  return data;
}

}  // namespace

TEST(ScaleFeatures, BasicBehavior) {
  Matrix X(1, 3);
  X << 1, 5, 3;
  Vector c(3);
  c << 2, 0, 1;
  const Matrix scaled = scale_features(X, c);
  EXPECT_DOUBLE_EQ(scaled(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(scaled(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(scaled(0, 2), 3.0);

  EXPECT_TRUE(scale_features(X, Vector::Ones(3)) == X);
  EXPECT_TRUE(scale_features(X, Vector::Zero(3)).isZero(0.0));
  EXPECT_THROW(scale_features(X, Vector::Ones(2)), std::invalid_argument);
  Vector neg(3);
  neg << 1, -1, 1;
  EXPECT_THROW(scale_features(X, neg), std::invalid_argument);
}

TEST(UpdateSigma, KnownValues) {
  {
    Matrix A(1, 2);
    A << 3, 4;
    const RegularizerSpec spec{2, 2, 1.0, 1.0, Loss::least_squares};  // q = 1
    EXPECT_NEAR(update_sigma(A, spec)[0], 5.0, 1e-12);
  }
  {
    Matrix A(1, 2);
    A << 1, 3;
    const RegularizerSpec spec{1, 1, 1.0, 1.0, Loss::least_squares};  // q = 1
    EXPECT_NEAR(update_sigma(A, spec)[0], 2.0, 1e-12);
  }
  {
    // q = 3/2, gamma1 = 8: sigma = 8^(1/3) * (sum alpha^2)^(1/3) = 2 * 2
    Matrix A(1, 2);
    A << 2, 2;
    const RegularizerSpec spec{2, 1, 8.0, 1.0, Loss::least_squares};
    EXPECT_NEAR(update_sigma(A, spec)[0], 4.0, 1e-12);
  }
  {
    Matrix A(2, 3);
    A.setZero();
    A(1, 0) = 1.5;
    const RegularizerSpec spec{2, 1, 1.0, 1.0, Loss::least_squares};
    const Vector sigma = update_sigma(A, spec);
    EXPECT_DOUBLE_EQ(sigma[0], 0.0);  // zero row maps to exactly zero
    EXPECT_GT(sigma[1], 0.0);
  }
}

TEST(SigmaToC, KnownValues) {
  Vector sigma(3);
  sigma << 4, 0, 9;
  const Vector c2 = sigma_to_c(sigma, 2);
  EXPECT_DOUBLE_EQ(c2[0], 2.0);
  EXPECT_DOUBLE_EQ(c2[1], 0.0);
  EXPECT_DOUBLE_EQ(c2[2], 3.0);
  const Vector c1 = sigma_to_c(sigma, 1);
  EXPECT_DOUBLE_EQ(c1[0], 4.0);
  Vector bad(1);
  bad << -1;
  EXPECT_THROW(sigma_to_c(bad, 2), std::invalid_argument);
}

TEST(ClosedFormC, MatchesShrinkageTable) {
  {
    Matrix B(1, 2);
    B << 3, 4;
    const RegularizerSpec spec{2, 2, 1.0, 1.0, Loss::least_squares};
    EXPECT_NEAR(closed_form_c_from_B(B, spec)[0], 5.0, 1e-12);
  }
  {
    Matrix B(1, 3);
    B << 1, -2, 3;
    const RegularizerSpec spec{1, 1, 2.0, 1.0, Loss::least_squares};
    EXPECT_NEAR(closed_form_c_from_B(B, spec)[0], 12.0, 1e-12);
  }
  {
    Matrix B(1, 2);
    B << 1, 2;
    const RegularizerSpec spec{2, 1, 1.0, 2.0, Loss::least_squares};
    EXPECT_NEAR(closed_form_c_from_B(B, spec)[0], 2.5, 1e-12);
  }
  // all four cells against the explicit table formulas on random rows
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix B(1, 4);
    for (Eigen::Index t = 0; t < 4; ++t) B(0, t) = rng.normal();
    const double g1 = rng.log_uniform(0.1, 10.0);
    const double g2 = rng.log_uniform(0.1, 10.0);
    const Vector row = B.row(0).transpose();
    const double s1 = row.array().abs().sum();
    const double s2 = row.squaredNorm();
    const double r = g1 / g2;
    using Cell = std::pair<RegularizerSpec, double>;
    const std::vector<Cell> cells{
        {{2, 2, g1, g2, Loss::least_squares}, std::sqrt(r) * std::sqrt(s2)},
        {{1, 1, g1, g2, Loss::least_squares}, r * s1},
        {{2, 1, g1, g2, Loss::least_squares}, r * s2},
        {{1, 2, g1, g2, Loss::least_squares}, std::sqrt(r) * std::sqrt(s1)}};
    for (const auto& [spec, expected] : cells)
      EXPECT_NEAR(closed_form_c_from_B(B, spec)[0], expected,
                  1e-12 * expected);
  }
}

// at a self-consistent point (A = diag(c) B with c from the closed form),
// the sigma route reproduces the closed form exactly
TEST(ClosedFormC, AgreesWithSigmaRouteAtFixedPoint) {
  Rng rng(32);
  for (int p : {1, 2}) {
    for (int k : {1, 2}) {
      for (int trial = 0; trial < 20; ++trial) {
        const RegularizerSpec spec{p, k, rng.log_uniform(0.2, 5.0),
                                   rng.log_uniform(0.2, 5.0),
                                   Loss::least_squares};
        Matrix B(6, 3);
        for (Eigen::Index j = 0; j < 6; ++j)
          for (Eigen::Index t = 0; t < 3; ++t)
            B(j, t) = rng.uniform() < 0.2 ? 0.0 : rng.normal();
        const Vector c = closed_form_c_from_B(B, spec);
        const Matrix A = c.asDiagonal() * B;
        const Vector c_again = sigma_to_c(update_sigma(A, spec), k);
        for (Eigen::Index j = 0; j < 6; ++j)
          EXPECT_NEAR(c_again[j], c[j], 1e-8 * std::max(1.0, c[j]))
              << "cell (" << p << "," << k << ")";
      }
    }
  }
}

TEST(Fit, HugeGamma2KillsAllFeatures) {
  Rng rng(33);
  const auto data = random_regression(8, 3, 20, rng);
  const RegularizerSpec spec{2, 2, 1.0, 1e8, Loss::least_squares};
  const FitResult res = fit(data, spec);
  EXPECT_TRUE(res.converged);
  EXPECT_LT(res.decomposition.c.maxCoeff(), 1e-6);
  EXPECT_LT(res.decomposition.weights().cwiseAbs().maxCoeff(), 1e-6);
}

// 1-D problem: the fitted weight must minimize the equivalent joint
// objective, checked against a dense grid
TEST(Fit, MatchesJointGridOracleInOneDimension) {
  MultitaskDataset data;
  TaskData task;
  task.task_id = "t";
  task.X = Matrix::Ones(1, 1);
  task.y = Vector::Constant(1, 2.0);
  data.tasks.push_back(task);
  const RegularizerSpec spec{2, 2, 0.5, 0.5, Loss::least_squares};
  FitOptions opts;
  opts.epsilon = 1e-12;
  const FitResult res = fit(data, spec, opts);
  ASSERT_TRUE(res.converged);
  const double alpha_fit = res.decomposition.weights()(0, 0);

  // dense grid over alpha of (alpha-2)^2 + lambda*|alpha| (p=2, q=1)
  const double lambda = spec.lambda();
  double best_alpha = 0.0, best_value = 4.0;
  for (int i = 0; i <= 400000; ++i) {
    const double a = i * 1e-5;
    const double v = (a - 2.0) * (a - 2.0) + lambda * std::abs(a);
    if (v < best_value) {
      best_value = v;
      best_alpha = a;
    }
  }
  EXPECT_NEAR(alpha_fit, best_alpha, 1e-3);
}

TEST(Fit, ObjectiveTraceMonotoneAcrossCells) {
  Rng rng(34);
  for (int p : {1, 2}) {
    for (int k : {1, 2}) {
      for (int trial = 0; trial < 3; ++trial) {
        const auto data = random_regression(12, 4, 30, rng);
        const RegularizerSpec spec{p, k, rng.log_uniform(0.3, 3.0),
                                   rng.log_uniform(0.3, 3.0),
                                   Loss::least_squares};
        const FitResult res = fit(data, spec);
        ASSERT_TRUE(res.converged) << "cell (" << p << "," << k << ")";
        const auto& trace = res.objective_trace;
        for (std::size_t i = 1; i < trace.size(); ++i)
          EXPECT_LE(trace[i],
                    trace[i - 1] + 1e-8 * std::max(1.0, std::abs(trace[i - 1])))
              << "cell (" << p << "," << k << ") step " << i;
      }
    }
  }
}

TEST(Fit, EquivalenceOfObjectivesAtReturn) {
  Rng rng(35);
  for (int p : {1, 2}) {
    for (int k : {1, 2}) {
      const auto data = random_regression(10, 3, 25, rng);
      const RegularizerSpec spec{p, k, 0.8, 1.2, Loss::least_squares};
      const FitResult res = fit(data, spec);
      ASSERT_TRUE(res.converged);
      const double j1 = multiplicative_objective(res.decomposition, data, spec);
      const double j2 = joint_objective(res.decomposition.weights(), data, spec);
      EXPECT_LE(std::abs(j1 - j2) / std::max(1.0, std::abs(j2)), 1e-6)
          << "cell (" << p << "," << k << ")";
    }
  }
}

TEST(Fit, DecompositionIsExactlyConsistent) {
  Rng rng(36);
  const auto data = random_regression(10, 3, 25, rng);
  const RegularizerSpec spec{2, 1, 1.0, 1.0, Loss::least_squares};
  const FitResult res = fit(data, spec);
  const Matrix A = res.decomposition.weights();
  // A = diag(c) B bit-exactly, and zero gates mean zero rows
  for (Eigen::Index j = 0; j < A.rows(); ++j) {
    EXPECT_GE(res.decomposition.c[j], 0.0);
    if (res.decomposition.c[j] == 0.0)
      EXPECT_TRUE(res.decomposition.B.row(j).isZero(0.0));
  }
}

TEST(Fit, DeterministicTraces) {
  Rng rng(37);
  const auto data = random_regression(9, 3, 22, rng);
  const RegularizerSpec spec{1, 2, 0.7, 1.4, Loss::least_squares};
  const FitResult a = fit(data, spec);
  const FitResult b = fit(data, spec);
  ASSERT_EQ(a.objective_trace.size(), b.objective_trace.size());
  for (std::size_t i = 0; i < a.objective_trace.size(); ++i)
    EXPECT_EQ(a.objective_trace[i], b.objective_trace[i]);  // bitwise
  EXPECT_TRUE(a.decomposition.c == b.decomposition.c);
  EXPECT_TRUE(a.decomposition.B == b.decomposition.B);

  FitOptions two_jobs;
  two_jobs.jobs = 2;
  const FitResult c = fit(data, spec, two_jobs);
  EXPECT_TRUE(a.decomposition.c == c.decomposition.c);
}

TEST(Fit, FrozenGateMatchesDirectSingleTaskSolves) {
  Rng rng(38);
  const auto data = random_regression(7, 4, 18, rng);
  const RegularizerSpec spec{2, 2, 1.3, 1.0, Loss::least_squares};
  FitOptions opts;
  opts.freeze_c = true;
  const FitResult res = fit(data, spec, opts);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 1);
  EXPECT_TRUE(res.decomposition.c == Vector::Ones(7));
  for (Eigen::Index t = 0; t < data.task_count(); ++t) {
    const Vector direct =
        solve_ridge_ls(data.tasks[t].X, data.tasks[t].y, spec.gamma1);
    EXPECT_TRUE(res.decomposition.B.col(t) == direct);  // identical solves
  }
}

TEST(Fit, RejectsBadInputs) {
  MultitaskDataset empty;
  const RegularizerSpec spec{2, 2, 1.0, 1.0, Loss::least_squares};
  EXPECT_THROW(fit(empty, spec), std::invalid_argument);

  Rng rng(39);
  const auto data = random_regression(5, 2, 10, rng);
  FitOptions opts;
  opts.epsilon = 0.0;
  EXPECT_THROW(fit(data, spec, opts), std::invalid_argument);
  FitOptions bad_init;
  bad_init.init_c = Vector::Ones(4);
  EXPECT_THROW(fit(data, spec, bad_init), std::invalid_argument);
}

TEST(Fit, LogisticCellsConvergeAndCertify) {
  Rng rng(40);
  MultitaskDataset data;
  const Eigen::Index d = 8, T = 3, n = 40;
  Vector w_true(d);
  for (Eigen::Index j = 0; j < d; ++j)
    w_true[j] = j < 4 ? rng.normal() : 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    TaskData task;
    task.task_id = "t" + std::to_string(t);
    task.X.resize(n, d);
    task.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) task.X(i, j) = rng.normal();
      const double score = task.X.row(i).dot(w_true);
      task.y[i] = score + 0.3 * rng.normal() >= 0 ? 1.0 : -1.0;
    }
    data.tasks.push_back(std::move(task));
  }
  for (int p : {1, 2}) {
    const RegularizerSpec spec{p, 1, 0.5, 0.5, Loss::logistic};
    const FitResult res = fit(data, spec);
    EXPECT_TRUE(res.converged) << "p = " << p;
    EXPECT_TRUE(res.subproblems_converged);
    EXPECT_LE(res.worst_subproblem_kkt, 1e-6);
    const double j1 = multiplicative_objective(res.decomposition, data, spec);
    const double j2 = joint_objective(res.decomposition.weights(), data, spec);
    EXPECT_LE(std::abs(j1 - j2) / std::max(1.0, std::abs(j2)), 1e-6);
  }
}

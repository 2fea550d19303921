#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmtfl/rng.hpp"
#include "mmtfl/types.hpp"

namespace mmtfl {

enum class Pattern { d1, d2 };

inline std::string to_string(Pattern p) { return p == Pattern::d1 ? "d1" : "d2"; }

inline Pattern pattern_from_string(const std::string& s) {
  if (s == "d1" || s == "D1") return Pattern::d1;
  if (s == "d2" || s == "D2") return Pattern::d2;
  throw std::invalid_argument("unknown pattern: " + s);
}

struct SyntheticSpec {
  int tasks = 10;
  int examples_per_task = 200;
  int features = 100;
  std::uint64_t seed = 0;
  Pattern pattern = Pattern::d1;
  /// Scale applied to the nonzero true weights (magnitudes U[0.5, 1.5]).
  double weight_scale = 1.0;
  /// Number of task groups in the staircase pattern (d2 only).
  int groups = 6;

  static SyntheticSpec defaults(Pattern p) {
    SyntheticSpec s;
    s.pattern = p;
    s.tasks = p == Pattern::d1 ? 10 : 20;
    return s;
  }

  void validate() const {
    if (tasks < 1 || examples_per_task < 1 || features < 1)
      throw std::invalid_argument("synthetic spec: T, n, d must be >= 1");
    if (!(weight_scale > 0.0))
      throw std::invalid_argument("synthetic spec: weight_scale must be > 0");
  }
};

struct GroundTruth {
  Matrix A_true;                        // d x T true combination weights
  Eigen::MatrixXi support;              // 1 where A_true is nonzero
  std::vector<int> irrelevant_features; // rows that are zero in every task
};

namespace detail {

// first `count` tasks-per-group get one extra member when T % G != 0
inline std::vector<int> split_into_groups(int total, int groups) {
  std::vector<int> sizes(groups, total / groups);
  for (int g = 0; g < total % groups; ++g) ++sizes[g];
  return sizes;
}

// Draws nonzero weights into A_true where support is set: per-row random
// sign, per-entry magnitude U[0.5, 1.5] * scale.
inline void fill_weights(Matrix& A_true, const Eigen::MatrixXi& support,
                         double scale, Rng& rng) {
  for (Eigen::Index j = 0; j < A_true.rows(); ++j) {
    if (support.row(j).sum() == 0) continue;
    const double sign = rng.coin_flip() ? 1.0 : -1.0;
    for (Eigen::Index t = 0; t < A_true.cols(); ++t)
      if (support(j, t) != 0)
        A_true(j, t) = sign * rng.uniform(0.5, 1.5) * scale;
  }
}

inline MultitaskDataset sample_dataset(const Matrix& A_true, int n, Rng& rng) {
  const Eigen::Index d = A_true.rows(), T = A_true.cols();
  MultitaskDataset data;
  data.tasks.reserve(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    TaskData task;
    task.task_id = "task_" + std::to_string(t);
    task.X.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) task.X(i, j) = rng.normal();
    task.y = task.X * A_true.col(t);
    for (Eigen::Index i = 0; i < n; ++i) task.y[i] += rng.normal();
    data.tasks.push_back(std::move(task));
  }
  return data;
}

inline GroundTruth finish_truth(Matrix A_true, Eigen::MatrixXi support) {
  GroundTruth gt{std::move(A_true), std::move(support), {}};
  for (Eigen::Index j = 0; j < gt.support.rows(); ++j)
    if (gt.support.row(j).sum() == 0)
      gt.irrelevant_features.push_back(static_cast<int>(j));
  return gt;
}

}  // namespace detail

/// D1: the first 40% of features are irrelevant to every task; the rest are
/// used by every task. X entries are i.i.d. standard normal and
/// y = X alpha + noise with unit-variance noise.
inline std::pair<MultitaskDataset, GroundTruth> generate_d1(
    const SyntheticSpec& spec) {
  spec.validate();
  if (spec.pattern != Pattern::d1)
    throw std::invalid_argument("generate_d1: spec.pattern must be d1");
  const int d = spec.features, T = spec.tasks;
  const int zero_rows = static_cast<int>(0.4 * d);
  Eigen::MatrixXi support = Eigen::MatrixXi::Zero(d, T);
  support.bottomRows(d - zero_rows).setOnes();

  Rng root(spec.seed);
  Rng weight_rng = root.fork(1);
  Rng data_rng = root.fork(2);
  Matrix A_true = Matrix::Zero(d, T);
  detail::fill_weights(A_true, support, spec.weight_scale, weight_rng);
  auto data = detail::sample_dataset(A_true, spec.examples_per_task, data_rng);
  return {std::move(data),
          detail::finish_truth(std::move(A_true), std::move(support))};
}

/// Feature layout of the d2 staircase, exposed for tests and documentation.
/// Rows 0..4 are irrelevant, rows 5..14 are common to all tasks, and the
/// remaining d-15 rows alternate per-group exclusive blocks with 7-feature
/// overlap blocks shared by neighboring groups:
///   [excl g0][overlap g0-g1][excl g1][overlap g1-g2]...[excl g_{G-1}]
/// Exclusive block sizes split the leftover evenly, first blocks get the
/// remainder.
struct StaircaseLayout {
  int zero_rows = 5;
  int common_rows = 10;
  int overlap = 7;
  std::vector<int> group_sizes;       // tasks per group
  std::vector<int> exclusive_sizes;   // features exclusive to each group

  static StaircaseLayout plan(int tasks, int features, int groups) {
    if (groups < 2)
      throw std::invalid_argument("staircase layout needs >= 2 groups");
    if (tasks < groups)
      throw std::invalid_argument(
          "staircase layout needs at least one task per group (T >= " +
          std::to_string(groups) + ")");
    StaircaseLayout lay;
    lay.group_sizes = detail::split_into_groups(tasks, groups);
    const int staircase = features - lay.zero_rows - lay.common_rows;
    const int exclusive_total = staircase - lay.overlap * (groups - 1);
    if (exclusive_total < 0)
      throw std::invalid_argument(
          "staircase layout infeasible: need >= " +
          std::to_string(lay.zero_rows + lay.common_rows +
                         lay.overlap * (groups - 1)) +
          " features");
    lay.exclusive_sizes = detail::split_into_groups(exclusive_total, groups);
    return lay;
  }
};

/// D2: 5 features irrelevant everywhere, 10 used by all tasks, and the rest
/// arranged in a staircase where neighboring task groups share exactly 7
/// features beyond the common 10 and non-neighboring groups share none.
inline std::pair<MultitaskDataset, GroundTruth> generate_d2(
    const SyntheticSpec& spec) {
  spec.validate();
  if (spec.pattern != Pattern::d2)
    throw std::invalid_argument("generate_d2: spec.pattern must be d2");
  const int d = spec.features, T = spec.tasks, G = spec.groups;
  const StaircaseLayout lay = StaircaseLayout::plan(T, d, G);

  std::vector<int> group_of_task;
  for (int g = 0; g < G; ++g)
    group_of_task.insert(group_of_task.end(), lay.group_sizes[g], g);

  Eigen::MatrixXi support = Eigen::MatrixXi::Zero(d, T);
  auto mark_group = [&](int row, int g) {
    for (int t = 0; t < T; ++t)
      if (group_of_task[t] == g) support(row, t) = 1;
  };
  for (int j = lay.zero_rows; j < lay.zero_rows + lay.common_rows; ++j)
    support.row(j).setOnes();
  int row = lay.zero_rows + lay.common_rows;
  for (int g = 0; g < G; ++g) {
    for (int i = 0; i < lay.exclusive_sizes[g]; ++i) mark_group(row++, g);
    if (g + 1 < G)
      for (int i = 0; i < lay.overlap; ++i) {
        mark_group(row, g);
        mark_group(row, g + 1);
        ++row;
      }
  }

  Rng root(spec.seed);
  Rng weight_rng = root.fork(1);
  Rng data_rng = root.fork(2);
  Matrix A_true = Matrix::Zero(d, T);
  detail::fill_weights(A_true, support, spec.weight_scale, weight_rng);
  auto data = detail::sample_dataset(A_true, spec.examples_per_task, data_rng);
  return {std::move(data),
          detail::finish_truth(std::move(A_true), std::move(support))};
}

inline std::pair<MultitaskDataset, GroundTruth> generate(
    const SyntheticSpec& spec) {
  return spec.pattern == Pattern::d1 ? generate_d1(spec) : generate_d2(spec);
}

}  // namespace mmtfl

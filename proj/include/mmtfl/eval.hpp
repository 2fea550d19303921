#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmtfl/datagen.hpp"
#include "mmtfl/optimizer.hpp"
#include "mmtfl/parallel.hpp"
#include "mmtfl/rng.hpp"
#include "mmtfl/types.hpp"

namespace mmtfl {

/// Coefficient of determination: 1 - SS_res / SS_tot.
inline double r_squared(const Vector& y_true, const Vector& y_pred) {
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument("r_squared: length mismatch");
  if (y_true.size() < 2)
    throw std::invalid_argument("r_squared: need at least 2 examples");
  const double mean = y_true.mean();
  const double ss_tot = (y_true.array() - mean).matrix().squaredNorm();
  if (ss_tot == 0.0)
    throw std::invalid_argument("r_squared: y_true is constant");
  const double ss_res = (y_true - y_pred).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

/// F1 = 2PR/(P+R) over {-1,+1} labels; 0 when no true positive exists.
inline double f1_score(const Vector& y_true, const Vector& y_pred) {
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument("f1_score: length mismatch");
  detail::require_pm1_labels(y_true);
  detail::require_pm1_labels(y_pred);
  int tp = 0, fp = 0, fn = 0, pos = 0;
  for (Eigen::Index i = 0; i < y_true.size(); ++i) {
    const bool t = y_true[i] > 0, p = y_pred[i] > 0;
    pos += t;
    tp += t && p;
    fp += !t && p;
    fn += t && !p;
  }
  if (pos == 0)
    throw std::invalid_argument("f1_score: y_true has no positives");
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / (tp + fp);
  const double recall = static_cast<double>(tp) / (tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

namespace detail {

inline std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[rng.below(static_cast<std::uint64_t>(i + 1))]);
  return idx;
}

inline TaskData take_rows(const TaskData& task,
                          const std::vector<Eigen::Index>& rows) {
  TaskData out;
  out.task_id = task.task_id;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), task.X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = task.X.row(rows[i]);
    out.y[static_cast<Eigen::Index>(i)] = task.y[rows[i]];
  }
  return out;
}

}  // namespace detail

/// Per-task independent split without replacement; the train side gets
/// round(fraction * examples). Deterministic in the seed.
inline std::pair<MultitaskDataset, MultitaskDataset> random_split(
    const MultitaskDataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || !(fraction < 1.0))
    throw std::invalid_argument("random_split: fraction must be in (0,1)");
  Rng root(seed);
  MultitaskDataset train, test;
  for (std::size_t t = 0; t < data.tasks.size(); ++t) {
    const TaskData& task = data.tasks[t];
    const Eigen::Index n = task.X.rows();
    const auto n_train = static_cast<Eigen::Index>(std::llround(fraction * n));
    if (n_train < 2)
      throw std::invalid_argument(
          "random_split: task " + task.task_id + " retains " +
          std::to_string(n_train) + " training examples (< 2)");
    if (n - n_train < 1)
      throw std::invalid_argument("random_split: task " + task.task_id +
                                  " has no test examples");
    Rng task_rng = root.fork(t);
    const auto idx = detail::shuffled_indices(n, task_rng);
    train.tasks.push_back(
        detail::take_rows(task, {idx.begin(), idx.begin() + n_train}));
    test.tasks.push_back(
        detail::take_rows(task, {idx.begin() + n_train, idx.end()}));
  }
  return {std::move(train), std::move(test)};
}

struct MethodSpec {
  std::string name;
  bool stl = false;
  int p = 2;
  int k = 2;

  static MethodSpec single_task() { return {"STL", true, 2, 2}; }
  static MethodSpec cell(int p, int k) {
    return {"MMTFL(" + std::to_string(p) + "," + std::to_string(k) + ")",
            false, p, k};
  }
};

inline MethodSpec method_from_string(const std::string& s) {
  if (s == "STL") return MethodSpec::single_task();
  for (int p : {1, 2})
    for (int k : {1, 2})
      if (s == MethodSpec::cell(p, k).name) return MethodSpec::cell(p, k);
  throw std::invalid_argument("unknown method: " + s +
                              " (expected STL or MMTFL(p,k) with p,k in 1,2)");
}

struct ExperimentPlan {
  std::vector<double> train_fractions{0.25, 0.33, 0.5};
  int repeats = 15;
  int cv_folds = 3;
  std::vector<MethodSpec> methods{
      MethodSpec::single_task(), MethodSpec::cell(2, 2),
      MethodSpec::cell(1, 1), MethodSpec::cell(2, 1), MethodSpec::cell(1, 2)};
  /// (gamma1, gamma2) candidates; defaults to the logarithmic grid
  /// 10^-3 .. 10^2 in both coordinates.
  std::vector<std::pair<double, double>> gamma_grid = default_gamma_grid();
  Loss loss = Loss::least_squares;
  FitOptions fit_options;

  static std::vector<std::pair<double, double>> default_gamma_grid() {
    std::vector<std::pair<double, double>> grid;
    for (int a = -3; a <= 2; ++a)
      for (int b = -3; b <= 2; ++b)
        grid.emplace_back(std::pow(10.0, a), std::pow(10.0, b));
    return grid;
  }

  void validate() const {
    for (double f : train_fractions)
      if (!(f > 0.0) || !(f < 1.0))
        throw std::invalid_argument("plan: fractions must be in (0,1)");
    if (repeats < 1) throw std::invalid_argument("plan: repeats must be >= 1");
    if (cv_folds < 2)
      throw std::invalid_argument("plan: cv_folds must be >= 2");
    if (methods.empty()) throw std::invalid_argument("plan: no methods");
    if (gamma_grid.empty()) throw std::invalid_argument("plan: empty grid");
  }
};

namespace detail {

inline RegularizerSpec spec_for(const MethodSpec& method, double gamma1,
                                double gamma2, Loss loss) {
  return RegularizerSpec{method.p, method.k, gamma1, gamma2, loss};
}

inline FitResult fit_method(const MultitaskDataset& train,
                            const MethodSpec& method,
                            const RegularizerSpec& spec,
                            const FitOptions& base) {
  FitOptions opts = base;
  opts.freeze_c = method.stl;
  return mmtfl::fit(train, spec, opts);
}

/// Mean over tasks of the per-task metric on held-out data. Classification
/// predicts the sign of the linear score; a score of exactly 0 counts as +1.
inline double score_model(const Decomposition& dec,
                          const MultitaskDataset& test, Loss loss) {
  const Matrix A = dec.weights();
  double total = 0.0;
  for (Eigen::Index t = 0; t < test.task_count(); ++t) {
    const Vector scores = test.tasks[t].X * A.col(t);
    if (loss == Loss::least_squares) {
      total += r_squared(test.tasks[t].y, scores);
    } else {
      Vector labels(scores.size());
      for (Eigen::Index i = 0; i < scores.size(); ++i)
        labels[i] = scores[i] >= 0.0 ? 1.0 : -1.0;
      total += f1_score(test.tasks[t].y, labels);
    }
  }
  return total / static_cast<double>(test.task_count());
}

// Per-task fold assignment: shuffled indices dealt round-robin into folds.
inline std::vector<std::vector<Eigen::Index>> fold_assignment(Eigen::Index n,
                                                              int folds,
                                                              Rng& rng) {
  const auto idx = shuffled_indices(n, rng);
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(folds));
  for (Eigen::Index i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i % folds)].push_back(
        idx[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace detail

/// Grid search by k-fold cross validation inside the training data. Returns
/// the (gamma1, gamma2) pair with the best mean fold metric; exact ties go to
/// the more strongly regularized pair (larger gamma1 + gamma2). For the
/// single-task baseline only gamma1 matters, so the grid is deduplicated on
/// it. Throws if every grid point fails, listing the per-fold errors.
inline std::pair<double, double> cross_validate(const MultitaskDataset& train,
                                                const ExperimentPlan& plan,
                                                const MethodSpec& method,
                                                std::uint64_t seed,
                                                unsigned jobs = 1) {
  plan.validate();
  train.validate();
  std::vector<std::pair<double, double>> grid = plan.gamma_grid;
  if (method.stl) {
    std::vector<std::pair<double, double>> dedup;
    for (const auto& g : grid) {
      bool seen = false;
      for (const auto& h : dedup) seen |= h.first == g.first;
      if (!seen) dedup.emplace_back(g.first, 1.0);
    }
    grid = std::move(dedup);
  }

  Rng root(seed);
  std::vector<std::vector<std::vector<Eigen::Index>>> folds_per_task;
  for (std::size_t t = 0; t < train.tasks.size(); ++t) {
    Rng task_rng = root.fork(t);
    folds_per_task.push_back(detail::fold_assignment(
        train.tasks[t].X.rows(), plan.cv_folds, task_rng));
  }
  // materialize the fold splits once; grid points share them read-only
  std::vector<std::pair<MultitaskDataset, MultitaskDataset>> splits;
  for (int fold = 0; fold < plan.cv_folds; ++fold) {
    MultitaskDataset fit_part, val_part;
    for (std::size_t t = 0; t < train.tasks.size(); ++t) {
      std::vector<Eigen::Index> fit_rows;
      for (int f = 0; f < plan.cv_folds; ++f)
        if (f != fold)
          fit_rows.insert(fit_rows.end(),
                          folds_per_task[t][static_cast<std::size_t>(f)].begin(),
                          folds_per_task[t][static_cast<std::size_t>(f)].end());
      fit_part.tasks.push_back(detail::take_rows(train.tasks[t], fit_rows));
      val_part.tasks.push_back(detail::take_rows(
          train.tasks[t], folds_per_task[t][static_cast<std::size_t>(fold)]));
    }
    splits.emplace_back(std::move(fit_part), std::move(val_part));
  }

  const auto folds = static_cast<std::size_t>(plan.cv_folds);
  const std::size_t cells = grid.size() * folds;
  std::vector<double> cell_score(cells,
                                 -std::numeric_limits<double>::infinity());
  std::vector<std::string> cell_error(cells);
  parallel_for(cells, jobs, [&](std::size_t i) {
    const std::size_t g = i / folds;
    const std::size_t fold = i % folds;
    try {
      const RegularizerSpec spec = detail::spec_for(
          method, grid[g].first, grid[g].second, plan.loss);
      const FitResult fr = detail::fit_method(splits[fold].first, method, spec,
                                              plan.fit_options);
      cell_score[i] =
          detail::score_model(fr.decomposition, splits[fold].second, plan.loss);
    } catch (const std::exception& e) {
      cell_error[i] = e.what();
    }
  });

  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t best_g = grid.size();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    bool ok = true;
    for (std::size_t f = 0; f < folds; ++f) {
      if (!cell_error[g * folds + f].empty()) ok = false;
      sum += cell_score[g * folds + f];
    }
    if (!ok) continue;
    const double score = sum / static_cast<double>(folds);
    const bool better =
        best_g == grid.size() || score > best_score ||
        (score == best_score && grid[g].first + grid[g].second >
                                    grid[best_g].first + grid[best_g].second);
    if (better) {
      best_score = score;
      best_g = g;
    }
  }
  if (best_g == grid.size()) {
    std::string msg = "cross_validate: every grid point failed:";
    for (std::size_t i = 0; i < cells; ++i)
      if (!cell_error[i].empty())
        msg += "\n  [gamma1=" + std::to_string(grid[i / folds].first) +
               ", gamma2=" + std::to_string(grid[i / folds].second) +
               ", fold " + std::to_string(i % folds) + "] " + cell_error[i];
    throw std::runtime_error(msg);
  }
  return grid[best_g];
}

struct ReportRow {
  std::string dataset;
  std::string method;
  double fraction = 0.0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();
  int repeats = 0;
  int failures = 0;
};

struct ExperimentReport {
  std::string metric;  // "r_squared" or "f1"
  std::vector<ReportRow> rows;
};

struct NamedDataset {
  std::string name;
  MultitaskDataset data;
};

/// The repeated-split benchmark: for every (dataset, fraction, method) cell,
/// repeat `repeats` random splits, tune gammas by cross validation on the
/// train side, refit on the whole train side, and score the test side.
/// Rows report mean and sample standard deviation over the repeats. Fit
/// failures are counted per cell instead of aborting the run.
inline ExperimentReport run_benchmark(const std::vector<NamedDataset>& datasets,
                                      const ExperimentPlan& plan,
                                      std::uint64_t seed, unsigned jobs = 1) {
  plan.validate();
  if (datasets.empty())
    throw std::invalid_argument("run_benchmark: no datasets");
  ExperimentReport report;
  report.metric = plan.loss == Loss::least_squares ? "r_squared" : "f1";
  for (std::size_t ds = 0; ds < datasets.size(); ++ds) {
    for (std::size_t fi = 0; fi < plan.train_fractions.size(); ++fi) {
      const double fraction = plan.train_fractions[fi];
      std::vector<std::vector<double>> metric_values(plan.methods.size());
      std::vector<int> failures(plan.methods.size(), 0);
      for (int rep = 0; rep < plan.repeats; ++rep) {
        const std::uint64_t rep_seed =
            mix_seed(mix_seed(mix_seed(seed, ds), fi), static_cast<std::uint64_t>(rep));
        const auto [train, test] =
            random_split(datasets[ds].data, fraction, mix_seed(rep_seed, 0));
        for (std::size_t m = 0; m < plan.methods.size(); ++m) {
          const MethodSpec& method = plan.methods[m];
          try {
            const auto [g1, g2] = cross_validate(
                train, plan, method, mix_seed(rep_seed, 1 + m), jobs);
            const RegularizerSpec spec =
                detail::spec_for(method, g1, g2, plan.loss);
            const FitResult fr =
                detail::fit_method(train, method, spec, plan.fit_options);
            metric_values[m].push_back(
                detail::score_model(fr.decomposition, test, plan.loss));
          } catch (const std::exception&) {
            ++failures[m];
          }
        }
      }
      for (std::size_t m = 0; m < plan.methods.size(); ++m) {
        ReportRow row;
        row.dataset = datasets[ds].name;
        row.method = plan.methods[m].name;
        row.fraction = fraction;
        row.repeats = plan.repeats;
        row.failures = failures[m];
        const auto& vals = metric_values[m];
        if (!vals.empty()) {
          const double mean =
              std::accumulate(vals.begin(), vals.end(), 0.0) /
              static_cast<double>(vals.size());
          double ss = 0.0;
          for (double v : vals) ss += (v - mean) * (v - mean);
          row.mean = mean;
          row.stddev = vals.size() > 1
                           ? std::sqrt(ss / static_cast<double>(vals.size() - 1))
                           : 0.0;
        }
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

struct SupportRecovery {
  double precision = 0.0;
  double recall = 0.0;
};

/// Treats feature j as selected when c_j >= threshold * max(c) and scores the
/// selection against rows with any true support. An all-zero c selects
/// nothing: precision 1 (vacuous), recall 0.
inline SupportRecovery support_recovery_metrics(const Vector& c,
                                                const GroundTruth& truth,
                                                double threshold) {
  if (!(threshold > 0.0) || !(threshold < 1.0))
    throw std::invalid_argument(
        "support_recovery_metrics: threshold must be in (0,1)");
  if (c.size() != truth.support.rows())
    throw std::invalid_argument(
        "support_recovery_metrics: c length != truth rows");
  const double cmax = c.maxCoeff();
  if (cmax <= 0.0) return {1.0, 0.0};
  int selected = 0, relevant = 0, hit = 0;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    const bool sel = c[j] >= threshold * cmax;
    const bool rel = truth.support.row(j).sum() > 0;
    selected += sel;
    relevant += rel;
    hit += sel && rel;
  }
  SupportRecovery out;
  out.precision = selected == 0 ? 1.0 : static_cast<double>(hit) / selected;
  out.recall = relevant == 0 ? 1.0 : static_cast<double>(hit) / relevant;
  return out;
}

}  // namespace mmtfl

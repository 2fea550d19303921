#pragma once

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmtfl/loss.hpp"

namespace mmtfl {

/// One prediction task: design matrix X (examples x features) and targets y
/// (real-valued for regression, {-1,+1} for classification).
struct TaskData {
  Matrix X;
  Vector y;
  std::string task_id;
};

/// A collection of tasks over a shared feature space.
struct MultitaskDataset {
  std::vector<TaskData> tasks;

  Eigen::Index task_count() const {
    return static_cast<Eigen::Index>(tasks.size());
  }

  Eigen::Index feature_count() const {
    return tasks.empty() ? 0 : tasks.front().X.cols();
  }

  // All tasks share the feature count, every task has at least one example,
  // and all entries are finite.
  void validate() const {
    if (tasks.empty())
      throw std::invalid_argument("dataset has no tasks");
    const Eigen::Index d = tasks.front().X.cols();
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const TaskData& task = tasks[t];
      const std::string where =
          "task " + (task.task_id.empty() ? std::to_string(t) : task.task_id);
      if (task.X.cols() != d)
        throw std::invalid_argument(where + ": feature count " +
                                    std::to_string(task.X.cols()) +
                                    " != shared " + std::to_string(d));
      if (task.X.rows() < 1)
        throw std::invalid_argument(where + ": no examples");
      if (task.X.rows() != task.y.size())
        throw std::invalid_argument(where + ": X rows != y length");
      if (!task.X.allFinite() || !task.y.allFinite())
        throw std::invalid_argument(where + ": non-finite entries");
    }
  }
};

/// Model parameters factored as A = diag(c) * B: c gates features across all
/// tasks (nonnegative, length d), column t of B holds task t's own weights.
struct Decomposition {
  Vector c;
  Matrix B;

  Matrix weights() const { return c.asDiagonal() * B; }

  void validate() const {
    if (c.size() != B.rows())
      throw std::invalid_argument("decomposition: c length != B rows");
    if (!c.allFinite() || !B.allFinite())
      throw std::invalid_argument("decomposition: non-finite entries");
    if ((c.array() < 0.0).any())
      throw std::invalid_argument("decomposition: negative entry in c");
  }
};

struct FitResult {
  Decomposition decomposition;
  /// Problem-(1)-style objective after each across-task update.
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  /// Final max_{j,t} |change in alpha_j^t| between outer iterations.
  double max_delta = std::numeric_limits<double>::infinity();
  /// Worst optimality residual over all per-task subproblem solves.
  double worst_subproblem_kkt = 0.0;
  bool subproblems_converged = true;
};

}  // namespace mmtfl

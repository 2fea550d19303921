#pragma once

#include <Eigen/Dense>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmtfl/datagen.hpp"
#include "mmtfl/eval.hpp"
#include "mmtfl/optimizer.hpp"
#include "mmtfl/types.hpp"
#include "mmtfl/verify.hpp"

namespace mmtfl {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Bad command usage or configuration (CLI exit code 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unreadable or inconsistent data files (CLI exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace io_detail {

// Fixed 17-significant-digit formatting: round-trips exactly and re-saving a
// loaded file reproduces it byte for byte.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("bad numeric field '" + s + "' in " + where);
  }
}

}  // namespace io_detail

/// FNV-1a 64-bit over the canonical (sorted-key) JSON dump; stamped into
/// every output manifest so artifacts can be traced to their configuration.
inline std::string config_hash(const json& config) {
  const std::string dump = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

// ---------------------------------------------------------------------------
// plain numeric CSV (no header): one row per line
// ---------------------------------------------------------------------------

inline void write_matrix_csv(const fs::path& path, const Matrix& m) {
  std::ostringstream out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << io_detail::format_double(m(i, j));
    }
    out << '\n';
  }
  io_detail::write_text(path, out.str());
}

inline Matrix read_matrix_csv(const fs::path& path) {
  const std::string text = io_detail::read_text(path);
  std::istringstream in(text);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = io_detail::split_line(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields)
      row.push_back(io_detail::parse_double(f, path.string()));
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError("ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return m;
}

inline void write_vector_csv(const fs::path& path, const Vector& v) {
  write_matrix_csv(path, v);
}

inline Vector read_vector_csv(const fs::path& path) {
  const Matrix m = read_matrix_csv(path);
  if (m.cols() != 1) throw DataError("expected one column in " + path.string());
  return m.col(0);
}

// ---------------------------------------------------------------------------
// dataset directory: task_<t>.csv with header feature_1..feature_d,target,
// manifest.json binding them, ground_truth_{A,support}.csv when synthetic
// ---------------------------------------------------------------------------

inline void write_task_csv(const fs::path& path, const TaskData& task) {
  std::ostringstream out;
  for (Eigen::Index j = 0; j < task.X.cols(); ++j)
    out << "feature_" << (j + 1) << ',';
  out << "target\n";
  for (Eigen::Index i = 0; i < task.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < task.X.cols(); ++j)
      out << io_detail::format_double(task.X(i, j)) << ',';
    out << io_detail::format_double(task.y[i]) << '\n';
  }
  io_detail::write_text(path, out.str());
}

inline TaskData read_task_csv(const fs::path& path) {
  const std::string text = io_detail::read_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw DataError("empty task file: " + path.string());
  const auto header = io_detail::split_line(line);
  if (header.size() < 2 || header.back() != "target")
    throw DataError("task file header must end with 'target': " +
                    path.string());
  for (std::size_t j = 0; j + 1 < header.size(); ++j)
    if (header[j] != "feature_" + std::to_string(j + 1))
      throw DataError("unexpected column '" + header[j] + "' in " +
                      path.string());
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = io_detail::split_line(line);
    if (static_cast<Eigen::Index>(fields.size()) != d + 1)
      throw DataError("row width mismatch in " + path.string());
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields)
      row.push_back(io_detail::parse_double(f, path.string()));
    rows.push_back(std::move(row));
  }
  TaskData task;
  task.task_id = path.stem().string();
  task.X.resize(static_cast<Eigen::Index>(rows.size()), d);
  task.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j)
      task.X(static_cast<Eigen::Index>(i), j) =
          rows[i][static_cast<std::size_t>(j)];
    task.y[static_cast<Eigen::Index>(i)] = rows[i][static_cast<std::size_t>(d)];
  }
  return task;
}

inline void require_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir))
      throw DataError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw DataError(dir.string() +
                      " is not empty; pass --force to overwrite");
  } else {
    fs::create_directories(dir);
  }
}

inline void save_dataset(const fs::path& dir, const MultitaskDataset& data,
                         const GroundTruth* truth, json manifest_extra,
                         bool force) {
  data.validate();
  require_output_dir(dir, force);
  json manifest = std::move(manifest_extra);
  manifest["tasks"] = data.tasks.size();
  manifest["features"] = data.feature_count();
  json files = json::array();
  json examples = json::array();
  for (std::size_t t = 0; t < data.tasks.size(); ++t) {
    const std::string name = "task_" + std::to_string(t) + ".csv";
    write_task_csv(dir / name, data.tasks[t]);
    files.push_back(name);
    examples.push_back(data.tasks[t].X.rows());
  }
  manifest["task_files"] = files;
  manifest["examples_per_task"] = examples;
  if (truth != nullptr) {
    write_matrix_csv(dir / "ground_truth_A.csv", truth->A_true);
    write_matrix_csv(dir / "ground_truth_support.csv",
                     truth->support.cast<double>());
    manifest["ground_truth"] = {"ground_truth_A.csv",
                                "ground_truth_support.csv"};
  }
  manifest["config_hash"] = config_hash(manifest);
  io_detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline MultitaskDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(io_detail::read_text(manifest_path));
  } catch (const json::exception& e) {
    throw DataError("bad manifest " + manifest_path.string() + ": " +
                    e.what());
  }
  if (!manifest.contains("task_files"))
    throw DataError("manifest missing task_files: " + manifest_path.string());
  MultitaskDataset data;
  std::vector<std::string> problems;
  for (const auto& name : manifest["task_files"]) {
    try {
      data.tasks.push_back(read_task_csv(dir / name.get<std::string>()));
    } catch (const std::exception& e) {
      problems.emplace_back(e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "failed to load dataset " + dir.string() + ":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  try {
    data.validate();
  } catch (const std::exception& e) {
    throw DataError("inconsistent dataset " + dir.string() + ": " + e.what());
  }
  return data;
}

inline GroundTruth load_ground_truth(const fs::path& dir) {
  GroundTruth gt;
  gt.A_true = read_matrix_csv(dir / "ground_truth_A.csv");
  const Matrix support = read_matrix_csv(dir / "ground_truth_support.csv");
  gt.support = support.cast<int>();
  for (Eigen::Index j = 0; j < gt.support.rows(); ++j)
    if (gt.support.row(j).sum() == 0)
      gt.irrelevant_features.push_back(static_cast<int>(j));
  return gt;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

inline std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "dataset,method,fraction,mean,std\n";
  for (const auto& r : report.rows)
    out << r.dataset << ',' << r.method << ','
        << io_detail::format_double(r.fraction) << ','
        << io_detail::format_double(r.mean) << ','
        << io_detail::format_double(r.stddev) << '\n';
  return out.str();
}

inline json report_to_json(const ExperimentReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"dataset", r.dataset},
                    {"method", r.method},
                    {"fraction", r.fraction},
                    {"mean", r.mean},
                    {"std", r.stddev},
                    {"repeats", r.repeats},
                    {"failures", r.failures}});
  return {{"metric", report.metric}, {"rows", rows}};
}

inline json verification_report_to_json(const VerificationReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks)
    checks.push_back({{"name", c.name},
                      {"pass", c.pass},
                      {"worst_residual", c.worst_residual},
                      {"trials", c.trials},
                      {"detail", c.detail}});
  return {{"seed", report.seed},
          {"sigma_exponent", report.sigma_exponent},
          {"all_pass", report.all_pass()},
          {"checks", checks}};
}

// ---------------------------------------------------------------------------
// run configuration: strict JSON with documented defaults
// ---------------------------------------------------------------------------

struct RunConfig {
  std::uint64_t seed = 0;
  bool seed_set = false;
  RegularizerSpec regularizer;
  FitOptions fit;
  ExperimentPlan plan;
  VerifySuiteOptions verify;
};

namespace io_detail {

inline void reject_unknown_keys(const json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok |= key == a;
    if (!ok)
      throw UsageError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("bad value for '") + key + "'");
  }
}

}  // namespace io_detail

/// Parses the single JSON document understood by every subcommand. All keys
/// are optional; unknown keys are rejected. See docs/FORMATS.md for the
/// schema and defaults.
inline RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw UsageError("config root must be a JSON object");
  io_detail::reject_unknown_keys(
      doc, {"seed", "regularizer", "fit", "plan", "verify"}, "config root");
  RunConfig cfg;
  if (doc.contains("seed")) {
    cfg.seed = io_detail::get_or<std::uint64_t>(doc, "seed", 0);
    cfg.seed_set = true;
  }
  if (doc.contains("regularizer")) {
    const json& r = doc.at("regularizer");
    io_detail::reject_unknown_keys(r, {"p", "k", "gamma1", "gamma2", "loss"},
                                   "regularizer");
    cfg.regularizer.p = io_detail::get_or<int>(r, "p", cfg.regularizer.p);
    cfg.regularizer.k = io_detail::get_or<int>(r, "k", cfg.regularizer.k);
    cfg.regularizer.gamma1 =
        io_detail::get_or<double>(r, "gamma1", cfg.regularizer.gamma1);
    cfg.regularizer.gamma2 =
        io_detail::get_or<double>(r, "gamma2", cfg.regularizer.gamma2);
    if (r.contains("loss"))
      cfg.regularizer.loss = loss_from_string(r.at("loss").get<std::string>());
    try {
      cfg.regularizer.validate();
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (doc.contains("fit")) {
    const json& f = doc.at("fit");
    io_detail::reject_unknown_keys(
        f, {"epsilon", "max_outer_iters", "solver_tol", "max_inner_iters"},
        "fit");
    cfg.fit.epsilon = io_detail::get_or<double>(f, "epsilon", cfg.fit.epsilon);
    cfg.fit.max_outer_iters =
        io_detail::get_or<int>(f, "max_outer_iters", cfg.fit.max_outer_iters);
    cfg.fit.solver.tol =
        io_detail::get_or<double>(f, "solver_tol", cfg.fit.solver.tol);
    cfg.fit.solver.max_inner_iters = io_detail::get_or<int>(
        f, "max_inner_iters", cfg.fit.solver.max_inner_iters);
    if (!(cfg.fit.epsilon > 0.0)) throw UsageError("fit.epsilon must be > 0");
  }
  if (doc.contains("plan")) {
    const json& p = doc.at("plan");
    io_detail::reject_unknown_keys(p,
                                   {"train_fractions", "repeats", "cv_folds",
                                    "methods", "gamma_grid", "loss"},
                                   "plan");
    if (p.contains("train_fractions"))
      cfg.plan.train_fractions =
          p.at("train_fractions").get<std::vector<double>>();
    cfg.plan.repeats = io_detail::get_or<int>(p, "repeats", cfg.plan.repeats);
    cfg.plan.cv_folds =
        io_detail::get_or<int>(p, "cv_folds", cfg.plan.cv_folds);
    if (p.contains("methods")) {
      cfg.plan.methods.clear();
      for (const auto& m : p.at("methods"))
        cfg.plan.methods.push_back(
            method_from_string(m.get<std::string>()));
    }
    if (p.contains("gamma_grid")) {
      cfg.plan.gamma_grid.clear();
      for (const auto& g : p.at("gamma_grid")) {
        if (!g.is_array() || g.size() != 2)
          throw UsageError("gamma_grid entries must be [gamma1, gamma2]");
        cfg.plan.gamma_grid.emplace_back(g.at(0).get<double>(),
                                         g.at(1).get<double>());
      }
    }
    if (p.contains("loss"))
      cfg.plan.loss = loss_from_string(p.at("loss").get<std::string>());
    try {
      cfg.plan.validate();
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (doc.contains("verify")) {
    const json& v = doc.at("verify");
    io_detail::reject_unknown_keys(
        v, {"bound_trials", "oracle_trials", "equivalence_fits"}, "verify");
    cfg.verify.bound_trials =
        io_detail::get_or<int>(v, "bound_trials", cfg.verify.bound_trials);
    cfg.verify.oracle_trials =
        io_detail::get_or<int>(v, "oracle_trials", cfg.verify.oracle_trials);
    cfg.verify.equivalence_fits = io_detail::get_or<int>(
        v, "equivalence_fits", cfg.verify.equivalence_fits);
  }
  cfg.plan.fit_options = cfg.fit;
  return cfg;
}

inline RunConfig load_run_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(io_detail::read_text(path));
  } catch (const json::exception& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " +
                     e.what());
  }
  return parse_run_config(doc);
}

inline json run_config_to_json(const RunConfig& cfg) {
  json methods = json::array();
  for (const auto& m : cfg.plan.methods) methods.push_back(m.name);
  json grid = json::array();
  for (const auto& g : cfg.plan.gamma_grid)
    grid.push_back({g.first, g.second});
  return {
      {"seed", cfg.seed},
      {"regularizer",
       {{"p", cfg.regularizer.p},
        {"k", cfg.regularizer.k},
        {"gamma1", cfg.regularizer.gamma1},
        {"gamma2", cfg.regularizer.gamma2},
        {"loss", to_string(cfg.regularizer.loss)}}},
      {"fit",
       {{"epsilon", cfg.fit.epsilon},
        {"max_outer_iters", cfg.fit.max_outer_iters},
        {"solver_tol", cfg.fit.solver.tol},
        {"max_inner_iters", cfg.fit.solver.max_inner_iters}}},
      {"plan",
       {{"train_fractions", cfg.plan.train_fractions},
        {"repeats", cfg.plan.repeats},
        {"cv_folds", cfg.plan.cv_folds},
        {"methods", methods},
        {"gamma_grid", grid},
        {"loss", to_string(cfg.plan.loss)}}},
      {"verify",
       {{"bound_trials", cfg.verify.bound_trials},
        {"oracle_trials", cfg.verify.oracle_trials},
        {"equivalence_fits", cfg.verify.equivalence_fits}}}};
}

}  // namespace mmtfl

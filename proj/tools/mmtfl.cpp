// Command-line surface for the multiplicative multitask feature learning
// library: synthetic data generation, model fitting, the repeated-split
// benchmark, the theory verification suite, and heatmap export.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmtfl/datagen.hpp"
#include "mmtfl/eval.hpp"
#include "mmtfl/io.hpp"
#include "mmtfl/optimizer.hpp"
#include "mmtfl/verify.hpp"

namespace {

using mmtfl::json;

// --seed beats the config seed, which beats the MMTFL_SEED environment
// variable; the default is 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           const mmtfl::RunConfig& cfg) {
  if (flag) return *flag;
  if (cfg.seed_set) return cfg.seed;
  if (const char* env = std::getenv("MMTFL_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw mmtfl::UsageError("MMTFL_SEED is not an integer: " +
                              std::string(env));
    }
  }
  return 0;
}

mmtfl::RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return mmtfl::RunConfig{};
  return mmtfl::load_run_config(path);
}

int cmd_generate(const std::string& pattern_name, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_flag,
                 const std::string& config_path, std::optional<int> tasks,
                 std::optional<int> examples, std::optional<int> features,
                 std::optional<double> weight_scale, std::optional<int> groups,
                 bool force) {
  const mmtfl::RunConfig cfg = load_config_or_default(config_path);
  mmtfl::SyntheticSpec spec =
      mmtfl::SyntheticSpec::defaults(mmtfl::pattern_from_string(pattern_name));
  spec.seed = resolve_seed(seed_flag, cfg);
  if (tasks) spec.tasks = *tasks;
  if (examples) spec.examples_per_task = *examples;
  if (features) spec.features = *features;
  if (weight_scale) spec.weight_scale = *weight_scale;
  if (groups) spec.groups = *groups;

  const auto [data, truth] = mmtfl::generate(spec);
  json manifest{{"pattern", mmtfl::to_string(spec.pattern)},
                {"seed", spec.seed},
                {"weight_scale", spec.weight_scale}};
  if (spec.pattern == mmtfl::Pattern::d2) {
    const auto layout =
        mmtfl::StaircaseLayout::plan(spec.tasks, spec.features, spec.groups);
    manifest["groups"] = spec.groups;
    manifest["group_sizes"] = layout.group_sizes;
    manifest["exclusive_feature_counts"] = layout.exclusive_sizes;
  }
  mmtfl::save_dataset(out_dir, data, &truth, manifest, force);
  std::cout << "wrote " << data.tasks.size() << " task files to " << out_dir
            << "\n";
  return 0;
}

int cmd_fit(const std::string& data_dir, const std::string& out_dir,
            const std::string& config_path, std::optional<int> p,
            std::optional<int> k, std::optional<double> gamma1,
            std::optional<double> gamma2, std::optional<std::string> loss,
            unsigned jobs, bool force) {
  mmtfl::RunConfig cfg = load_config_or_default(config_path);
  if (p) cfg.regularizer.p = *p;
  if (k) cfg.regularizer.k = *k;
  if (gamma1) cfg.regularizer.gamma1 = *gamma1;
  if (gamma2) cfg.regularizer.gamma2 = *gamma2;
  if (loss) cfg.regularizer.loss = mmtfl::loss_from_string(*loss);
  try {
    cfg.regularizer.validate();
  } catch (const std::exception& e) {
    throw mmtfl::UsageError(e.what());
  }

  const mmtfl::MultitaskDataset data = mmtfl::load_dataset(data_dir);
  mmtfl::FitOptions opts = cfg.fit;
  opts.jobs = jobs;
  const mmtfl::FitResult result = mmtfl::fit(data, cfg.regularizer, opts);

  mmtfl::require_output_dir(out_dir, force);
  const mmtfl::fs::path out(out_dir);
  mmtfl::write_vector_csv(out / "c.csv", result.decomposition.c);
  mmtfl::write_matrix_csv(out / "B.csv", result.decomposition.B);
  mmtfl::write_matrix_csv(out / "A.csv", result.decomposition.weights());
  mmtfl::Vector trace(
      static_cast<Eigen::Index>(result.objective_trace.size()));
  for (Eigen::Index i = 0; i < trace.size(); ++i)
    trace[i] = result.objective_trace[static_cast<std::size_t>(i)];
  mmtfl::write_vector_csv(out / "objective_trace.csv", trace);

  const json config_json = mmtfl::run_config_to_json(cfg);
  json meta{{"iterations", result.iterations},
            {"converged", result.converged},
            {"max_delta", result.max_delta},
            {"worst_subproblem_kkt", result.worst_subproblem_kkt},
            {"subproblems_converged", result.subproblems_converged},
            {"config", config_json},
            {"config_hash", mmtfl::config_hash(config_json)}};
  mmtfl::io_detail::write_text(out / "result.json", meta.dump(2) + "\n");
  std::cout << (result.converged ? "converged" : "did not converge") << " in "
            << result.iterations << " outer iterations (max_delta "
            << result.max_delta << ")\n";
  return 0;
}

int cmd_benchmark(const std::vector<std::string>& data_dirs,
                  const std::string& out_dir, const std::string& config_path,
                  std::optional<std::uint64_t> seed_flag, unsigned jobs,
                  bool force) {
  mmtfl::RunConfig cfg = load_config_or_default(config_path);
  const std::uint64_t seed = resolve_seed(seed_flag, cfg);
  std::vector<mmtfl::NamedDataset> datasets;
  for (const auto& dir : data_dirs) {
    mmtfl::NamedDataset ds;
    ds.name = mmtfl::fs::path(dir).filename().string();
    if (ds.name.empty()) ds.name = dir;
    ds.data = mmtfl::load_dataset(dir);
    datasets.push_back(std::move(ds));
  }
  const mmtfl::ExperimentReport report =
      mmtfl::run_benchmark(datasets, cfg.plan, seed, jobs);

  mmtfl::require_output_dir(out_dir, force);
  const mmtfl::fs::path out(out_dir);
  mmtfl::io_detail::write_text(out / "report.csv",
                               mmtfl::report_to_csv(report));
  cfg.seed = seed;
  cfg.seed_set = true;
  const json config_json = mmtfl::run_config_to_json(cfg);
  json doc = mmtfl::report_to_json(report);
  doc["config"] = config_json;
  doc["config_hash"] = mmtfl::config_hash(config_json);
  mmtfl::io_detail::write_text(out / "report.json", doc.dump(2) + "\n");

  int total = 0, failed = 0;
  for (const auto& row : report.rows) {
    total += row.repeats;
    failed += row.failures;
  }
  std::cout << "benchmark finished: " << report.rows.size() << " report rows, "
            << failed << "/" << total << " cell fits failed\n";
  return failed == total && total > 0 ? 2 : 0;
}

int cmd_verify(const std::string& out_dir, const std::string& config_path,
               std::optional<std::uint64_t> seed_flag, bool use_paper_exponent,
               unsigned jobs, bool force) {
  mmtfl::RunConfig cfg = load_config_or_default(config_path);
  const std::uint64_t seed = resolve_seed(seed_flag, cfg);
  mmtfl::VerifySuiteOptions opts = cfg.verify;
  opts.jobs = jobs;
  opts.sigma_exponent = use_paper_exponent
                            ? mmtfl::SigmaExponent::as_published
                            : mmtfl::SigmaExponent::derived;
  const mmtfl::VerificationReport report =
      mmtfl::run_verification_suite(seed, opts);

  json doc = mmtfl::verification_report_to_json(report);
  cfg.seed = seed;
  cfg.seed_set = true;
  const json config_json = mmtfl::run_config_to_json(cfg);
  doc["config"] = config_json;
  doc["config_hash"] = mmtfl::config_hash(config_json);
  if (!out_dir.empty()) {
    mmtfl::require_output_dir(out_dir, force);
    mmtfl::io_detail::write_text(mmtfl::fs::path(out_dir) / "verification.json",
                                 doc.dump(2) + "\n");
  }
  for (const auto& check : report.checks)
    std::cout << (check.pass ? "[pass] " : "[FAIL] ") << check.name
              << " (worst residual " << check.worst_residual << ")\n";
  std::cout << (report.all_pass() ? "all checks passed"
                                  : "verification FAILED")
            << "\n";
  return report.all_pass() ? 0 : 3;
}

int cmd_export_heatmap(const std::string& fit_dir, const std::string& out_csv) {
  const mmtfl::fs::path a_path = mmtfl::fs::path(fit_dir) / "A.csv";
  if (!mmtfl::fs::exists(a_path))
    throw mmtfl::DataError("missing fit artifact: " + a_path.string());
  const mmtfl::Matrix A = mmtfl::read_matrix_csv(a_path);
  // tasks as rows, features as columns
  mmtfl::write_matrix_csv(out_csv, A.cwiseAbs().transpose());
  std::cout << "wrote " << A.cols() << "x" << A.rows() << " heatmap to "
            << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Multiplicative multitask feature learning: fits per-task linear models "
      "whose weights factor into a shared across-task gate and task-specific "
      "components."};
  app.require_subcommand(1);
  unsigned jobs = 0;
  app.add_option("--jobs", jobs,
                 "worker threads (0 = all available cores)");

  std::optional<std::uint64_t> seed;
  std::string config_path, out, pattern, data_dir, fit_dir;
  std::vector<std::string> data_dirs;
  std::optional<int> tasks, examples, features, groups, p, k;
  std::optional<double> weight_scale, gamma1, gamma2;
  std::optional<std::string> loss;
  bool force = false, use_paper_exponent = false;

  CLI::App* generate = app.add_subcommand(
      "generate", "generate a synthetic benchmark dataset");
  generate->add_option("--pattern", pattern, "d1 or d2")->required();
  generate->add_option("--out", out, "output directory")->required();
  generate->add_option("--seed", seed, "RNG seed");
  generate->add_option("--config", config_path, "JSON config file");
  generate->add_option("--tasks", tasks, "number of tasks");
  generate->add_option("--examples", examples, "examples per task");
  generate->add_option("--features", features, "feature count");
  generate->add_option("--weight-scale", weight_scale,
                       "scale of the nonzero true weights");
  generate->add_option("--groups", groups, "task groups (d2 staircase)");
  generate->add_flag("--force", force, "overwrite a non-empty directory");

  CLI::App* fit = app.add_subcommand("fit", "fit one model to a dataset");
  fit->add_option("--data", data_dir, "dataset directory")->required();
  fit->add_option("--out", out, "output directory")->required();
  fit->add_option("--config", config_path, "JSON config file");
  fit->add_option("--p", p, "exponent on the task-specific penalty (1 or 2)");
  fit->add_option("--k", k, "exponent on the across-task penalty (1 or 2)");
  fit->add_option("--gamma1", gamma1, "task-specific penalty weight");
  fit->add_option("--gamma2", gamma2, "across-task penalty weight");
  fit->add_option("--loss", loss, "least_squares or logistic");
  fit->add_flag("--force", force, "overwrite a non-empty directory");

  CLI::App* benchmark = app.add_subcommand(
      "benchmark", "repeated-split benchmark with cross-validated gammas");
  benchmark->add_option("--data", data_dirs, "dataset directories")
      ->required()
      ->expected(-1);
  benchmark->add_option("--out", out, "output directory")->required();
  benchmark->add_option("--config", config_path, "JSON config file");
  benchmark->add_option("--seed", seed, "RNG seed");
  benchmark->add_flag("--force", force, "overwrite a non-empty directory");

  CLI::App* verify = app.add_subcommand(
      "verify", "run the numerical certification suite");
  verify->add_option("--out", out, "output directory for the report");
  verify->add_option("--config", config_path, "JSON config file");
  verify->add_option("--seed", seed, "RNG seed");
  verify->add_flag("--use-paper-exponent", use_paper_exponent,
                   "use the as-published sigma exponent variant instead of "
                   "the derived one (demonstrates the discrepancy)");
  verify->add_flag("--force", force, "overwrite a non-empty directory");

  CLI::App* heatmap = app.add_subcommand(
      "export-heatmap", "export |A| with tasks as rows for plotting");
  heatmap->add_option("--fit", fit_dir, "directory written by fit")
      ->required();
  heatmap->add_option("--out", out, "output CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (generate->parsed())
      return cmd_generate(pattern, out, seed, config_path, tasks, examples,
                          features, weight_scale, groups, force);
    if (fit->parsed())
      return cmd_fit(data_dir, out, config_path, p, k, gamma1, gamma2, loss,
                     jobs, force);
    if (benchmark->parsed())
      return cmd_benchmark(data_dirs, out, config_path, seed, jobs, force);
    if (verify->parsed())
      return cmd_verify(out, config_path, seed, use_paper_exponent, jobs,
                        force);
    if (heatmap->parsed()) return cmd_export_heatmap(fit_dir, out);
  } catch (const mmtfl::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mmtfl::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

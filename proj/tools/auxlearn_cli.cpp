// Command line front end: fitting, weight computation, scenario replication
// and the two selection procedures.  Exit codes: 0 success, 2 usage,
// 3 input/output, 4 numerical, 5 non-convergence.

#include <CLI11.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "auxlearn/auxlearn.hpp"

namespace fs = std::filesystem;
using namespace auxlearn;

namespace {

struct SchemaOptions {
  std::string input;
  std::string primary;
  std::vector<std::string> aux;
  std::vector<std::string> covariates;
  std::vector<std::string> binary;
};

void add_schema_options(CLI::App* cmd, SchemaOptions& opts) {
  cmd->add_option("--input", opts.input, "Input dataset CSV")->required();
  cmd->add_option("--primary", opts.primary, "Primary response column")
      ->required();
  cmd->add_option("--aux", opts.aux,
                  "Auxiliary response columns, comma separated")
      ->delimiter(',');
  cmd->add_option("--covariates", opts.covariates,
                  "Covariate columns (default: all remaining)")
      ->delimiter(',');
  cmd->add_option("--binary", opts.binary,
                  "Response columns holding 0/1 labels")
      ->delimiter(',');
}

// Any failure while reading inputs is reported as an I/O problem.
template <typename F>
auto load_phase(F&& f) {
  try {
    return f();
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(e.what());
  }
}

MultiTaskDataset load_from(const SchemaOptions& opts, bool all_binary) {
  DatasetSchema schema;
  schema.primary = opts.primary;
  schema.auxiliary = opts.aux;
  schema.covariates = opts.covariates;
  schema.binary = opts.binary;
  if (all_binary) {
    schema.binary.clear();
    schema.binary.push_back(opts.primary);
    for (const std::string& name : opts.aux) schema.binary.push_back(name);
  }
  return load_phase([&] { return load_dataset(opts.input, schema); });
}

fs::path prepare_output_dir(const std::string& dir) {
  fs::path path(dir);
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + dir + "': " +
                  ec.message());
  }
  return path;
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) s += sep;
    s += items[i];
  }
  return s;
}

template <typename T>
std::string join_numbers(const std::vector<T>& items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) s += ';';
    s += std::to_string(items[i]);
  }
  return s;
}

std::string schema_comment(const SchemaOptions& opts) {
  std::string s = "input=" + opts.input + " primary=" + opts.primary;
  s += " aux=" + join(opts.aux, ';');
  if (!opts.covariates.empty()) {
    s += " covariates=" + join(opts.covariates, ';');
  }
  if (!opts.binary.empty()) s += " binary=" + join(opts.binary, ';');
  return s;
}

void write_labeled_matrix(const fs::path& path, const Eigen::MatrixXd& m,
                          const std::string& comment,
                          const std::string& row_label_header,
                          const std::vector<std::string>& row_labels,
                          const std::vector<std::string>& column_names) {
  csv::Writer out(path);
  out.comment(comment);
  std::vector<std::string> cells;
  cells.push_back(row_label_header);
  for (const std::string& name : column_names) cells.push_back(name);
  out.row(cells);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    cells.clear();
    cells.push_back(row_labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      cells.push_back(csv::format_double(m(i, j)));
    }
    out.row(cells);
  }
  out.close();
}

void write_weight_csv(const fs::path& path, const WeightVector& w,
                      const std::vector<std::string>& task_names,
                      const std::string& comment) {
  csv::Writer out(path);
  out.comment(comment);
  out.row({"task", "weight"});
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    out.row({task_names[static_cast<std::size_t>(k)],
             csv::format_double(w.weights()(k))});
  }
  out.close();
}

void print_weight_summary(const WeightVector& w, double variance,
                          const Eigen::VectorXd& gram_eigenvalues, int d) {
  std::cout << "variance_functional=" << csv::format_double(variance) << "\n";
  const Eigen::Index trailing = gram_eigenvalues.size() - d;
  std::cout << "trailing_gram_eigenvalues=";
  for (Eigen::Index i = 0; i < trailing; ++i) {
    if (i > 0) std::cout << ";";
    std::cout << csv::format_double(gram_eigenvalues(i));
  }
  std::cout << "\n";
  if (w.pseudo_inverse_fallback()) {
    std::cout << "note=weight system was rank-deficient; "
                 "pseudo-inverse fallback used\n";
  }
}

struct FitOptions {
  SchemaOptions schema;
  int rank = 0;
  std::string output_dir = ".";
};

int cmd_fit(const FitOptions& opts) {
  const MultiTaskDataset data = load_from(opts.schema, false);
  const fs::path dir = prepare_output_dir(opts.output_dir);
  const OlsFit fit = fit_multitask_ols(data);
  const WeightVector w = feasible_weight(fit, opts.rank);
  const WeightedEstimate est = weighted_estimate(fit, w);

  const std::string comment = std::string("auxlearn ") + version_string +
                              " fit " + schema_comment(opts.schema) +
                              " rank=" + std::to_string(opts.rank);
  write_labeled_matrix(dir / "b_hat.csv", fit.b_hat.entries(), comment,
                       "covariate", data.covariate_names(),
                       data.response_names());
  write_labeled_matrix(dir / "sigma_eps.csv", fit.sigma_eps_hat.entries(),
                       comment, "task", data.response_names(),
                       data.response_names());
  write_weight_csv(dir / "weights.csv", w, data.response_names(), comment);
  write_labeled_matrix(dir / "beta_weighted.csv", est.beta_weighted, comment,
                       "covariate", data.covariate_names(), {"beta"});
  print_weight_summary(w, est.variance_functional,
                       coefficient_gram_eigenvalues(fit.b_hat.entries()),
                       opts.rank);
  return 0;
}

int cmd_fit_logistic(const FitOptions& opts) {
  const MultiTaskDataset data = load_from(opts.schema, true);
  const fs::path dir = prepare_output_dir(opts.output_dir);
  const WeightedLogisticFit result = fit_weighted_logistic(data, opts.rank);
  const LogisticFit& fit = result.fit;

  const std::string comment = std::string("auxlearn ") + version_string +
                              " fit-logistic " + schema_comment(opts.schema) +
                              " rank=" + std::to_string(opts.rank);
  write_labeled_matrix(dir / "b_hat.csv", fit.b_hat.entries(), comment,
                       "covariate", data.covariate_names(),
                       data.response_names());
  write_labeled_matrix(dir / "sigma_eps.csv", fit.sigma_eps_hat.entries(),
                       comment, "task", data.response_names(),
                       data.response_names());
  write_weight_csv(dir / "weights.csv", result.estimate.weight,
                   data.response_names(), comment);
  write_labeled_matrix(dir / "beta_weighted.csv",
                       result.estimate.beta_weighted, comment, "covariate",
                       data.covariate_names(), {"beta"});

  for (std::size_t k = 0; k < fit.converged.size(); ++k) {
    std::cout << "task=" << data.response_names()[k]
              << " iterations=" << fit.iterations[k]
              << " converged=" << (fit.converged[k] ? "yes" : "no") << "\n";
  }
  print_weight_summary(result.estimate.weight,
                       result.estimate.variance_functional,
                       coefficient_gram_eigenvalues(fit.b_hat.entries()),
                       opts.rank);
  if (!fit.all_converged()) {
    throw ConvergenceError("at least one logistic task did not converge; "
                           "outputs were still written");
  }
  return 0;
}

struct SimulateOptions {
  std::string scenario;
  std::vector<long long> n_list;
  long long p = 0;  // 0 means ceil(sqrt(n))
  std::vector<int> k_list;
  std::vector<int> d_list;
  int k_useless = 50;
  std::vector<int> prefix_grid = {2, 6, 10, 20, 40, 60};
  int reps = 100;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;
  std::string output_dir = ".";
};

Eigen::Index resolve_p(const SimulateOptions& opts, long long n) {
  if (opts.p > 0) return static_cast<Eigen::Index>(opts.p);
  return static_cast<Eigen::Index>(
      std::ceil(std::sqrt(static_cast<double>(n))));
}

long long single(const std::vector<long long>& list, long long fallback,
                 const char* flag) {
  if (list.empty()) return fallback;
  if (list.size() > 1) {
    throw UsageError(std::string(flag) +
                     " accepts one value for this scenario");
  }
  return list.front();
}

int single(const std::vector<int>& list, int fallback, const char* flag) {
  if (list.empty()) return fallback;
  if (list.size() > 1) {
    throw UsageError(std::string(flag) +
                     " accepts one value for this scenario");
  }
  return list.front();
}

std::vector<SimConfig> build_sim_configs(const SimulateOptions& opts) {
  const Scenario scenario = parse_scenario(opts.scenario);
  std::vector<SimConfig> configs;
  SimConfig base;
  base.scenario = scenario;
  base.m_reps = opts.reps;
  base.seed = opts.seed;
  base.noise_scale = opts.noise_scale;

  switch (scenario) {
    case Scenario::varying_np: {
      std::vector<long long> ns =
          opts.n_list.empty() ? std::vector<long long>{1000, 2000, 5000, 10000}
                              : opts.n_list;
      base.k_aux = single(opts.k_list, 10, "--k-aux");
      base.d = single(opts.d_list, 5, "--d");
      for (long long n : ns) {
        SimConfig c = base;
        c.n = static_cast<Eigen::Index>(n);
        c.p = resolve_p(opts, n);
        configs.push_back(c);
      }
      break;
    }
    case Scenario::varying_k: {
      const long long n = single(opts.n_list, 2000, "--n");
      std::vector<int> ks = opts.k_list.empty()
                                ? std::vector<int>{10, 20, 30, 40, 50}
                                : opts.k_list;
      base.n = static_cast<Eigen::Index>(n);
      base.p = resolve_p(opts, n);
      base.d = single(opts.d_list, 5, "--d");
      for (int k : ks) {
        SimConfig c = base;
        c.k_aux = k;
        configs.push_back(c);
      }
      break;
    }
    case Scenario::varying_d: {
      const long long n = single(opts.n_list, 2000, "--n");
      std::vector<int> ds =
          opts.d_list.empty() ? std::vector<int>{2, 4, 6, 8, 10} : opts.d_list;
      base.n = static_cast<Eigen::Index>(n);
      base.p = resolve_p(opts, n);
      base.k_aux = single(opts.k_list, 10, "--k-aux");
      for (int d : ds) {
        SimConfig c = base;
        c.d = d;
        configs.push_back(c);
      }
      break;
    }
    case Scenario::low_quality: {
      const long long n = single(opts.n_list, 10000, "--n");
      base.n = static_cast<Eigen::Index>(n);
      base.p = resolve_p(opts, n);
      base.k_aux = single(opts.k_list, 10, "--k-aux");
      base.d = single(opts.d_list, 5, "--d");
      base.k_useless = opts.k_useless;
      base.prefix_grid = opts.prefix_grid;
      configs.push_back(base);
      break;
    }
    case Scenario::logistic: {
      std::vector<long long> ns =
          opts.n_list.empty() ? std::vector<long long>{2000} : opts.n_list;
      base.k_aux = single(opts.k_list, 10, "--k-aux");
      base.d = single(opts.d_list, 5, "--d");
      for (long long n : ns) {
        SimConfig c = base;
        c.n = static_cast<Eigen::Index>(n);
        c.p = resolve_p(opts, n);
        configs.push_back(c);
      }
      break;
    }
  }
  return configs;
}

int cmd_simulate(const SimulateOptions& opts) {
  const std::vector<SimConfig> configs = build_sim_configs(opts);
  const fs::path dir = prepare_output_dir(opts.output_dir);

  std::string comment = std::string("auxlearn ") + version_string +
                        " simulate scenario=" + opts.scenario + " settings=";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (i > 0) comment += '|';
    comment += "n:" + std::to_string(configs[i].n) +
               ",p:" + std::to_string(configs[i].p) +
               ",k_aux:" + std::to_string(configs[i].k_aux) +
               ",d:" + std::to_string(configs[i].d);
    if (configs[i].scenario == Scenario::low_quality) {
      comment += ",k_useless:" + std::to_string(configs[i].k_useless) +
                 ",prefix_grid:" + join_numbers(configs[i].prefix_grid);
    }
  }
  comment += " reps=" + std::to_string(opts.reps) +
             " seed=" + std::to_string(opts.seed) +
             " noise_scale=" + csv::format_double(opts.noise_scale);

  std::vector<MseReport> reports;
  reports.reserve(configs.size());
  for (const SimConfig& config : configs) {
    reports.push_back(run_replications(config));
  }
  write_replication_csv(dir / "replications.csv", reports, comment);
  write_summary_csv(dir / "summary.csv", reports, comment);

  for (const MseReport& report : reports) {
    for (const EstimatorResult& est : report.estimators) {
      std::cout << "scenario=" << scenario_name(report.config.scenario)
                << " n=" << report.config.n << " p=" << report.config.p
                << " k_aux=" << report.config.k_aux
                << " d=" << report.config.d << " estimator=" << est.label
                << " mse=" << csv::format_double(est.mse()) << "\n";
    }
  }
  return 0;
}

struct SelectTasksOptions {
  SchemaOptions schema;
  std::string evaluator = "linear_mse";
  std::string rank_policy = "estimated_rank";
  double rank_tol = 0.05;
  int reps = 50;
  std::uint64_t seed = 0;
  double train_frac = 0.8;
  std::string output_dir = ".";
};

int cmd_select_tasks(const SelectTasksOptions& opts) {
  const Evaluator evaluator = parse_evaluator(opts.evaluator);
  const RankPolicy policy = parse_rank_policy(opts.rank_policy);
  const MultiTaskDataset data = load_from(
      opts.schema,
      evaluator == Evaluator::logistic_err && opts.schema.binary.empty());
  const fs::path dir = prepare_output_dir(opts.output_dir);

  const SelectionTrace trace =
      backward_task_elimination(data, policy, evaluator, opts.reps, opts.seed,
                                opts.train_frac, opts.rank_tol);

  const std::string comment =
      std::string("auxlearn ") + version_string + " select-tasks " +
      schema_comment(opts.schema) + " evaluator=" + opts.evaluator +
      " rank_policy=" + opts.rank_policy +
      " rank_tol=" + csv::format_double(opts.rank_tol) +
      " reps=" + std::to_string(opts.reps) +
      " seed=" + std::to_string(opts.seed) +
      " train_frac=" + csv::format_double(opts.train_frac);
  write_selection_csv(dir / "tasks_trace.csv", trace, comment);

  // Task indices map back to column names for readability.
  std::vector<std::string> names;
  for (int k : trace.chosen_tasks) {
    names.push_back(data.response_names()[static_cast<std::size_t>(k)]);
  }
  std::cout << "selected_task_set=" << task_set_string(trace.chosen_tasks)
            << "\n";
  std::cout << "selected_task_names=" << join(names, ';') << "\n";
  return 0;
}

struct SelectRankOptions {
  SchemaOptions schema;
  std::vector<int> tasks;
  std::vector<int> d_grid;
  std::string evaluator = "linear_mse";
  double flat_tol = 0.05;
  int reps = 50;
  std::uint64_t seed = 0;
  double train_frac = 0.8;
  std::string output_dir = ".";
};

int cmd_select_rank(const SelectRankOptions& opts) {
  const Evaluator evaluator = parse_evaluator(opts.evaluator);
  const MultiTaskDataset data = load_from(
      opts.schema,
      evaluator == Evaluator::logistic_err && opts.schema.binary.empty());
  const fs::path dir = prepare_output_dir(opts.output_dir);

  std::vector<int> tasks = opts.tasks;
  if (tasks.empty()) {
    tasks.resize(static_cast<std::size_t>(data.k_aux()));
    std::iota(tasks.begin(), tasks.end(), 1);
  }
  std::vector<int> d_grid = opts.d_grid;
  if (d_grid.empty()) {
    d_grid.resize(tasks.size() + 1);
    std::iota(d_grid.begin(), d_grid.end(), 1);
  }

  const SelectionTrace trace =
      rank_sweep(data, tasks, d_grid, evaluator, opts.reps, opts.seed,
                 opts.train_frac, opts.flat_tol);

  const std::string comment =
      std::string("auxlearn ") + version_string + " select-rank " +
      schema_comment(opts.schema) + " tasks=" + join_numbers(tasks) +
      " d_grid=" + join_numbers(d_grid) + " evaluator=" + opts.evaluator +
      " flat_tol=" + csv::format_double(opts.flat_tol) +
      " reps=" + std::to_string(opts.reps) +
      " seed=" + std::to_string(opts.seed) +
      " train_frac=" + csv::format_double(opts.train_frac);
  write_selection_csv(dir / "rank_trace.csv", trace, comment);

  std::cout << "selected_d=" << *trace.chosen_rank << "\n";
  return 0;
}

struct WeightsOptions {
  std::string input;
  std::string sigma;
  int rank = 0;
  std::string output_dir = ".";
};

int cmd_weights(const WeightsOptions& opts) {
  const Eigen::MatrixXd b =
      load_phase([&] { return csv::read_matrix(opts.input); });
  const Eigen::MatrixXd sigma =
      load_phase([&] { return csv::read_matrix(opts.sigma); });
  const fs::path dir = prepare_output_dir(opts.output_dir);

  const CoefficientMatrix coeff(b);
  const NoiseCovariance noise(sigma);
  const WeightVector w = oracle_weight(coeff, noise, opts.rank);

  const std::string comment = std::string("auxlearn ") + version_string +
                              " weights input=" + opts.input +
                              " sigma=" + opts.sigma +
                              " rank=" + std::to_string(opts.rank);
  std::vector<std::string> task_names;
  for (Eigen::Index k = 0; k < coeff.cols(); ++k) {
    task_names.push_back("task" + std::to_string(k));
  }
  write_weight_csv(dir / "weights.csv", w, task_names, comment);
  print_weight_summary(w, variance_functional(w, noise),
                       coefficient_gram_eigenvalues(coeff.entries()),
                       opts.rank);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank-constrained variance-optimal combination of multi-task "
               "regression estimates"};
  app.set_config("--config", "", "Read options from an INI/TOML file");
  app.require_subcommand(1);

  FitOptions fit_opts;
  CLI::App* fit = app.add_subcommand(
      "fit", "Least squares fit plus weighted combination");
  add_schema_options(fit, fit_opts.schema);
  fit->add_option("--rank", fit_opts.rank, "Combination rank d")->required();
  fit->add_option("--output-dir", fit_opts.output_dir, "Output directory");

  FitOptions fitl_opts;
  CLI::App* fitl = app.add_subcommand(
      "fit-logistic",
      "Per-task logistic fits plus weighted combination; all response "
      "columns are treated as binary");
  add_schema_options(fitl, fitl_opts.schema);
  fitl->add_option("--rank", fitl_opts.rank, "Combination rank d")
      ->required();
  fitl->add_option("--output-dir", fitl_opts.output_dir, "Output directory");

  SimulateOptions sim_opts;
  CLI::App* sim = app.add_subcommand(
      "simulate", "Monte Carlo replication of a synthetic scenario");
  sim->add_option("--scenario", sim_opts.scenario,
                  "varying_np | varying_k | varying_d | low_quality | "
                  "logistic")
      ->required();
  sim->add_option("--n", sim_opts.n_list, "Sample sizes, comma separated")
      ->delimiter(',');
  sim->add_option("--p", sim_opts.p,
                  "Covariate count (default: ceil(sqrt(n)))");
  sim->add_option("--k-aux", sim_opts.k_list,
                  "Auxiliary task counts, comma separated")
      ->delimiter(',');
  sim->add_option("--d", sim_opts.d_list, "Ranks, comma separated")
      ->delimiter(',');
  sim->add_option("--k-useless", sim_opts.k_useless,
                  "Appended uninformative tasks (low_quality)");
  sim->add_option("--k-grid", sim_opts.prefix_grid,
                  "Prefix sizes evaluated in low_quality")
      ->delimiter(',');
  sim->add_option("--reps", sim_opts.reps, "Replications per setting");
  sim->add_option("--seed", sim_opts.seed, "Master seed");
  sim->add_option("--noise-scale", sim_opts.noise_scale,
                  "Multiplier on the noise draw");
  sim->add_option("--output-dir", sim_opts.output_dir, "Output directory");

  SelectTasksOptions st_opts;
  CLI::App* st = app.add_subcommand(
      "select-tasks", "Backward elimination over auxiliary tasks");
  add_schema_options(st, st_opts.schema);
  st->add_option("--evaluator", st_opts.evaluator,
                 "linear_mse | logistic_err");
  st->add_option("--rank-policy", st_opts.rank_policy,
                 "full_rank | estimated_rank");
  st->add_option("--rank-tol", st_opts.rank_tol,
                 "Relative eigenvalue cutoff for estimated_rank");
  st->add_option("--reps", st_opts.reps, "Split repetitions per candidate");
  st->add_option("--seed", st_opts.seed, "Master seed");
  st->add_option("--train-frac", st_opts.train_frac, "Training fraction");
  st->add_option("--output-dir", st_opts.output_dir, "Output directory");

  SelectRankOptions sr_opts;
  CLI::App* sr = app.add_subcommand(
      "select-rank", "Rank sweep on a fixed auxiliary task set");
  add_schema_options(sr, sr_opts.schema);
  sr->add_option("--tasks", sr_opts.tasks,
                 "Auxiliary task indices (default: all)")
      ->delimiter(',');
  sr->add_option("--d-grid", sr_opts.d_grid,
                 "Candidate ranks (default: 1..K+1)")
      ->delimiter(',');
  sr->add_option("--evaluator", sr_opts.evaluator,
                 "linear_mse | logistic_err");
  sr->add_option("--flat-tol", sr_opts.flat_tol,
                 "Relative AvgErr tolerance defining the flat region");
  sr->add_option("--reps", sr_opts.reps, "Split repetitions per rank");
  sr->add_option("--seed", sr_opts.seed, "Master seed");
  sr->add_option("--train-frac", sr_opts.train_frac, "Training fraction");
  sr->add_option("--output-dir", sr_opts.output_dir, "Output directory");

  WeightsOptions w_opts;
  CLI::App* wt = app.add_subcommand(
      "weights", "Optimal combination weight from a coefficient matrix and "
                 "noise covariance");
  wt->add_option("--input", w_opts.input, "Coefficient matrix CSV (p rows)")
      ->required();
  wt->add_option("--sigma", w_opts.sigma, "Noise covariance CSV")->required();
  wt->add_option("--rank", w_opts.rank, "Combination rank d")->required();
  wt->add_option("--output-dir", w_opts.output_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "E_USAGE: " << e.what() << "\n";
    return 2;
  }

  try {
    if (fit->parsed()) return cmd_fit(fit_opts);
    if (fitl->parsed()) return cmd_fit_logistic(fitl_opts);
    if (sim->parsed()) return cmd_simulate(sim_opts);
    if (st->parsed()) return cmd_select_tasks(st_opts);
    if (sr->parsed()) return cmd_select_rank(sr_opts);
    if (wt->parsed()) return cmd_weights(w_opts);
    std::cerr << "E_USAGE: no subcommand given\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "E_USAGE: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "E_IO: " << e.what() << "\n";
    return 3;
  } catch (const ConvergenceError& e) {
    std::cerr << "E_NONCONVERGENCE: " << e.what() << "\n";
    return 5;
  } catch (const Error& e) {
    std::cerr << "E_NUMERIC: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "E_INTERNAL: " << e.what() << "\n";
    return 4;
  }
}

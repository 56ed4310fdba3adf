#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "auxlearn/csv.hpp"
#include "auxlearn/errors.hpp"
#include "auxlearn/logistic.hpp"
#include "auxlearn/ols.hpp"
#include "auxlearn/rng.hpp"
#include "auxlearn/types.hpp"
#include "auxlearn/weighting.hpp"

namespace auxlearn {

enum class Evaluator { linear_mse, logistic_err };

inline std::string evaluator_name(Evaluator e) {
  return e == Evaluator::linear_mse ? "linear_mse" : "logistic_err";
}

inline Evaluator parse_evaluator(const std::string& name) {
  if (name == "linear_mse") return Evaluator::linear_mse;
  if (name == "logistic_err") return Evaluator::logistic_err;
  throw UsageError("unknown evaluator '" + name + "'");
}

// How the combination rank is chosen inside each evaluation split.
// full_rank uses |tasks| + 1 (the weight collapses to pure primary
// estimation); estimated_rank counts Gram eigenvalues of the fitted
// coefficient matrix above rank_tol relative to the largest.
enum class RankPolicy { full_rank, estimated_rank };

inline std::string rank_policy_name(RankPolicy p) {
  return p == RankPolicy::full_rank ? "full_rank" : "estimated_rank";
}

inline RankPolicy parse_rank_policy(const std::string& name) {
  if (name == "full_rank") return RankPolicy::full_rank;
  if (name == "estimated_rank") return RankPolicy::estimated_rank;
  throw UsageError("unknown rank policy '" + name + "'");
}

struct SelectionStep {
  std::vector<int> tasks;  // auxiliary indices, ascending
  int d_summary = 0;       // most frequent per-split rank (ties: smallest)
  std::vector<int> d_used;
  std::vector<double> scores;
  double avg_err = 0.0;
  double std_err = 0.0;  // standard error of avg_err across splits
};

struct SelectionTrace {
  std::string phase;  // "task_elimination" or "rank_sweep"
  std::vector<SelectionStep> steps;
  std::vector<int> chosen_tasks;
  std::optional<int> chosen_rank;
  Evaluator evaluator = Evaluator::linear_mse;
  double train_frac = 0.8;
  int r_reps = 0;
  double flat_tol = 0.0;
  double rank_tol = 0.0;
};

inline std::string task_set_string(const std::vector<int>& tasks) {
  std::string s;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (i > 0) s += ';';
    s += std::to_string(tasks[i]);
  }
  return s;
}

namespace detail {

inline int estimated_rank(const Eigen::MatrixXd& b_hat, double rank_tol) {
  const Eigen::VectorXd eigs = coefficient_gram_eigenvalues(b_hat);
  const double hi = eigs.maxCoeff();
  int r = 0;
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    if (eigs(i) > rank_tol * hi) ++r;
  }
  return std::clamp(r, 1, static_cast<int>(b_hat.cols()));
}

struct SplitScore {
  double score = 0.0;
  int d_used = 0;
};

// One train/test evaluation.  The split depends only on split_seed and N,
// so every candidate scored with the same seed sees the same partition.
inline SplitScore evaluate_split_impl(const MultiTaskDataset& data,
                                      const std::vector<int>& tasks,
                                      std::optional<int> fixed_d,
                                      RankPolicy policy, double rank_tol,
                                      std::uint64_t split_seed,
                                      Evaluator evaluator, double train_frac) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw DomainError("train fraction must lie strictly between 0 and 1");
  }
  if (data.n() < 2) {
    throw DomainError("need at least 2 rows to split");
  }
  const MultiTaskDataset subset = restrict_tasks(data, tasks);
  const int k1 = static_cast<int>(subset.responses().cols());
  if (fixed_d && (*fixed_d < 1 || *fixed_d > k1)) {
    throw DomainError("rank " + std::to_string(*fixed_d) + " outside 1.." +
                      std::to_string(k1));
  }

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(subset.n()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(split_seed);
  rng.shuffle(perm);
  auto n_train = static_cast<Eigen::Index>(
      std::llround(train_frac * static_cast<double>(subset.n())));
  n_train = std::clamp(n_train, Eigen::Index{1}, subset.n() - 1);
  std::vector<Eigen::Index> train(perm.begin(), perm.begin() + n_train);
  std::vector<Eigen::Index> test(perm.begin() + n_train, perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  const MultiTaskDataset train_data = select_rows(subset, train);
  const MultiTaskDataset test_data = select_rows(subset, test);

  SplitScore result;
  Eigen::VectorXd beta;
  if (evaluator == Evaluator::linear_mse) {
    for (TaskKind kind : subset.task_kinds()) {
      if (kind != TaskKind::continuous) {
        throw DomainError("linear_mse evaluator requires continuous tasks");
      }
    }
    const OlsFit fit = fit_multitask_ols(train_data);
    result.d_used = fixed_d ? *fixed_d
                    : policy == RankPolicy::full_rank
                        ? k1
                        : estimated_rank(fit.b_hat.entries(), rank_tol);
    const WeightVector w = feasible_weight(fit, result.d_used);
    beta = fit.b_hat.entries() * w.weights();
    const Eigen::VectorXd pred = test_data.covariates() * beta;
    result.score = (test_data.responses().col(0) - pred).squaredNorm() /
                   static_cast<double>(test_data.n());
  } else {
    for (TaskKind kind : subset.task_kinds()) {
      if (kind != TaskKind::binary) {
        throw DomainError("logistic_err evaluator requires binary tasks");
      }
    }
    const LogisticFit fit = fit_multitask_logistic(train_data);
    result.d_used = fixed_d ? *fixed_d
                    : policy == RankPolicy::full_rank
                        ? k1
                        : estimated_rank(fit.b_hat.entries(), rank_tol);
    const WeightedEstimate est = weight_logistic_fit(fit, result.d_used);
    beta = est.beta_weighted;
    const Eigen::VectorXd eta = test_data.covariates() * beta;
    double wrong = 0.0;
    for (Eigen::Index i = 0; i < test_data.n(); ++i) {
      const double label = eta(i) > 0.0 ? 1.0 : 0.0;
      if (label != test_data.responses()(i, 0)) wrong += 1.0;
    }
    result.score = wrong / static_cast<double>(test_data.n());
  }
  return result;
}

inline void summarize_step(SelectionStep& step) {
  const auto r = static_cast<double>(step.scores.size());
  double mean = 0.0;
  for (double s : step.scores) mean += s;
  mean /= r;
  double acc = 0.0;
  for (double s : step.scores) acc += (s - mean) * (s - mean);
  step.avg_err = mean;
  step.std_err =
      step.scores.size() > 1 ? std::sqrt(acc / (r - 1.0)) / std::sqrt(r) : 0.0;

  std::map<int, int> counts;
  for (int d : step.d_used) ++counts[d];
  int best_d = step.d_used.empty() ? 0 : step.d_used.front();
  int best_count = -1;
  for (const auto& [d, count] : counts) {
    if (count > best_count) {
      best_d = d;
      best_count = count;
    }
  }
  step.d_summary = best_d;
}

}  // namespace detail

// Held-out score of the weighted estimator built from the given auxiliary
// tasks at combination rank d.  linear_mse reports test MSE on the primary
// response; logistic_err reports the misclassification rate of the sign
// rule x' beta > 0.
inline double evaluate_split(const MultiTaskDataset& data,
                             const std::vector<int>& tasks, int d,
                             std::uint64_t split_seed, Evaluator evaluator,
                             double train_frac = 0.8) {
  return detail::evaluate_split_impl(data, tasks, d, RankPolicy::full_rank,
                                     0.0, split_seed, evaluator, train_frac)
      .score;
}

// Greedy backward elimination over auxiliary tasks.  Every candidate within
// a round (and across rounds, per repetition index) is scored on the same
// split schedule, so score differences come from the task sets alone.  The
// chosen set is the first visited set attaining the minimal AvgErr.
inline SelectionTrace backward_task_elimination(
    const MultiTaskDataset& data, RankPolicy policy, Evaluator evaluator,
    int r_reps = 50, std::uint64_t seed = 0, double train_frac = 0.8,
    double rank_tol = 0.05) {
  if (data.k_aux() < 1) {
    throw DomainError("task elimination needs at least one auxiliary task");
  }
  if (r_reps < 2) throw DomainError("r_reps must be at least 2");
  if (!(rank_tol > 0.0 && rank_tol < 1.0)) {
    throw DomainError("rank_tol must lie strictly between 0 and 1");
  }

  SelectionTrace trace;
  trace.phase = "task_elimination";
  trace.evaluator = evaluator;
  trace.train_frac = train_frac;
  trace.r_reps = r_reps;
  trace.rank_tol = rank_tol;

  const auto evaluate_set = [&](const std::vector<int>& tasks) {
    SelectionStep step;
    step.tasks = tasks;
    step.scores.reserve(static_cast<std::size_t>(r_reps));
    step.d_used.reserve(static_cast<std::size_t>(r_reps));
    for (int r = 0; r < r_reps; ++r) {
      const std::uint64_t split_seed = derive_seed(seed, stream::split, r);
      const detail::SplitScore s = detail::evaluate_split_impl(
          data, tasks, std::nullopt, policy, rank_tol, split_seed, evaluator,
          train_frac);
      step.scores.push_back(s.score);
      step.d_used.push_back(s.d_used);
    }
    detail::summarize_step(step);
    return step;
  };

  std::vector<int> current(static_cast<std::size_t>(data.k_aux()));
  std::iota(current.begin(), current.end(), 1);
  trace.steps.push_back(evaluate_set(current));

  while (!current.empty()) {
    std::optional<SelectionStep> best;
    for (int k : current) {
      std::vector<int> candidate;
      candidate.reserve(current.size() - 1);
      for (int j : current) {
        if (j != k) candidate.push_back(j);
      }
      SelectionStep step = evaluate_set(candidate);
      if (!best || step.avg_err < best->avg_err) {
        best = std::move(step);
      }
    }
    current = best->tasks;
    trace.steps.push_back(std::move(*best));
  }

  std::size_t winner = 0;
  for (std::size_t i = 1; i < trace.steps.size(); ++i) {
    if (trace.steps[i].avg_err < trace.steps[winner].avg_err) winner = i;
  }
  trace.chosen_tasks = trace.steps[winner].tasks;
  return trace;
}

// Scores each candidate rank on a shared split schedule, then picks the
// smallest-variance rank among those whose AvgErr is within flat_tol
// (relative) of the best.
inline SelectionTrace rank_sweep(const MultiTaskDataset& data,
                                 const std::vector<int>& tasks,
                                 const std::vector<int>& d_grid,
                                 Evaluator evaluator, int r_reps = 50,
                                 std::uint64_t seed = 0,
                                 double train_frac = 0.8,
                                 double flat_tol = 0.05) {
  if (d_grid.empty()) throw DomainError("rank grid must be non-empty");
  if (r_reps < 2) throw DomainError("r_reps must be at least 2");
  if (!(flat_tol >= 0.0)) throw DomainError("flat_tol must be non-negative");
  for (std::size_t i = 1; i < d_grid.size(); ++i) {
    if (d_grid[i] <= d_grid[i - 1]) {
      throw DomainError("rank grid must be strictly increasing");
    }
  }
  const int k1 = static_cast<int>(tasks.size()) + 1;
  for (int d : d_grid) {
    if (d < 1 || d > k1) {
      throw DomainError("rank " + std::to_string(d) + " outside 1.." +
                        std::to_string(k1));
    }
  }

  SelectionTrace trace;
  trace.phase = "rank_sweep";
  trace.evaluator = evaluator;
  trace.train_frac = train_frac;
  trace.r_reps = r_reps;
  trace.flat_tol = flat_tol;
  trace.chosen_tasks = tasks;
  std::sort(trace.chosen_tasks.begin(), trace.chosen_tasks.end());

  for (int d : d_grid) {
    SelectionStep step;
    step.tasks = trace.chosen_tasks;
    step.scores.reserve(static_cast<std::size_t>(r_reps));
    step.d_used.reserve(static_cast<std::size_t>(r_reps));
    for (int r = 0; r < r_reps; ++r) {
      const std::uint64_t split_seed = derive_seed(seed, stream::split, r);
      const detail::SplitScore s = detail::evaluate_split_impl(
          data, trace.chosen_tasks, d, RankPolicy::full_rank, 0.0, split_seed,
          evaluator, train_frac);
      step.scores.push_back(s.score);
      step.d_used.push_back(s.d_used);
    }
    detail::summarize_step(step);
    trace.steps.push_back(std::move(step));
  }

  double best_avg = trace.steps[0].avg_err;
  for (const SelectionStep& step : trace.steps) {
    best_avg = std::min(best_avg, step.avg_err);
  }
  const double threshold = (1.0 + flat_tol) * best_avg;
  std::optional<std::size_t> winner;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    if (trace.steps[i].avg_err > threshold) continue;
    if (!winner || trace.steps[i].std_err < trace.steps[*winner].std_err) {
      winner = i;
    }
  }
  trace.chosen_rank = d_grid[*winner];
  return trace;
}

// Detail rows carry one split score each; two summary rows per step carry
// AvgErr and StdErr in the score column.
inline void write_selection_csv(const std::filesystem::path& path,
                                const SelectionTrace& trace,
                                const std::string& config_comment) {
  csv::Writer out(path);
  out.comment(config_comment);
  std::string chosen = "selected task_set=" + task_set_string(trace.chosen_tasks);
  if (trace.chosen_rank) {
    chosen += " d=" + std::to_string(*trace.chosen_rank);
  }
  out.comment(chosen);
  out.row({"step", "task_set", "d", "rep", "score"});
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const SelectionStep& step = trace.steps[i];
    for (std::size_t r = 0; r < step.scores.size(); ++r) {
      out.row({std::to_string(i), task_set_string(step.tasks),
               std::to_string(step.d_used[r]), std::to_string(r),
               csv::format_double(step.scores[r])});
    }
    out.row({std::to_string(i), task_set_string(step.tasks),
             std::to_string(step.d_summary), "avg_err",
             csv::format_double(step.avg_err)});
    out.row({std::to_string(i), task_set_string(step.tasks),
             std::to_string(step.d_summary), "std_err",
             csv::format_double(step.std_err)});
  }
  out.close();
}

}  // namespace auxlearn

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnmf/model.hpp"
#include "bnmf/samplers.hpp"

namespace bnmf {

enum class ExperimentKind { kConvergence, kNoise, kSparsity };

const char* to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

// Cells above this held-out MSE, and non-finite or aborted cells, are flagged
// diverged. Large finite values are still recorded verbatim.
inline constexpr double kDivergenceMseThreshold = 1e6;

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kConvergence;
  std::vector<ModelKind> models;
  std::vector<std::size_t> k_values;
  // unobserved fractions (sparsity) or noise-to-signal ratios (noise);
  // ignored by convergence runs
  std::vector<double> levels;
  std::size_t repeats = 10;
  RunConfig base;  // carries iterations, burn-in, base seed, hyperparameters
  std::size_t max_workers = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct CellKey {
  ModelKind model = ModelKind::kGrrn;
  std::size_t k = 0;
  double level = 0.0;  // NaN for convergence cells
  std::size_t repeat = 0;
};

struct CellSummary {
  CellKey key;
  std::uint64_t seed = 0;
  bool ran = false;     // false: infeasible (e.g. the held-out set is empty)
  bool failed = false;  // run aborted (numerical error); MSEs set to +inf
  bool diverged = false;
  std::string note;
  double train_mse_mean_of_samples = 0.0;
  double train_mse_of_posterior_mean = 0.0;
  double test_mse_mean_of_samples = 0.0;
  double test_mse_of_posterior_mean = 0.0;
  // noise cells only:
  double variance_data = 0.0;      // of the (noised) observed values
  double metric_var_to_mse = 0.0;  // variance / MSE of predictions, higher better
  double clean_target_mse = 0.0;   // same predictions against the clean values
  double wall_seconds = 0.0;
  std::vector<double> train_curve;  // kept for convergence cells
};

struct AggregateRow {
  CellKey key;  // repeat field unused
  std::size_t n = 0;
  double train_mse_mean = 0.0, train_mse_std = 0.0;
  double test_mse_mean = 0.0, test_mse_std = 0.0;
  double metric_mean = 0.0, metric_std = 0.0;
  std::size_t diverged_count = 0;
};

struct ConvergenceCurve {
  ModelKind model = ModelKind::kGrrn;
  std::size_t k = 0;
  std::vector<double> mean_train_mse;  // per iteration, averaged over repeats
};

struct ExperimentResult {
  ExperimentKind kind = ExperimentKind::kConvergence;
  std::vector<CellSummary> cells;  // deterministic (model, k, level, repeat) order
  std::vector<AggregateRow> aggregates;
  std::vector<ConvergenceCurve> curves;  // convergence runs only
};

// Deterministic per-cell seed from the base seed and the cell coordinates, so
// any cell can be reproduced in isolation.
std::uint64_t cell_seed(std::uint64_t base, ModelKind model, std::size_t k,
                        double level, std::size_t repeat);

// Runs one (model, K, level, repeat) cell exactly as the experiment sweep
// does; the sweep is a worker pool over this function, so any recorded cell
// is reproducible in isolation.
CellSummary run_single_cell(const ExperimentSpec& spec,
                            const ObservedMatrix& data, const CellKey& key);

double noise_metric(double variance_data, double mse);

// Aggregation is a pure function of the per-cell summaries. Finite values
// enter the means; failed and infeasible cells do not.
std::vector<AggregateRow> aggregate_cells(ExperimentKind kind,
                                          const std::vector<CellSummary>& cells);

ExperimentResult run_convergence(const ExperimentSpec& spec,
                                 const ObservedMatrix& data);
ExperimentResult run_noise(const ExperimentSpec& spec,
                           const ObservedMatrix& data);
ExperimentResult run_sparsity(const ExperimentSpec& spec,
                              const ObservedMatrix& data);
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const ObservedMatrix& data);

}  // namespace bnmf

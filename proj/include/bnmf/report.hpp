#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnmf/harness.hpp"
#include "bnmf/samplers.hpp"

namespace bnmf {

// Writers/parsers for the machine-readable outputs. Doubles are printed with
// %.17g so re-parsing reproduces every value bit-for-bit; files are written
// deterministically (timing data lives in the separate timings table, keeping
// result files byte-identical across reruns).

std::string format_double(double v);
double parse_double(const std::string& s);

struct ResultRow {
  std::string experiment;
  std::string model;
  std::size_t k = 0;
  double fraction_or_ratio = 0.0;  // NaN for convergence rows
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double train_mse_mean_of_samples = 0.0;
  double test_mse_of_posterior_mean = 0.0;
  bool diverged = false;
};

inline constexpr const char* kResultsHeader =
    "experiment,model,K,fraction_or_ratio,repeat,seed,"
    "train_mse_mean_of_samples,test_mse_of_posterior_mean,diverged";

std::vector<ResultRow> result_rows(ExperimentKind kind,
                                   const std::vector<CellSummary>& cells);
void write_results_csv(const std::string& path,
                       const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results_csv(const std::string& path);

void write_aggregate_csv(const std::string& path, ExperimentKind kind,
                         const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> parse_aggregate_csv(const std::string& path);

struct TimingRow {
  std::string model;
  std::size_t k = 0;
  double fraction_or_ratio = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};
void write_timings_csv(const std::string& path, ExperimentKind kind,
                       const std::vector<CellSummary>& cells);
std::vector<TimingRow> parse_timings_csv(const std::string& path);

// noise runs: per-cell variance/metric/clean-target detail
struct NoiseMetricRow {
  std::string model;
  std::size_t k = 0;
  double ratio = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double variance_data = 0.0;
  double mse_posterior_mean = 0.0;
  double metric_var_to_mse = 0.0;
  double clean_target_mse = 0.0;
};
void write_noise_metrics_csv(const std::string& path,
                             const std::vector<CellSummary>& cells);
std::vector<NoiseMetricRow> parse_noise_metrics_csv(const std::string& path);

void write_curve_csv(const std::string& path, const ConvergenceCurve& curve);
std::vector<double> parse_curve_csv(const std::string& path);

void write_trace_csv(const std::string& path, const RunTrace& trace);
struct ParsedTrace {
  std::vector<double> train_mse;
  std::vector<double> test_mse;
};
ParsedTrace parse_trace_csv(const std::string& path);

// posterior-mean prediction as 0-based "row,col,value" triples; NaN cells
// (never accumulated) are skipped
void write_prediction_csv(const std::string& path, const Matrix& prediction);
Matrix parse_prediction_csv(const std::string& path, std::size_t rows,
                            std::size_t cols);

std::uint64_t fnv1a64_file(const std::string& path);
std::string to_hex(std::uint64_t v);

}  // namespace bnmf

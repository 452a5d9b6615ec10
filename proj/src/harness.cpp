#include "bnmf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

#include "bnmf/data.hpp"
#include "bnmf/errors.hpp"
#include "bnmf/rng.hpp"

namespace bnmf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  out.n = xs.size();
  if (xs.empty()) return out;
  for (const double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (const double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return out;
}

void run_jobs(std::size_t n_jobs, std::size_t max_workers,
              const std::function<void(std::size_t)>& job) {
  std::size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const std::size_t workers =
      std::min(n_jobs, max_workers == 0 ? hw : max_workers);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_jobs; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n_jobs) return;
        job(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

// (model, K, level, repeat) cell jobs in deterministic order
std::vector<CellKey> build_keys(const ExperimentSpec& spec, bool with_levels) {
  std::vector<CellKey> keys;
  const std::vector<double> levels =
      with_levels ? spec.levels
                  : std::vector<double>{std::numeric_limits<double>::quiet_NaN()};
  for (const ModelKind m : spec.models)
    for (const std::size_t k : spec.k_values)
      for (const double level : levels)
        for (std::size_t r = 0; r < spec.repeats; ++r)
          keys.push_back({m, k, level, r});
  return keys;
}

RunConfig cell_config(const ExperimentSpec& spec, const CellKey& key) {
  RunConfig cfg = spec.base;
  cfg.kind = key.model;
  cfg.latent_dim = key.k;
  cfg.seed = cell_seed(spec.base.seed, key.model, key.k, key.level, key.repeat);
  return cfg;
}

void fill_from_trace(CellSummary& cell, const RunTrace& trace) {
  cell.train_mse_mean_of_samples = trace.mean_sample_train_mse;
  cell.train_mse_of_posterior_mean = trace.train_mse_of_posterior_mean;
  if (trace.has_test) {
    cell.test_mse_mean_of_samples = trace.mean_sample_test_mse;
    cell.test_mse_of_posterior_mean = trace.test_mse_of_posterior_mean;
  }
  const double headline = trace.has_test ? trace.test_mse_of_posterior_mean
                                         : trace.train_mse_of_posterior_mean;
  cell.diverged =
      !std::isfinite(headline) || headline > kDivergenceMseThreshold;
}

void mark_failed(CellSummary& cell, const std::string& why) {
  cell.ran = true;
  cell.failed = true;
  cell.diverged = true;
  cell.note = why;
  cell.train_mse_mean_of_samples = kInf;
  cell.train_mse_of_posterior_mean = kInf;
  cell.test_mse_mean_of_samples = kInf;
  cell.test_mse_of_posterior_mean = kInf;
}

}  // namespace

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kConvergence: return "convergence";
    case ExperimentKind::kNoise: return "noise";
    case ExperimentKind::kSparsity: return "sparsity";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  if (name == "convergence") return ExperimentKind::kConvergence;
  if (name == "noise") return ExperimentKind::kNoise;
  if (name == "sparsity") return ExperimentKind::kSparsity;
  throw ValidationError("unknown experiment kind: " + name);
}

void ExperimentSpec::validate() const {
  if (models.empty()) throw ValidationError("ExperimentSpec: no models");
  if (k_values.empty()) throw ValidationError("ExperimentSpec: no K values");
  if (repeats < 1) throw ValidationError("ExperimentSpec: repeats must be >= 1");
  if (kind != ExperimentKind::kConvergence && levels.empty())
    throw ValidationError("ExperimentSpec: no fraction/ratio levels");
  base.validate();
}

std::uint64_t cell_seed(std::uint64_t base, ModelKind model, std::size_t k,
                        double level, std::size_t repeat) {
  std::uint64_t s = Rng::mix(base, 0x6e7a31 + static_cast<std::uint64_t>(model));
  s = Rng::mix(s, static_cast<std::uint64_t>(k));
  s = Rng::mix(s, std::bit_cast<std::uint64_t>(level));
  return Rng::mix(s, repeat);
}

double noise_metric(double variance_data, double mse) {
  return variance_data / mse;
}

std::vector<AggregateRow> aggregate_cells(ExperimentKind kind,
                                          const std::vector<CellSummary>& cells) {
  std::vector<AggregateRow> rows;
  auto same_group = [](const CellKey& a, const CellKey& b) {
    const bool level_eq = (std::isnan(a.level) && std::isnan(b.level)) ||
                          a.level == b.level;
    return a.model == b.model && a.k == b.k && level_eq;
  };
  for (const CellSummary& c : cells) {
    AggregateRow* row = nullptr;
    for (auto& r : rows)
      if (same_group(r.key, c.key)) {
        row = &r;
        break;
      }
    if (!row) {
      rows.push_back({});
      rows.back().key = c.key;
      rows.back().key.repeat = 0;
      row = &rows.back();
    }
    if (c.diverged) ++row->diverged_count;
  }
  for (auto& row : rows) {
    std::vector<double> train, test, metric;
    for (const CellSummary& c : cells) {
      if (!same_group(row.key, c.key) || !c.ran || c.failed) continue;
      if (std::isfinite(c.train_mse_mean_of_samples))
        train.push_back(c.train_mse_mean_of_samples);
      if (std::isfinite(c.test_mse_of_posterior_mean))
        test.push_back(c.test_mse_of_posterior_mean);
      if (kind == ExperimentKind::kNoise && std::isfinite(c.metric_var_to_mse))
        metric.push_back(c.metric_var_to_mse);
    }
    const MeanStd tr = mean_std(train), te = mean_std(test), me = mean_std(metric);
    row.train_mse_mean = tr.mean;
    row.train_mse_std = tr.std;
    row.test_mse_mean = te.mean;
    row.test_mse_std = te.std;
    row.metric_mean = me.mean;
    row.metric_std = me.std;
    row.n = std::max(tr.n, std::max(te.n, me.n));
  }
  return rows;
}

CellSummary run_single_cell(const ExperimentSpec& spec,
                            const ObservedMatrix& data, const CellKey& key) {
  CellSummary cell;
  cell.key = key;
  const RunConfig cfg = cell_config(spec, key);
  cell.seed = cfg.seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    switch (spec.kind) {
      case ExperimentKind::kConvergence: {
        const RunTrace trace = run_model(cfg, data, nullptr);
        cell.ran = true;
        fill_from_trace(cell, trace);
        cell.train_curve = trace.train_mse;
        break;
      }
      case ExperimentKind::kNoise: {
        const ObservedMatrix noised =
            add_noise(data, key.level, Rng::mix(cfg.seed, 0xA05E));
        double mean = 0.0;
        for (const double v : noised.obs_val) mean += v;
        mean /= static_cast<double>(noised.observed_count);
        double var = 0.0;
        for (const double v : noised.obs_val) var += (v - mean) * (v - mean);
        var /= static_cast<double>(noised.observed_count);

        const RunTrace trace = run_model(cfg, noised, nullptr);
        cell.ran = true;
        fill_from_trace(cell, trace);
        cell.variance_data = var;
        cell.metric_var_to_mse =
            noise_metric(var, trace.train_mse_of_posterior_mean);
        // the same predictions scored against the clean values
        double clean_ss = 0.0;
        for (std::size_t t = 0; t < data.observed_count; ++t) {
          const double p =
              trace.posterior_mean(data.obs_row[t], data.obs_col[t]);
          const double r = data.obs_val[t] - p;
          clean_ss += r * r;
        }
        cell.clean_target_mse =
            clean_ss / static_cast<double>(data.observed_count);
        break;
      }
      case ExperimentKind::kSparsity: {
        SplitSpec split;
        split.fraction_unobserved = key.level;
        split.seed = Rng::mix(cfg.seed, 0x5197);
        auto [train, test] = split_train_test(data, split);
        if (test.observed_count == 0) {
          cell.ran = false;
          cell.note = "not applicable: held-out set is empty at this fraction";
        } else {
          const RunTrace trace = run_model(cfg, train, &test);
          cell.ran = true;
          fill_from_trace(cell, trace);
        }
        break;
      }
    }
  } catch (const ValidationError& e) {
    cell.ran = false;
    cell.note = std::string("infeasible: ") + e.what();
  } catch (const NumericalError& e) {
    mark_failed(cell, e.what());
  } catch (const std::exception& e) {
    // anything else a degenerate run surfaces is still a per-cell failure;
    // the sweep must not die with it
    mark_failed(cell, e.what());
  }
  cell.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return cell;
}

namespace {

ExperimentResult run_cells(const ExperimentSpec& spec,
                           const ObservedMatrix& data, bool with_levels) {
  ExperimentResult result;
  result.kind = spec.kind;
  const auto keys = build_keys(spec, with_levels);
  result.cells.resize(keys.size());
  run_jobs(keys.size(), spec.max_workers, [&](std::size_t i) {
    result.cells[i] = run_single_cell(spec, data, keys[i]);
  });
  result.aggregates = aggregate_cells(spec.kind, result.cells);
  return result;
}

}  // namespace

ExperimentResult run_convergence(const ExperimentSpec& spec,
                                 const ObservedMatrix& data) {
  spec.validate();
  if (spec.kind != ExperimentKind::kConvergence)
    throw ValidationError("run_convergence: spec kind mismatch");
  ExperimentResult result = run_cells(spec, data, false);

  // per-(model, K) curves averaged over the repeats that produced one
  for (const ModelKind m : spec.models) {
    for (const std::size_t k : spec.k_values) {
      ConvergenceCurve curve;
      curve.model = m;
      curve.k = k;
      curve.mean_train_mse.assign(spec.base.iterations, 0.0);
      std::size_t n = 0;
      for (const CellSummary& c : result.cells) {
        if (c.key.model != m || c.key.k != k || c.train_curve.empty()) continue;
        for (std::size_t it = 0; it < curve.mean_train_mse.size(); ++it)
          curve.mean_train_mse[it] += c.train_curve[it];
        ++n;
      }
      for (double& v : curve.mean_train_mse)
        v = n > 0 ? v / static_cast<double>(n)
                  : std::numeric_limits<double>::quiet_NaN();
      result.curves.push_back(std::move(curve));
    }
  }
  return result;
}

ExperimentResult run_noise(const ExperimentSpec& spec,
                           const ObservedMatrix& data) {
  spec.validate();
  if (spec.kind != ExperimentKind::kNoise)
    throw ValidationError("run_noise: spec kind mismatch");
  return run_cells(spec, data, true);
}

ExperimentResult run_sparsity(const ExperimentSpec& spec,
                              const ObservedMatrix& data) {
  spec.validate();
  if (spec.kind != ExperimentKind::kSparsity)
    throw ValidationError("run_sparsity: spec kind mismatch");
  return run_cells(spec, data, true);
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const ObservedMatrix& data) {
  switch (spec.kind) {
    case ExperimentKind::kConvergence: return run_convergence(spec, data);
    case ExperimentKind::kNoise: return run_noise(spec, data);
    case ExperimentKind::kSparsity: return run_sparsity(spec, data);
  }
  throw ValidationError("run_experiment: bad kind");
}

}  // namespace bnmf

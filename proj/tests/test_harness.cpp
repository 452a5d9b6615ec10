#include <doctest.h>

#include <cmath>

#include "bnmf/data.hpp"
#include "bnmf/errors.hpp"
#include "bnmf/harness.hpp"

using namespace bnmf;

namespace {

ExperimentSpec base_spec(ExperimentKind kind) {
  ExperimentSpec spec;
  spec.kind = kind;
  spec.models = {ModelKind::kGrrn};
  spec.k_values = {3};
  spec.repeats = 1;
  spec.base.iterations = 150;
  spec.base.burn_in = 100;
  spec.base.seed = 20240;
  spec.max_workers = 2;
  return spec;
}

}  // namespace

TEST_CASE("run_convergence: noise-free synthetic data is fit to near zero") {
  const SyntheticData syn = synthetic_generate(30, 24, 3, 0.0, 61);
  ExperimentSpec spec = base_spec(ExperimentKind::kConvergence);
  spec.base.iterations = 300;
  spec.base.burn_in = 200;
  const ExperimentResult r = run_convergence(spec, syn.data);
  REQUIRE(r.cells.size() == 1);
  CHECK(r.cells[0].ran);
  CHECK_FALSE(r.cells[0].diverged);
  REQUIRE(r.curves.size() == 1);
  CHECK(r.curves[0].mean_train_mse.size() == 300);
  CHECK(r.curves[0].mean_train_mse.back() < 1e-2);
}

TEST_CASE("run_convergence: a single repeat aggregates to itself") {
  const SyntheticData syn = synthetic_generate(12, 10, 2, 0.1, 3);
  ExperimentSpec spec = base_spec(ExperimentKind::kConvergence);
  spec.k_values = {2};
  spec.base.iterations = 40;
  spec.base.burn_in = 30;
  const ExperimentResult r = run_convergence(spec, syn.data);
  REQUIRE(r.cells.size() == 1);
  REQUIRE(r.aggregates.size() == 1);
  CHECK(r.aggregates[0].n == 1);
  CHECK(r.aggregates[0].train_mse_mean == r.cells[0].train_mse_mean_of_samples);
  CHECK(r.aggregates[0].train_mse_std == 0.0);
  // the averaged curve of one repeat is that repeat's curve
  CHECK(r.curves[0].mean_train_mse == r.cells[0].train_curve);
}

TEST_CASE("run_noise: metric is maximal at zero ratio and decays monotonically") {
  const SyntheticData syn = synthetic_generate(40, 30, 3, 0.05, 17);
  ExperimentSpec spec = base_spec(ExperimentKind::kNoise);
  spec.levels = {0.0, 0.5, 2.0, 10.0};
  const ExperimentResult r = run_noise(spec, syn.data);
  REQUIRE(r.cells.size() == 4);
  for (const auto& c : r.cells) {
    CHECK(c.ran);
    CHECK(std::isfinite(c.metric_var_to_mse));
    CHECK(std::isfinite(c.clean_target_mse));
  }
  CHECK(r.cells[0].key.level == 0.0);
  for (std::size_t i = 1; i < r.cells.size(); ++i) {
    CHECK(r.cells[i].metric_var_to_mse < r.cells[0].metric_var_to_mse);
    CHECK(r.cells[i].metric_var_to_mse <
          r.cells[i - 1].metric_var_to_mse * 1.001);
  }
}

TEST_CASE("noise_metric: invariant to common rescaling") {
  // variance and MSE are both quadratic in the scale, so the ratio cancels
  const double var = 3.7, mse = 0.9, c = 4.2;
  CHECK(noise_metric(var, mse) ==
        doctest::Approx(noise_metric(c * c * var, c * c * mse)).epsilon(1e-12));
}

TEST_CASE("run_sparsity: cells, feasibility flags, and reproducibility") {
  const SyntheticData syn = synthetic_generate(20, 15, 2, 0.1, 29);
  ExperimentSpec spec = base_spec(ExperimentKind::kSparsity);
  spec.models = {ModelKind::kGrrn, ModelKind::kGtt};
  spec.k_values = {2};
  spec.levels = {0.5, 0.9};
  spec.repeats = 2;
  spec.base.iterations = 60;
  spec.base.burn_in = 40;
  const ExperimentResult r = run_sparsity(spec, syn.data);
  REQUIRE(r.cells.size() == 8);  // 2 models x 1 K x 2 fractions x 2 repeats
  for (const auto& c : r.cells) {
    CHECK(c.ran);
    CHECK(std::isfinite(c.test_mse_of_posterior_mean));
  }

  // any recorded cell reruns identically in isolation
  const CellSummary again = run_single_cell(spec, syn.data, r.cells[5].key);
  CHECK(again.seed == r.cells[5].seed);
  CHECK(again.test_mse_of_posterior_mean ==
        r.cells[5].test_mse_of_posterior_mean);
  CHECK(again.train_mse_mean_of_samples ==
        r.cells[5].train_mse_mean_of_samples);
}

TEST_CASE("run_sparsity: a fraction at the intrinsic sparsity is flagged") {
  // half the grid observed; fractions at/below it give an empty held-out set
  Matrix v(10, 10, 3.0);
  Mask m(10, 10);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 5; ++j) m.set(i, j, true);
  const ObservedMatrix d = ObservedMatrix::from(v, m);
  ExperimentSpec spec = base_spec(ExperimentKind::kSparsity);
  spec.k_values = {2};
  spec.levels = {0.5};
  spec.base.iterations = 10;
  spec.base.burn_in = 5;
  const ExperimentResult r = run_sparsity(spec, d);
  REQUIRE(r.cells.size() == 1);
  CHECK_FALSE(r.cells[0].ran);
  CHECK(r.cells[0].note.find("not applicable") != std::string::npos);
  // flagged cells stay out of the aggregates
  CHECK(r.aggregates[0].n == 0);
}

TEST_CASE("experiment sweeps are deterministic and thread-count independent") {
  const SyntheticData syn = synthetic_generate(15, 12, 2, 0.2, 5);
  ExperimentSpec spec = base_spec(ExperimentKind::kSparsity);
  spec.models = {ModelKind::kGee, ModelKind::kGrrn};
  spec.levels = {0.6};
  spec.repeats = 2;
  spec.base.iterations = 30;
  spec.base.burn_in = 20;

  spec.max_workers = 1;
  const ExperimentResult serial = run_sparsity(spec, syn.data);
  spec.max_workers = 4;
  const ExperimentResult parallel = run_sparsity(spec, syn.data);
  REQUIRE(serial.cells.size() == parallel.cells.size());
  for (std::size_t i = 0; i < serial.cells.size(); ++i) {
    CHECK(serial.cells[i].seed == parallel.cells[i].seed);
    CHECK(serial.cells[i].test_mse_of_posterior_mean ==
          parallel.cells[i].test_mse_of_posterior_mean);
    CHECK(serial.cells[i].train_mse_mean_of_samples ==
          parallel.cells[i].train_mse_mean_of_samples);
  }
}

TEST_CASE("aggregate_cells is a pure function of the summaries") {
  const SyntheticData syn = synthetic_generate(15, 12, 2, 0.2, 5);
  ExperimentSpec spec = base_spec(ExperimentKind::kSparsity);
  spec.levels = {0.6};
  spec.repeats = 3;
  spec.base.iterations = 25;
  spec.base.burn_in = 20;
  const ExperimentResult r = run_sparsity(spec, syn.data);
  const auto again = aggregate_cells(r.kind, r.cells);
  REQUIRE(again.size() == r.aggregates.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].n == r.aggregates[i].n);
    CHECK(again[i].train_mse_mean == r.aggregates[i].train_mse_mean);
    CHECK(again[i].test_mse_mean == r.aggregates[i].test_mse_mean);
    CHECK(again[i].test_mse_std == r.aggregates[i].test_mse_std);
  }
  // mean/std sanity against a hand recomputation
  double mean = 0.0;
  for (const auto& c : r.cells) mean += c.test_mse_of_posterior_mean;
  mean /= 3.0;
  CHECK(r.aggregates[0].test_mse_mean == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("a run that aborts numerically is flagged diverged, not fatal") {
  // values around 1e200 blow up the first sweep's residual sums
  Matrix v(6, 6, 1e200);
  const ObservedMatrix d = ObservedMatrix::from(v, Mask(6, 6, true));
  ExperimentSpec spec = base_spec(ExperimentKind::kConvergence);
  spec.models = {ModelKind::kGee, ModelKind::kGrrn};
  spec.k_values = {2};
  spec.base.iterations = 10;
  spec.base.burn_in = 5;
  const ExperimentResult r = run_convergence(spec, d);
  REQUIRE(r.cells.size() == 2);
  for (const auto& c : r.cells) {
    CHECK(c.failed);
    CHECK(c.diverged);
    CHECK_FALSE(c.note.empty());
    CHECK(std::isinf(c.train_mse_mean_of_samples));
  }
  // failed cells do not poison the aggregates
  for (const auto& a : r.aggregates) {
    CHECK(a.n == 0);
    CHECK(a.diverged_count == 1);
  }
}

TEST_CASE("cell_seed: distinct cells get distinct deterministic seeds") {
  const std::uint64_t a = cell_seed(1, ModelKind::kGrrn, 10, 0.97, 0);
  CHECK(a == cell_seed(1, ModelKind::kGrrn, 10, 0.97, 0));
  CHECK(a != cell_seed(1, ModelKind::kGee, 10, 0.97, 0));
  CHECK(a != cell_seed(1, ModelKind::kGrrn, 20, 0.97, 0));
  CHECK(a != cell_seed(1, ModelKind::kGrrn, 10, 0.98, 0));
  CHECK(a != cell_seed(1, ModelKind::kGrrn, 10, 0.97, 1));
  CHECK(a != cell_seed(2, ModelKind::kGrrn, 10, 0.97, 0));
}

TEST_CASE("ExperimentSpec validation") {
  ExperimentSpec spec = base_spec(ExperimentKind::kSparsity);
  spec.models.clear();
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = base_spec(ExperimentKind::kNoise);
  spec.levels.clear();
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = base_spec(ExperimentKind::kConvergence);
  spec.levels.clear();
  CHECK_NOTHROW(spec.validate());  // convergence needs no levels
  spec.repeats = 0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  // kind mismatch guards
  const SyntheticData syn = synthetic_generate(6, 5, 2, 0.1, 2);
  CHECK_THROWS_AS(run_noise(base_spec(ExperimentKind::kSparsity), syn.data),
                  ValidationError);
}

// Acceptance suite. Each criterion prints one [PASS]/[FAIL] line with its
// measured quantities; the process exits nonzero if any selected criterion
// fails. Criteria 4, 5 and part of 6 need the MovieLens 100K ratings file,
// located through $BNMF_ML100K or <source>/data/ml-100k/u.data; without it
// they fail with a diagnostic rather than silently passing.
//
// Usage: acceptance [--criterion N]     (default: run all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bnmf/data.hpp"
#include "bnmf/distributions.hpp"
#include "bnmf/errors.hpp"
#include "bnmf/harness.hpp"
#include "bnmf/report.hpp"
#include "bnmf/rng.hpp"
#include "bnmf/samplers.hpp"
#include "bnmf/verify.hpp"
#include "bnmf/verify_conditionals.hpp"

using namespace bnmf;
namespace vf = bnmf::verify;
namespace fs = std::filesystem;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

std::optional<fs::path> find_ml100k() {
  if (const char* env = std::getenv("BNMF_ML100K")) {
    if (fs::exists(env)) return fs::path(env);
  }
  const fs::path bundled = fs::path(BNMF_SOURCE_DIR) / "data/ml-100k/u.data";
  if (fs::exists(bundled)) return bundled;
  return std::nullopt;
}

constexpr const char* kMl100kHint =
    "MovieLens 100K ratings not found (set BNMF_ML100K or place u.data at "
    "data/ml-100k/u.data)";

// ---------------------------------------------------------------------------

bool criterion_distribution_kernel(std::string& detail) {
  Timer timer;
  // normalizer against adaptive quadrature, relative 1e-5 over the box
  const double taus[] = {0.01, 0.05, 0.23, 1.0, 4.7, 21.0, 100.0};
  const double lams[] = {0.01, 0.07, 0.31, 1.0, 6.1, 27.0, 100.0};
  const double mus[] = {-5.0, -2.4, -0.7, 0.0, 1.2, 3.1, 5.0};
  double worst_rel = 0.0;
  for (const double tau : taus) {
    for (const double lam : lams) {
      for (const double mu : mus) {
        const double log_c = rn_log_normalizer({mu, tau, lam});
        const double sd = 1.0 / std::sqrt(tau);
        const double peak = std::max(mu - lam / tau, 0.0);
        auto logf = [&](double x) {
          return 0.5 * std::log(tau / (2.0 * M_PI)) -
                 tau * (x - mu) * (x - mu) / 2.0 + std::log(lam) - lam * x;
        };
        const double shift = logf(peak);
        vf::QuadratureSpec spec;
        spec.lo = 0.0;
        spec.hi = peak + 14.0 * sd;
        spec.abs_tol = 1e-11;
        spec.integrand = [&](double x) { return std::exp(logf(x) - shift); };
        const auto q = vf::integrate(spec);
        if (!q.converged) {
          detail = "quadrature did not converge";
          return false;
        }
        // |log difference| bounds the relative error of C
        worst_rel =
            std::max(worst_rel, std::abs(std::log(q.value) + shift - log_c));
      }
    }
  }

  // sampler means within 3 standard errors at 1e5 draws, 20 settings
  Rng param_rng(7781);
  std::vector<TnParams> settings;
  settings.push_back({-10.0, 1.0});
  while (settings.size() < 20) {
    settings.push_back({-6.0 + 12.0 * param_rng.uniform(),
                        std::exp(2.3 * (2.0 * param_rng.uniform() - 1.0))});
  }
  const std::size_t n = 100'000;
  Rng rng(90210);
  double worst_z = 0.0;
  for (const TnParams& p : settings) {
    const auto mom = vf::tn_moments(p.parent_mean, p.parent_precision);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += sample_tn(p, rng);
    mean /= static_cast<double>(n);
    const double se = std::sqrt(mom.variance / static_cast<double>(n));
    worst_z = std::max(worst_z, std::abs(mean - mom.mean) / se);
  }

  const double elapsed = timer.seconds();
  std::ostringstream os;
  os << "normalizer worst rel err " << worst_rel << " (tol 1e-5); "
     << "sampler worst |z| " << worst_z << " (tol 3); " << elapsed
     << "s (limit 60)";
  detail = os.str();
  return worst_rel < 1e-5 && worst_z < 3.0 && elapsed < 60.0;
}

// ---------------------------------------------------------------------------

bool criterion_conditionals(std::string& detail) {
  Timer timer;
  HyperParams hyper;
  const double beta_lambda = 0.8;
  std::size_t checks = 0, failures = 0;
  std::ostringstream log;

  // the worked 1x1/K=1 instance
  {
    Matrix a(1, 1);
    a(0, 0) = 2.0;
    const ObservedMatrix data = ObservedMatrix::from(a, Mask(1, 1, true));
    FactorState state;
    state.W = Matrix(1, 1, 0.5);
    state.Z = Matrix(1, 1, 1.0);
    state.sigma2 = 1.0;
    PriorState prior = make_prior_state(ModelKind::kGrrn, 1, 1, 1);
    prior.mu_W(0, 0) = prior.tau_W(0, 0) = prior.lambda_W(0, 0) = 1.0;
    prior.mu_Z(0, 0) = prior.tau_Z(0, 0) = prior.lambda_Z(0, 0) = 1.0;
    const TnParams w = grrn_cond_w(state, prior, data, 0, 0);
    if (std::abs(1.0 / w.parent_precision - 0.5) > 1e-12 ||
        std::abs(w.parent_mean - 1.0) > 1e-12) {
      ++failures;
      log << "[hand 1x1 parameters mismatch] ";
    }
    ++checks;
    for (const auto which :
         {vf::ConditionalKind::kW, vf::ConditionalKind::kZ,
          vf::ConditionalKind::kMu, vf::ConditionalKind::kTau,
          vf::ConditionalKind::kLambda, vf::ConditionalKind::kSigma2}) {
      const auto rep = vf::brute_conditional_check(
          ModelKind::kGrrn, which, state, prior, data, hyper, beta_lambda, 0, 0);
      ++checks;
      if (!rep.pass) {
        ++failures;
        log << "[hand 1x1 " << vf::to_string(which) << ": " << rep.note << "] ";
      }
    }
  }

  // randomized tiny instances for every model and conditional family
  for (const std::uint64_t seed : {401u, 402u, 403u}) {
    Rng mk(seed);
    Matrix a(4, 3);
    Mask mask(4, 3);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        a(i, j) = 0.5 + 3.5 * mk.uniform();
        mask.set(i, j, mk.uniform() < 0.75);
      }
    mask.set(0, 0, true);
    const ObservedMatrix data = ObservedMatrix::from(a, mask);
    PriorState prior = make_prior_state(ModelKind::kGrrn, 4, 3, 2);
    HyperParams h;
    Rng init_rng(seed + 5);
    FactorState state =
        init_state(ModelKind::kGrrn, data, 2, h, beta_lambda, prior, init_rng);

    for (const ModelKind model : {ModelKind::kGrrn, ModelKind::kGee,
                                  ModelKind::kGtt, ModelKind::kGttn}) {
      for (std::size_t m = 0; m < 4; m += 3) {
        const auto rep = vf::brute_conditional_check(
            model, vf::ConditionalKind::kW, state, prior, data, hyper,
            beta_lambda, m, 1);
        ++checks;
        if (!rep.pass) {
          ++failures;
          log << "[" << to_string(model) << " w seed " << seed << "] ";
        }
      }
      const auto repz = vf::brute_conditional_check(
          model, vf::ConditionalKind::kZ, state, prior, data, hyper,
          beta_lambda, 0, 2);
      ++checks;
      if (!repz.pass) {
        ++failures;
        log << "[" << to_string(model) << " z seed " << seed << "] ";
      }
    }
    for (const ModelKind model : {ModelKind::kGrrn, ModelKind::kGttn}) {
      for (const auto which :
           {vf::ConditionalKind::kMu, vf::ConditionalKind::kTau}) {
        const auto rep = vf::brute_conditional_check(
            model, which, state, prior, data, hyper, beta_lambda, 1, 0);
        ++checks;
        if (!rep.pass) {
          ++failures;
          log << "[" << to_string(model) << " " << vf::to_string(which)
              << " seed " << seed << "] ";
        }
      }
    }
    const auto repl = vf::brute_conditional_check(
        ModelKind::kGrrn, vf::ConditionalKind::kLambda, state, prior, data,
        hyper, beta_lambda, 2, 1);
    ++checks;
    if (!repl.pass) {
      ++failures;
      log << "[lambda seed " << seed << "] ";
    }
    const auto reps = vf::brute_conditional_check(
        ModelKind::kGrrn, vf::ConditionalKind::kSigma2, state, prior, data,
        hyper, beta_lambda, 0, 0);
    ++checks;
    if (!reps.pass) {
      ++failures;
      log << "[sigma2 seed " << seed << "] ";
    }
  }

  // negative controls must fail
  {
    Matrix a(1, 1);
    a(0, 0) = 2.0;
    const ObservedMatrix data = ObservedMatrix::from(a, Mask(1, 1, true));
    FactorState state;
    state.W = Matrix(1, 1, 0.5);
    state.Z = Matrix(1, 1, 1.0);
    state.sigma2 = 1.0;
    PriorState prior = make_prior_state(ModelKind::kGrrn, 1, 1, 1);
    prior.mu_W(0, 0) = prior.tau_W(0, 0) = prior.lambda_W(0, 0) = 1.0;
    prior.mu_Z(0, 0) = prior.tau_Z(0, 0) = prior.lambda_Z(0, 0) = 1.0;
    for (const auto perturb : {vf::Perturb::kFirstParam, vf::Perturb::kSecondParam}) {
      const auto rep = vf::brute_conditional_check(
          ModelKind::kGrrn, vf::ConditionalKind::kW, state, prior, data, hyper,
          beta_lambda, 0, 0, perturb);
      ++checks;
      if (rep.pass) {
        ++failures;
        log << "[negative control passed unexpectedly] ";
      }
    }
  }

  const double elapsed = timer.seconds();
  std::ostringstream os;
  os << checks << " checks, " << failures << " failures " << log.str()
     << elapsed << "s (limit 300)";
  detail = os.str();
  return failures == 0 && elapsed < 300.0;
}

// ---------------------------------------------------------------------------

bool criterion_synthetic_recovery(std::string& detail) {
  Timer timer;
  std::size_t ok = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SyntheticData syn = synthetic_generate(50, 40, 5, 0.1, seed * 1000);
    RunConfig cfg;
    cfg.kind = ModelKind::kGrrn;
    cfg.latent_dim = 5;
    cfg.iterations = 500;
    cfg.burn_in = 400;
    cfg.seed = seed;
    const RunTrace t = run_gibbs(cfg, syn.data);
    worst = std::max(worst, t.mean_sample_train_mse);
    if (t.mean_sample_train_mse <= 0.02) ++ok;
  }
  const double elapsed = timer.seconds();
  std::ostringstream os;
  os << ok << "/10 seeds with post-burn-in train MSE <= 0.02 (need >= 9), "
     << "worst " << worst << "; " << elapsed << "s (limit 120)";
  detail = os.str();
  return ok >= 9 && elapsed < 120.0;
}

// ---------------------------------------------------------------------------

struct Ml100k {
  ObservedMatrix data;
  std::string table_note;
  bool dims_exact = false;
  bool fraction_ok = false;
};

std::optional<Ml100k> load_cleaned_ml100k(std::string& detail) {
  const auto path = find_ml100k();
  if (!path) {
    detail = kMl100kHint;
    return std::nullopt;
  }
  Ml100k out;
  out.data = clean_min_observed(
      load_ratings(path->string(), RatingsFormat::kUData), 3);
  const double frac =
      static_cast<double>(out.data.observed_count) /
      (static_cast<double>(out.data.rows()) * static_cast<double>(out.data.cols()));
  out.dims_exact = out.data.rows() == 943 && out.data.cols() == 1473 &&
                   out.data.observed_count == 99723;
  out.fraction_ok = std::abs(frac - 0.072) <= 0.001;
  std::ostringstream os;
  os << "cleaned " << out.data.rows() << "x" << out.data.cols() << ", "
     << out.data.observed_count << " observed, fraction " << frac
     << (out.dims_exact ? " (reference dimensions exact)"
                        : " (documented fallback: fraction within 0.072 +/- 0.001)");
  out.table_note = os.str();
  return out;
}

bool criterion_ml100k_sparsity(std::string& detail) {
  Timer timer;
  std::string note;
  auto ml = load_cleaned_ml100k(note);
  if (!ml) {
    detail = note;
    return false;
  }
  if (!ml->dims_exact && !ml->fraction_ok) {
    detail = "cleaned dataset matches neither the reference dimensions nor "
             "the fraction fallback: " + ml->table_note;
    return false;
  }

  ExperimentSpec spec;
  spec.kind = ExperimentKind::kSparsity;
  spec.base.iterations = 500;
  spec.base.burn_in = 400;
  spec.base.seed = 20220522;
  spec.repeats = 3;
  spec.max_workers = 0;

  // GRRN at K=20, 97% of the grid unobserved: held-out MSE within 1.02 +/- 0.15
  spec.models = {ModelKind::kGrrn};
  spec.k_values = {20};
  spec.levels = {0.97};
  const ExperimentResult r20 = run_sparsity(spec, ml->data);
  const double grrn20 = r20.aggregates.at(0).test_mse_mean;

  // strict model ordering at K=40: GRRN < GTT <= GTTN < GEE
  spec.models = {ModelKind::kGrrn, ModelKind::kGtt, ModelKind::kGttn,
                 ModelKind::kGee};
  spec.k_values = {40};
  const ExperimentResult r40 = run_sparsity(spec, ml->data);
  auto mean_of = [&](ModelKind m) {
    for (const auto& a : r40.aggregates)
      if (a.key.model == m) return a.test_mse_mean;
    return std::nan("");
  };
  const double grrn = mean_of(ModelKind::kGrrn);
  const double gtt = mean_of(ModelKind::kGtt);
  const double gttn = mean_of(ModelKind::kGttn);
  const double gee = mean_of(ModelKind::kGee);
  const bool ordering = grrn < gtt && gtt <= gttn && gttn < gee;

  const double elapsed = timer.seconds();
  std::ostringstream os;
  os << ml->table_note << "; K=20 f=0.97 GRRN held-out MSE " << grrn20
     << " (want 1.02 +/- 0.15); K=40 f=0.97 means GRRN " << grrn << " GTT "
     << gtt << " GTTN " << gttn << " GEE " << gee
     << (ordering ? " (ordering holds)" : " (ordering violated)") << "; "
     << elapsed << "s (target 1800)";
  detail = os.str();
  return (ml->dims_exact || ml->fraction_ok) &&
         std::abs(grrn20 - 1.02) <= 0.15 && ordering && elapsed < 1800.0;
}

bool criterion_ml100k_divergence(std::string& detail) {
  Timer timer;
  std::string note;
  auto ml = load_cleaned_ml100k(note);
  if (!ml) {
    detail = note;
    return false;
  }
  ExperimentSpec spec;
  spec.kind = ExperimentKind::kSparsity;
  spec.base.iterations = 500;
  spec.base.burn_in = 400;
  spec.base.seed = 19;
  spec.repeats = 2;
  spec.models = {ModelKind::kGee, ModelKind::kGrrn};
  spec.k_values = {50};
  spec.levels = {0.98};
  const ExperimentResult r = run_sparsity(spec, ml->data);

  bool gee_diverges = true;
  bool grrn_stable = true;
  double gee_min = 1e300, grrn_max = 0.0;
  for (const auto& c : r.cells) {
    if (c.key.model == ModelKind::kGee) {
      const double v = c.test_mse_of_posterior_mean;
      gee_min = std::min(gee_min, v);
      if (!(c.diverged || v > 1e3)) gee_diverges = false;
    } else {
      grrn_max = std::max(grrn_max, c.test_mse_of_posterior_mean);
      if (c.diverged || !(c.test_mse_of_posterior_mean < 2.0))
        grrn_stable = false;
    }
  }
  const double elapsed = timer.seconds();
  std::ostringstream os;
  os << "K=50 f=0.98: GEE min held-out MSE " << gee_min
     << " (want > 1e3 or diverged), GRRN max " << grrn_max << " (want < 2.0); "
     << elapsed << "s";
  detail = os.str();
  return gee_diverges && grrn_stable;
}

// ---------------------------------------------------------------------------

bool criterion_figures(std::string& detail) {
  Timer timer;
  std::ostringstream os;
  bool ok = true;

  // noise metric ladder on synthetic data: maximal at zero ratio and
  // nonincreasing along the ladder, tolerating at most one inversion
  {
    const SyntheticData syn = synthetic_generate(60, 45, 5, 0.05, 404);
    ExperimentSpec spec;
    spec.kind = ExperimentKind::kNoise;
    spec.models = {ModelKind::kGrrn};
    spec.k_values = {5};
    spec.levels = {0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0};
    spec.repeats = 1;
    spec.base.iterations = 500;
    spec.base.burn_in = 400;
    spec.base.seed = 11;
    const ExperimentResult r = run_noise(spec, syn.data);
    std::vector<double> metric;
    for (const auto& c : r.cells) metric.push_back(c.metric_var_to_mse);
    std::size_t inversions = 0;
    bool max_at_zero = true;
    for (std::size_t i = 1; i < metric.size(); ++i) {
      if (metric[i] > metric[i - 1]) ++inversions;
      if (metric[i] > metric[0]) max_at_zero = false;
    }
    os << "noise metric ladder ";
    for (const double m : metric) os << m << " ";
    os << "(inversions " << inversions << ", max-at-zero "
       << (max_at_zero ? "yes" : "no") << ")";
    ok = ok && inversions <= 1 && max_at_zero;
  }

  // GRRN training fit improves with K on MovieLens 100K
  {
    std::string note;
    auto ml = load_cleaned_ml100k(note);
    if (!ml) {
      os << "; K-monotonicity on MovieLens 100K: " << note;
      ok = false;
    } else {
      ExperimentSpec spec;
      spec.kind = ExperimentKind::kConvergence;
      spec.models = {ModelKind::kGrrn};
      spec.k_values = {20, 50};
      spec.repeats = 1;
      spec.base.iterations = 500;
      spec.base.burn_in = 400;
      spec.base.seed = 5;
      const ExperimentResult r = run_convergence(spec, ml->data);
      const double k20 = r.cells.at(0).train_mse_mean_of_samples;
      const double k50 = r.cells.at(1).train_mse_mean_of_samples;
      os << "; GRRN train MSE K=20 " << k20 << " vs K=50 " << k50
         << (k50 <= k20 ? " (improves with K)" : " (regressed with K)");
      ok = ok && k50 <= k20;
    }
  }

  os << "; " << timer.seconds() << "s";
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------------------

bool criterion_determinism(std::string& detail) {
  Timer timer;
  const fs::path fixture = fs::temp_directory_path() / "bnmf_acc_fixture.tsv";
  {
    const SyntheticData syn = synthetic_generate(25, 20, 3, 0.1, 8);
    save_ratings(syn.data, fixture.string());
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  auto run = [&](const std::string& args) {
    const std::string cmd =
        std::string(BNMF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };

  const fs::path d1 = fs::temp_directory_path() / "bnmf_acc_det1";
  const fs::path d2 = fs::temp_directory_path() / "bnmf_acc_det2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  const std::string fit = "fit --dataset " + fixture.string() +
                          " --format synthetic --model GRRN --k 3"
                          " --iterations 60 --burn-in 50 --seed 99 --out ";
  const std::string sweep = "sparsity --dataset " + fixture.string() +
                            " --format synthetic --model GRRN,GEE --k 2"
                            " --fraction 0.6 --repeats 2 --iterations 40"
                            " --burn-in 30 --seed 4 --threads 2 --out ";
  bool ok = run(fit + (d1 / "fit").string()) == 0 &&
            run(fit + (d2 / "fit").string()) == 0 &&
            run(sweep + (d1 / "sweep").string()) == 0 &&
            run(sweep + (d2 / "sweep").string()) == 0;
  std::string which;
  if (ok) {
    for (const std::string rel :
         {"fit/trace.csv", "fit/prediction.csv", "sweep/results.csv",
          "sweep/aggregate.csv"}) {
      if (slurp(d1 / rel) != slurp(d2 / rel)) {
        ok = false;
        which += rel + " ";
      }
    }
  } else {
    which = "cli invocation failed";
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove(fixture);
  std::ostringstream os;
  os << (ok ? "trace, prediction, results and aggregate files byte-identical "
              "across reruns"
            : "mismatch: " + which)
     << "; " << timer.seconds() << "s";
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------------------

bool criterion_complexity(std::string& detail) {
  Timer timer;
  const SyntheticData syn = synthetic_generate(100, 80, 5, 0.1, 3);
  HyperParams hyper;
  const std::size_t sweeps = 30;

  auto time_k = [&](std::size_t k) {
    std::vector<double> times;
    for (int rep = 0; rep < 3; ++rep) {
      Rng rng(1000 + k + rep);
      PriorState prior = make_prior_state(ModelKind::kGrrn, 100, 80, k);
      FactorState state =
          init_state(ModelKind::kGrrn, syn.data, k, hyper, 0.8, prior, rng);
      const Timer t;
      for (std::size_t s = 0; s < sweeps; ++s)
        gibbs_sweep(ModelKind::kGrrn, state, prior, syn.data, hyper, 0.8, rng);
      times.push_back(t.seconds() / static_cast<double>(sweeps));
    }
    std::sort(times.begin(), times.end());
    return times[1];  // median of three repeats
  };

  const double t10 = time_k(10);
  const double t20 = time_k(20);
  const double t40 = time_k(40);
  const double exponent = std::log(t40 / t10) / std::log(4.0);
  const double elapsed = timer.seconds();
  std::ostringstream os;
  os << "median per-sweep seconds: K=10 " << t10 << ", K=20 " << t20
     << ", K=40 " << t40 << "; growth exponent " << exponent
     << " (bound 2, slack to 2.2); " << elapsed << "s";
  detail = os.str();
  return exponent <= 2.2;
}

// ---------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* name;
  std::function<bool(std::string&)> fn;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--criterion" && i + 1 < argc)
      only = std::atoi(argv[i + 1]);
  }

  const std::vector<Criterion> criteria = {
      {1, "distribution kernel", criterion_distribution_kernel},
      {2, "conditional correctness", criterion_conditionals},
      {3, "synthetic recovery", criterion_synthetic_recovery},
      {4, "MovieLens 100K held-out reference values", criterion_ml100k_sparsity},
      {5, "MovieLens 100K divergence regime", criterion_ml100k_divergence},
      {6, "qualitative figure properties", criterion_figures},
      {7, "determinism", criterion_determinism},
      {8, "per-sweep complexity bound", criterion_complexity},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    std::string detail;
    bool pass = false;
    try {
      pass = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", c.id,
                c.name, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bnmf/distributions.hpp"
#include "bnmf/model.hpp"
#include "bnmf/rng.hpp"

namespace bnmf {

enum class ModelKind { kGrrn, kGee, kGtt, kGttn, kNpnmf };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct RunConfig {
  ModelKind kind = ModelKind::kGrrn;
  std::size_t latent_dim = 10;
  std::size_t iterations = 500;
  std::size_t burn_in = 400;
  std::uint64_t seed = 0;
  HyperParams hyper;
  // The harness only evaluates masked cells; a full M x N posterior-mean
  // accumulation is opt-in (single fits writing prediction files).
  bool accumulate_full_prediction = false;

  void validate() const;
};

struct RunTrace {
  std::vector<double> train_mse;  // one entry per iteration
  std::vector<double> test_mse;   // empty when no held-out set was supplied

  // Average of W*Z over the retained post-burn-in samples. Cells that were
  // never accumulated (outside train/test masks, unless full accumulation was
  // requested) hold NaN.
  Matrix posterior_mean;
  std::size_t samples_accumulated = 0;

  // Both readings of "mean loss after burn-in" are reported: the mean of the
  // per-sample losses and the loss of the posterior-mean prediction. Test
  // statistics stay NaN when no held-out set was supplied.
  double mean_sample_train_mse = std::numeric_limits<double>::quiet_NaN();
  double mean_sample_test_mse = std::numeric_limits<double>::quiet_NaN();
  double train_mse_of_posterior_mean = std::numeric_limits<double>::quiet_NaN();
  double test_mse_of_posterior_mean = std::numeric_limits<double>::quiet_NaN();

  double resolved_beta_lambda = 0.0;   // meaningful for GRRN only
  std::size_t gee_variance_clamps = 0;
  bool has_test = false;
};

// ---------------------------------------------------------------------------
// Conditional posterior parameters. Each function evaluates its closed form
// directly from the current state, with likelihood sums running over observed
// cells only; a row or column with nothing observed degrades to the pure
// prior. These are the reference path; the sweep reproduces them through an
// incrementally maintained residual cache.

// GRRN w: TN with parent variance sigma^2 / (sum z^2 + tau_W sigma^2) and
// parent mean ((1/sigma^2) sum z (a - rest) + tau_W mu') * variance, where
// mu' = (tau_W mu_W - lambda_W) / tau_W.
TnParams grrn_cond_w(const FactorState& state, const PriorState& prior,
                     const ObservedMatrix& data, std::size_t m, std::size_t k);
TnParams grrn_cond_z(const FactorState& state, const PriorState& prior,
                     const ObservedMatrix& data, std::size_t k, std::size_t n);

// Gaussian conditional for the unbounded prior mean.
GaussianParams grrn_cond_mu(double w, double tau_w, const HyperParams& hyper);
// Gamma conditional for the prior precision: (a + 1/2, b + (w - mu)^2 / 2).
GammaParams grrn_cond_tau(double w, double mu_w, const HyperParams& hyper);
// Gamma conditional for the rectifier rate: (alpha + 1, beta + w). The beta
// here is the resolved value.
GammaParams grrn_cond_lambda(double w, double beta_lambda,
                             const HyperParams& hyper);

// Inverse-Gamma conditional for the likelihood variance, counting observed
// cells only: (|observed|/2 + alpha, residual_sum/2 + beta).
InvGammaParams cond_sigma2(const FactorState& state, const ObservedMatrix& data,
                           const HyperParams& hyper);

// GEE w: exponential prior, no prior precision; a zero likelihood sum of
// squares has nothing to regularize it, so the variance is clamped at
// sigma^2 / 1e-12 (the caller may count clamps).
TnParams gee_cond_w(const FactorState& state, const ObservedMatrix& data,
                    std::size_t m, std::size_t k, const HyperParams& hyper,
                    std::size_t* clamp_counter = nullptr);
TnParams gee_cond_z(const FactorState& state, const ObservedMatrix& data,
                    std::size_t k, std::size_t n, const HyperParams& hyper,
                    std::size_t* clamp_counter = nullptr);

// GTT w: fixed truncated-normal prior (hyper.gtt_mu, hyper.gtt_tau).
TnParams gtt_cond_w(const FactorState& state, const ObservedMatrix& data,
                    std::size_t m, std::size_t k, const HyperParams& hyper);
TnParams gtt_cond_z(const FactorState& state, const ObservedMatrix& data,
                    std::size_t k, std::size_t n, const HyperParams& hyper);

// GTTN w: per-entry truncated-normal prior from PriorState.
TnParams gttn_cond_w(const FactorState& state, const PriorState& prior,
                     const ObservedMatrix& data, std::size_t m, std::size_t k);
TnParams gttn_cond_z(const FactorState& state, const PriorState& prior,
                     const ObservedMatrix& data, std::size_t k, std::size_t n);

// The GTTN mu and tau conditionals share their parameter formulas with the
// GRRN ones; kept as named entry points so call sites read like the model.
GaussianParams gttn_cond_mu(double w, double tau_w, const HyperParams& hyper);
GammaParams gttn_cond_tau(double w, double mu_w, const HyperParams& hyper);

// ---------------------------------------------------------------------------

PriorState make_prior_state(ModelKind kind, std::size_t m, std::size_t n,
                            std::size_t k);

// Draws the initial state from the model's own priors: hyperprior variables
// first, then factors from the resulting priors, then sigma^2.
FactorState init_state(ModelKind kind, const ObservedMatrix& train,
                       std::size_t latent_dim, const HyperParams& hyper,
                       double beta_lambda, PriorState& prior, Rng& rng);

double resolve_beta_lambda(const HyperParams& hyper, const ObservedMatrix& train,
                           std::size_t latent_dim);

struct SweepDiagnostics {
  std::size_t gee_variance_clamps = 0;
  double residual_sum_squares = 0.0;  // over observed cells, at sweep exit
};

// One full Gibbs sweep: for each k, the W column block (w then its hyperprior
// variables, per row), then the Z row block (per column), then sigma^2 once.
// Residuals over observed cells are refreshed on entry and maintained
// incrementally per scalar draw. Any non-finite conditional parameter aborts
// with a NumericalError naming the variable, indices, and parameters.
void gibbs_sweep(ModelKind kind, FactorState& state, PriorState& prior,
                 const ObservedMatrix& data, const HyperParams& hyper,
                 double beta_lambda, Rng& rng,
                 SweepDiagnostics* diag = nullptr);

// Full Gibbs run: init from priors, `iterations` sweeps, train (and test) MSE
// per iteration, posterior-mean prediction accumulated over the
// iterations - burn_in retained samples.
RunTrace run_gibbs(const RunConfig& config, const ObservedMatrix& train,
                   const ObservedMatrix* test = nullptr);

// Mask-weighted multiplicative updates (the non-probabilistic baseline):
//   W <- W .* ((M.*A) Z^T) ./ ((M.*(WZ)) Z^T + eps),  Z analogously.
// Observed values must be nonnegative.
RunTrace run_npnmf(const RunConfig& config, const ObservedMatrix& train,
                   const ObservedMatrix* test = nullptr);

// Dispatches on config.kind.
RunTrace run_model(const RunConfig& config, const ObservedMatrix& train,
                   const ObservedMatrix* test = nullptr);

}  // namespace bnmf

#pragma once

#include <string>

#include "bnmf/model.hpp"
#include "bnmf/samplers.hpp"
#include "bnmf/verify.hpp"

namespace bnmf::verify {

// Which conditional of the model to check. Indices (i, j) mean (m, k) for
// kW and the hyperprior variables (W side), (k, n) for kZ, and are ignored
// for kSigma2.
enum class ConditionalKind { kW, kZ, kMu, kTau, kLambda, kSigma2 };

const char* to_string(ConditionalKind kind);

// Negative-control hook: scales one parameter of the implemented conditional
// before comparing, so a deliberately wrong answer must be detected.
enum class Perturb { kNone, kFirstParam, kSecondParam };

struct BruteCheckReport {
  bool pass = false;
  double implied_mean = 0.0;
  double implied_variance = 0.0;
  double grid_mean = 0.0;
  double grid_variance = 0.0;
  double mean_err = 0.0;      // |implied - grid| / max(|grid mean|, grid sd)
  double var_rel_err = 0.0;   // relative, when variance is checked
  bool variance_checked = true;
  bool grid_converged = true;
  int widenings = 0;          // domain retries before the grid settled
  std::string note;
};

// Compares the implemented conditional's analytic moments against moments of
// the quadrature-normalized unnormalized conditional density
// (full likelihood over all observed cells times the prior term), built from
// the model densities directly with the oracle Phi. Normalizing "constants"
// of the hierarchical priors that depend on the integration variable are kept
// in the integrand, so their cancellation is measured rather than assumed.
// An under-resolved grid is retried on a widened domain and then flagged.
BruteCheckReport brute_conditional_check(
    ModelKind model, ConditionalKind which, const FactorState& state,
    const PriorState& prior, const ObservedMatrix& data,
    const HyperParams& hyper, double beta_lambda, std::size_t i, std::size_t j,
    Perturb perturb = Perturb::kNone, double mean_tol = 2e-3,
    double var_rel_tol = 1e-2);

}  // namespace bnmf::verify

#pragma once

#include "bnmf/rng.hpp"

namespace bnmf {

// Distribution kernel for the factorization models: Gaussian, Gamma,
// inverse-Gamma, exponential, truncated-normal (TN) and rectified-normal (RN)
// families. The TN lives on x >= 0 and is parameterized by the "parent mean"
// and "parent precision" of the underlying normal; the RN is the normalized
// product of a normal and an exponential density and reduces to a TN with
// shifted parent mean (tau*mu - lambda)/tau. The two families are kept
// strictly distinct by name throughout.
//
// Precisions and rates below 1e-12 are floored there: Gibbs chains can wander
// toward degenerate precisions and must not produce NaN. Nonpositive or
// non-finite parameters are caller bugs and raise DomainError.

inline constexpr double kPrecisionFloor = 1e-12;

struct TnParams {
  double parent_mean = 0.0;
  double parent_precision = 1.0;
};

struct RnParams {
  double parent_mean = 0.0;
  double parent_precision = 1.0;
  double rate = 1.0;  // the exponential rectifier lambda

  // Equivalent truncated normal: identical density at every x >= 0.
  TnParams equivalent_tn() const;
};

// Gamma is shape-rate, inverse-Gamma is shape-scale, exactly as the model
// densities are written; call sites say which is meant.
struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;

  double mean() const { return shape / rate; }
  double variance() const { return shape / (rate * rate); }
};

struct InvGammaParams {
  double shape = 1.0;
  double scale = 1.0;

  // defined for shape > 1
  double mean() const { return scale / (shape - 1.0); }
};

struct GaussianParams {
  double mean = 0.0;
  double precision = 1.0;
};

// Standard normal CDF via the complementary error function; stable for
// arguments far beyond |x| = 8. Non-finite input raises DomainError.
double std_normal_cdf(double x);

// log Phi(x), accurate deep into the lower tail (asymptotic expansion once
// erfc would underflow).
double std_normal_log_cdf(double x);

// The RN normalizing constant
//   C(mu, tau, lambda) = lambda * Phi((tau*mu - lambda)/sqrt(tau))
//                        * exp(-mu*lambda + lambda^2 / (2 tau)),
// computed in log space: the exponential factor and the tail CDF can each
// overflow/underflow while their product stays moderate.
double rn_normalizer(const RnParams& p);
double rn_log_normalizer(const RnParams& p);

// Densities on x >= 0 (zero below), plus log variants.
double tn_density(double x, const TnParams& p);
double tn_log_density(double x, const TnParams& p);
double rn_density(double x, const RnParams& p);
double rn_log_density(double x, const RnParams& p);

// Exact samplers. All are pure given the rng handle.
//
// TN sampling is by rejection: plain Gaussian rejection while the parent mean
// is inside the positive region, switching to an exponential-proposal scheme
// (Robert-style) once the parent mean drops below zero, which keeps the
// expected iteration count O(1) arbitrarily deep in the tail.
double sample_tn(const TnParams& p, Rng& rng);
double sample_rn(const RnParams& p, Rng& rng);

// Marsaglia-Tsang for shape >= 1, boosted for shape < 1.
double sample_gamma(const GammaParams& p, Rng& rng);
double sample_inverse_gamma(const InvGammaParams& p, Rng& rng);

double sample_gaussian(const GaussianParams& p, Rng& rng);
double sample_exponential(double rate, Rng& rng);

}  // namespace bnmf

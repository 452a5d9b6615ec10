#pragma once

#include <functional>

namespace bnmf::verify {

// Test-support oracles. Everything in this namespace is implemented without
// touching the production distributions code paths: the normal CDF comes from
// a series / continued-fraction evaluation rather than erfc, and integrals
// come from adaptive quadrature. Agreement between the two sides is evidence,
// not tautology.

struct QuadratureSpec {
  std::function<double(double)> integrand;
  double lo = 0.0;
  double hi = 1.0;  // callers truncate infinite tails themselves
  double abs_tol = 1e-10;
  int max_depth = 40;
  std::size_t max_evals = 4'000'000;  // hard budget; exceeding flags the result
};

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  bool converged = false;
};

// Adaptive Simpson integration of spec.integrand over [lo, hi]. A panel that
// cannot meet its tolerance share within max_depth subdivisions marks the
// result non-converged; the best estimate is still returned, never silently.
QuadratureResult integrate(const QuadratureSpec& spec);

// Standard normal pdf / cdf / upper tail, long-double internals.
// cdf: erf power series for small arguments, Lentz continued fraction for
// the tails. Good to ~1e-15 relative everywhere, including Q(40).
double std_normal_pdf_oracle(double x);
double std_normal_cdf_oracle(double x);
double std_normal_upper_tail_oracle(double x);  // 1 - Phi(x), no cancellation
double std_normal_log_cdf_oracle(double x);

// Regularized lower incomplete gamma P(a, x); the Gamma(shape, rate) CDF is
// P(shape, rate * x). Series + continued fraction, long doubles.
double reg_lower_inc_gamma(double a, double x);

struct TnMomentsResult {
  double mean = 0.0;
  double variance = 0.0;
};

// Analytic moments of the x >= 0 truncated normal with the given parent mean
// and parent precision, evaluated through the oracle Phi.
TnMomentsResult tn_moments(double parent_mean, double parent_precision);

}  // namespace bnmf::verify

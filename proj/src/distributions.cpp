#include "bnmf/distributions.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "bnmf/errors.hpp"

namespace bnmf {

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727417803297364056177;
constexpr double kSqrt1_2 = 0.7071067811865475244008443621048490;

double floored(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw DomainError(std::string(name) + " must be finite and > 0, got " +
                      std::to_string(v));
  return v < kPrecisionFloor ? kPrecisionFloor : v;
}

void check_finite(double v, const char* name) {
  if (!std::isfinite(v))
    throw DomainError(std::string(name) + " must be finite");
}

}  // namespace

TnParams RnParams::equivalent_tn() const {
  const double tau = floored(parent_precision, "parent_precision");
  const double lambda = floored(rate, "rate");
  check_finite(parent_mean, "parent_mean");
  return {(tau * parent_mean - lambda) / tau, tau};
}

double std_normal_cdf(double x) {
  check_finite(x, "std_normal_cdf argument");
  return 0.5 * std::erfc(-x * kSqrt1_2);
}

double std_normal_log_cdf(double x) {
  check_finite(x, "std_normal_log_cdf argument");
  if (x > -30.0) {
    return std::log(0.5 * std::erfc(-x * kSqrt1_2));
  }
  // lower-tail asymptotic: Phi(x) ~ phi(x)/(-x) * (1 - 1/x^2 + 3/x^4 - ...)
  const double z2 = x * x;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - kLogSqrt2Pi - std::log(-x) + std::log(series);
}

double rn_log_normalizer(const RnParams& p) {
  const double tau = floored(p.parent_precision, "parent_precision");
  const double lambda = floored(p.rate, "rate");
  check_finite(p.parent_mean, "parent_mean");
  const double mu = p.parent_mean;
  const double y = (tau * mu - lambda) / std::sqrt(tau);
  return std::log(lambda) + std_normal_log_cdf(y) - mu * lambda +
         lambda * lambda / (2.0 * tau);
}

double rn_normalizer(const RnParams& p) { return std::exp(rn_log_normalizer(p)); }

double tn_log_density(double x, const TnParams& p) {
  const double tau = floored(p.parent_precision, "parent_precision");
  check_finite(p.parent_mean, "parent_mean");
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  const double mu = p.parent_mean;
  const double d = x - mu;
  // 1 - Phi(-mu sqrt(tau)) = Phi(mu sqrt(tau))
  return 0.5 * std::log(tau) - kLogSqrt2Pi - 0.5 * tau * d * d -
         std_normal_log_cdf(mu * std::sqrt(tau));
}

double tn_density(double x, const TnParams& p) {
  if (x < 0.0) {
    floored(p.parent_precision, "parent_precision");
    return 0.0;
  }
  return std::exp(tn_log_density(x, p));
}

double rn_log_density(double x, const RnParams& p) {
  return tn_log_density(x, p.equivalent_tn());
}

double rn_density(double x, const RnParams& p) {
  return tn_density(x, p.equivalent_tn());
}

double sample_tn(const TnParams& p, Rng& rng) {
  const double tau = floored(p.parent_precision, "parent_precision");
  check_finite(p.parent_mean, "parent_mean");
  const double sigma = 1.0 / std::sqrt(tau);
  const double alpha = -p.parent_mean / sigma;  // lower bound in standard units
  double z;
  if (alpha <= 0.0) {
    // parent mean inside the positive region: accept rate >= 1/2
    do {
      z = rng.normal();
    } while (z < alpha);
  } else {
    // tail regime: exponential proposal shifted to the boundary
    const double rate = 0.5 * (alpha + std::sqrt(alpha * alpha + 4.0));
    for (;;) {
      z = alpha + rng.exponential(rate);
      const double d = z - rate;
      if (rng.uniform() <= std::exp(-0.5 * d * d)) break;
    }
  }
  return p.parent_mean + sigma * z;
}

double sample_rn(const RnParams& p, Rng& rng) {
  return sample_tn(p.equivalent_tn(), rng);
}

double sample_gamma(const GammaParams& p, Rng& rng) {
  const double rate = floored(p.rate, "rate");
  if (!(p.shape > 0.0) || !std::isfinite(p.shape))
    throw DomainError("gamma shape must be finite and > 0");
  double shape = p.shape;
  double boost = 1.0;
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a+1) * U^{1/a}
    boost = std::pow(rng.uniform_pos(), 1.0 / shape);
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_pos();
    if (u < 1.0 - 0.0331 * x * x * x * x) return boost * d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return boost * d * v / rate;
  }
}

double sample_inverse_gamma(const InvGammaParams& p, Rng& rng) {
  // X ~ Gamma(shape, rate=scale)  =>  1/X ~ InvGamma(shape, scale)
  return 1.0 / sample_gamma({p.shape, p.scale}, rng);
}

double sample_gaussian(const GaussianParams& p, Rng& rng) {
  const double tau = floored(p.precision, "precision");
  check_finite(p.mean, "mean");
  return p.mean + rng.normal() / std::sqrt(tau);
}

double sample_exponential(double rate, Rng& rng) {
  return rng.exponential(floored(rate, "rate"));
}

}  // namespace bnmf

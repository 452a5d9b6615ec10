#include "bnmf/verify.hpp"

#include <cmath>
#include <limits>

#include "bnmf/errors.hpp"

namespace bnmf::verify {

namespace {

constexpr long double kSqrtPiL = 1.772453850905516027298167483341145182L;
constexpr long double kSqrt2L = 1.414213562373095048801688724209698079L;
constexpr long double kInvSqrt2PiL = 0.398942280401432677939946059934381868L;

// erf by the non-alternating series erf(z) = 2/sqrt(pi) * e^{-z^2} *
// sum_n 2^n z^{2n+1} / (1*3*...*(2n+1)); every term positive, no cancellation.
long double erf_series(long double z) {
  long double term = z;
  long double sum = z;
  for (int n = 1; n < 400; ++n) {
    term *= 2.0L * z * z / (2.0L * n + 1.0L);
    sum += term;
    if (term < sum * 1e-21L) break;
  }
  return 2.0L / kSqrtPiL * std::exp(-z * z) * sum;
}

// erfc for z > 0 via the continued fraction
//   sqrt(pi) e^{z^2} erfc(z) = 1/(z+ 1/2/(z+ 1/(z+ 3/2/(z+ ...))))
// evaluated with the modified Lentz algorithm.
long double erfc_cf(long double z) {
  const long double tiny = 1e-4900L;
  long double f = z;
  if (f == 0.0L) f = tiny;
  long double c = f;
  long double d = 0.0L;
  for (int n = 1; n < 20000; ++n) {
    const long double a = n / 2.0L;  // partial numerators 1/2, 1, 3/2, ...
    d = z + a * d;
    if (d == 0.0L) d = tiny;
    c = z + a / c;
    if (c == 0.0L) c = tiny;
    d = 1.0L / d;
    const long double delta = c * d;
    f *= delta;
    if (std::fabs(delta - 1.0L) < 1e-20L) break;
  }
  return std::exp(-z * z) / (kSqrtPiL * f);
}

long double erfc_oracle(long double z) {
  if (z < 0.0L) return 2.0L - erfc_oracle(-z);
  if (z <= 2.0L) return 1.0L - erf_series(z);
  return erfc_cf(z);
}

struct PanelResult {
  long double value;
  long double error;
  bool converged;
};

struct EvalBudget {
  std::size_t used = 0;
  std::size_t cap = 0;
  bool take(std::size_t n) {
    used += n;
    return used <= cap;
  }
};

PanelResult adaptive_simpson(const std::function<double(double)>& f,
                             long double a, long double fa, long double m,
                             long double fm, long double b, long double fb,
                             long double whole, long double tol, int depth,
                             EvalBudget& budget) {
  const long double lm = (a + m) / 2.0L;
  const long double rm = (m + b) / 2.0L;
  const long double flm = f(static_cast<double>(lm));
  const long double frm = f(static_cast<double>(rm));
  const long double h = b - a;
  const long double left = h / 12.0L * (fa + 4.0L * flm + fm);
  const long double right = h / 12.0L * (fm + 4.0L * frm + fb);
  const long double delta = left + right - whole;
  if (std::fabs(delta) <= 15.0L * tol) {
    return {left + right + delta / 15.0L, std::fabs(delta) / 15.0L, true};
  }
  if (depth <= 0 || !budget.take(2)) {
    return {left + right + delta / 15.0L, std::fabs(delta) / 15.0L, false};
  }
  const PanelResult l = adaptive_simpson(f, a, fa, lm, flm, m, fm, left,
                                         tol / 2.0L, depth - 1, budget);
  const PanelResult r = adaptive_simpson(f, m, fm, rm, frm, b, fb, right,
                                         tol / 2.0L, depth - 1, budget);
  return {l.value + r.value, l.error + r.error, l.converged && r.converged};
}

}  // namespace

QuadratureResult integrate(const QuadratureSpec& spec) {
  if (!(spec.abs_tol > 0.0)) throw DomainError("integrate: tolerance must be > 0");
  if (!(spec.lo < spec.hi)) throw DomainError("integrate: requires lo < hi");
  const auto& f = spec.integrand;
  // Seed the recursion with a handful of panels so narrow spikes inside a
  // wide domain are not missed by the first Simpson estimate.
  const int seed_panels = 16;
  long double total = 0.0L, err = 0.0L;
  bool ok = true;
  EvalBudget budget{0, spec.max_evals};
  const long double width = (static_cast<long double>(spec.hi) - spec.lo) / seed_panels;
  for (int p = 0; p < seed_panels; ++p) {
    const long double a = spec.lo + p * width;
    const long double b = (p == seed_panels - 1) ? spec.hi : a + width;
    const long double m = (a + b) / 2.0L;
    const long double fa = f(static_cast<double>(a));
    const long double fb = f(static_cast<double>(b));
    const long double fm = f(static_cast<double>(m));
    const long double whole = (b - a) / 6.0L * (fa + 4.0L * fm + fb);
    const PanelResult r =
        adaptive_simpson(f, a, fa, m, fm, b, fb, whole,
                         static_cast<long double>(spec.abs_tol) / seed_panels,
                         spec.max_depth, budget);
    total += r.value;
    err += r.error;
    ok = ok && r.converged;
  }
  if (!std::isfinite(static_cast<double>(total))) ok = false;
  return {static_cast<double>(total), static_cast<double>(err), ok};
}

double std_normal_pdf_oracle(double x) {
  const long double t = x;
  return static_cast<double>(kInvSqrt2PiL * std::exp(-t * t / 2.0L));
}

double std_normal_cdf_oracle(double x) {
  return static_cast<double>(0.5L * erfc_oracle(-static_cast<long double>(x) / kSqrt2L));
}

double std_normal_upper_tail_oracle(double x) {
  return static_cast<double>(0.5L * erfc_oracle(static_cast<long double>(x) / kSqrt2L));
}

double std_normal_log_cdf_oracle(double x) {
  // long double erfc keeps range down to x ~ -150; beyond that use the tail
  // series Phi(x) = phi(x)/(-x) (1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8 ...)
  const long double v = 0.5L * erfc_oracle(-static_cast<long double>(x) / kSqrt2L);
  if (v > 0.0L) return static_cast<double>(logl(v));
  const long double z = -static_cast<long double>(x);
  const long double z2 = z * z;
  const long double series =
      1.0L - 1.0L / z2 + 3.0L / (z2 * z2) - 15.0L / (z2 * z2 * z2) +
      105.0L / (z2 * z2 * z2 * z2);
  return static_cast<double>(-z2 / 2.0L - logl(z * kSqrt2L * kSqrtPiL) +
                             logl(series));
}

double reg_lower_inc_gamma(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || !std::isfinite(a) || !std::isfinite(x))
    throw DomainError("reg_lower_inc_gamma: requires a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  const long double la = a, lx = x;
  const long double lg = lgammal(la);
  if (lx < la + 1.0L) {
    // series for P(a, x)
    long double ap = la;
    long double sum = 1.0L / la;
    long double del = sum;
    for (int n = 0; n < 100000; ++n) {
      ap += 1.0L;
      del *= lx / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-20L) break;
    }
    return static_cast<double>(sum * std::exp(-lx + la * std::log(lx) - lg));
  }
  // continued fraction for Q(a, x), modified Lentz
  const long double tiny = 1e-4900L;
  long double b = lx + 1.0L - la;
  long double c = 1.0L / tiny;
  long double d = 1.0L / b;
  long double h = d;
  for (int i = 1; i < 100000; ++i) {
    const long double an = -static_cast<long double>(i) * (i - la);
    b += 2.0L;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0L / d;
    const long double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0L) < 1e-20L) break;
  }
  const long double q = std::exp(-lx + la * std::log(lx) - lg) * h;
  return static_cast<double>(1.0L - q);
}

TnMomentsResult tn_moments(double parent_mean, double parent_precision) {
  if (!(parent_precision > 0.0))
    throw DomainError("tn_moments: parent precision must be > 0");
  const long double sigma = 1.0L / std::sqrt(static_cast<long double>(parent_precision));
  const long double mu = parent_mean;
  const long double alpha = -mu / sigma;
  const long double pdf = kInvSqrt2PiL * std::exp(-alpha * alpha / 2.0L);
  const long double tail = 0.5L * erfc_oracle(alpha / kSqrt2L);  // 1 - Phi(alpha)
  const long double hazard = pdf / tail;
  const long double mean = mu + sigma * hazard;
  const long double variance =
      sigma * sigma * (1.0L + alpha * hazard - hazard * hazard);
  return {static_cast<double>(mean), static_cast<double>(variance)};
}

}  // namespace bnmf::verify

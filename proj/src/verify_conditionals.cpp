#include "bnmf/verify_conditionals.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "bnmf/errors.hpp"

namespace bnmf::verify {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

// Full data log-likelihood with one scalar overridden. Brute force over every
// observed cell; validating the sweeps' observed-only algebra is the point.
double data_log_likelihood(const FactorState& state, const ObservedMatrix& data,
                           ConditionalKind which, std::size_t vi, std::size_t vj,
                           double x) {
  const std::size_t kdim = state.k();
  const double sigma2 = which == ConditionalKind::kSigma2 ? x : state.sigma2;
  double ll = 0.0;
  for (std::size_t t = 0; t < data.observed_count; ++t) {
    const std::size_t r = data.obs_row[t], c = data.obs_col[t];
    double pred = 0.0;
    for (std::size_t k = 0; k < kdim; ++k) {
      double w = state.W(r, k);
      double z = state.Z(k, c);
      if (which == ConditionalKind::kW && r == vi && k == vj) w = x;
      if (which == ConditionalKind::kZ && k == vi && c == vj) z = x;
      pred += w * z;
    }
    const double d = data.obs_val[t] - pred;
    ll += -0.5 * (kLog2Pi + std::log(sigma2)) - d * d / (2.0 * sigma2);
  }
  return ll;
}

// log C(mu, tau, lambda) of the rectified-normal family, oracle Phi.
double log_rn_constant(double mu, double tau, double lambda) {
  return std::log(lambda) +
         std_normal_log_cdf_oracle((tau * mu - lambda) / std::sqrt(tau)) -
         mu * lambda + lambda * lambda / (2.0 * tau);
}

// log of the normalized RN density at w >= 0.
double log_rn_density(double w, double mu, double tau, double lambda) {
  const double log_joint = 0.5 * (std::log(tau) - kLog2Pi) -
                           tau * (w - mu) * (w - mu) / 2.0 + std::log(lambda) -
                           lambda * w;
  return log_joint - log_rn_constant(mu, tau, lambda);
}

// log of the normalized TN density at w >= 0.
double log_tn_density(double w, double mu, double tau) {
  return 0.5 * (std::log(tau) - kLog2Pi) - tau * (w - mu) * (w - mu) / 2.0 -
         std_normal_log_cdf_oracle(mu * std::sqrt(tau));
}

double log_gamma_density_unnorm(double x, double shape, double rate) {
  return (shape - 1.0) * std::log(x) - rate * x;
}

struct ImpliedMoments {
  double mean = 0.0;
  double variance = 0.0;
  bool variance_defined = true;
};

struct GridMoments {
  double mass = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double lower_edge_ratio = 0.0;  // integrand at the edges over the peak;
  double upper_edge_ratio = 0.0;  // only soft tails need to have decayed
  bool converged = false;
};

// Integrates exp(logf(x) - shift) and its first two moments over [lo, hi];
// log_domain switches to integration in u = log(x). Moment integrands are
// normalized by `scale` so every integral is O(1) and the absolute quadrature
// tolerance stays meaningful regardless of the variable's magnitude.
GridMoments grid_moments(const std::function<double(double)>& logf, double lo,
                         double hi, double shift, double scale,
                         bool log_domain) {
  // non-finite log values only occur at support boundaries (log 0 terms);
  // the density there is zero
  auto value = [&](double x) {
    const double lf = logf(x);
    return std::isfinite(lf) ? std::exp(lf - shift) : 0.0;
  };
  const double c = std::max(std::abs(scale), 1e-300);
  QuadratureSpec spec;
  spec.abs_tol = 1e-11;
  GridMoments out;
  QuadratureResult m0, m1, m2;
  if (!log_domain) {
    spec.lo = lo;
    spec.hi = hi;
    spec.abs_tol = 1e-11 * std::max(hi - lo, 1.0);
    spec.integrand = value;
    m0 = integrate(spec);
    spec.integrand = [&](double x) { return x / c * value(x); };
    m1 = integrate(spec);
    spec.integrand = [&](double x) { return (x / c) * (x / c) * value(x); };
    m2 = integrate(spec);
  } else {
    spec.lo = std::log(lo);
    spec.hi = std::log(hi);
    spec.abs_tol = 1e-11 * std::max(spec.hi - spec.lo, 1.0);
    auto valu = [&](double u) {
      const double lf = logf(std::exp(u));
      return std::isfinite(lf) ? std::exp(lf + u - shift) : 0.0;
    };
    spec.integrand = valu;
    m0 = integrate(spec);
    spec.integrand = [&](double u) { return std::exp(u) / c * valu(u); };
    m1 = integrate(spec);
    spec.integrand = [&](double u) {
      const double r = std::exp(u) / c;
      return r * r * valu(u);
    };
    m2 = integrate(spec);
  }
  out.mass = m0.value;
  out.converged = m0.converged && m1.converged && m2.converged;
  if (m0.value > 0.0) {
    const double r1 = m1.value / m0.value;
    const double r2 = m2.value / m0.value;
    out.mean = c * r1;
    out.variance = c * c * (r2 - r1 * r1);
  }
  if (!log_domain) {
    const double peak = value(std::clamp(out.mean, lo, hi));
    out.lower_edge_ratio = peak > 0.0 ? value(lo) / peak : 1.0;
    out.upper_edge_ratio = peak > 0.0 ? value(hi) / peak : 1.0;
  } else {
    auto val_at = [&](double x) { return value(x) * x; };
    const double peak = val_at(std::clamp(out.mean, lo, hi));
    out.lower_edge_ratio = peak > 0.0 ? val_at(lo) / peak : 1.0;
    out.upper_edge_ratio = peak > 0.0 ? val_at(hi) / peak : 1.0;
  }
  return out;
}

}  // namespace

const char* to_string(ConditionalKind kind) {
  switch (kind) {
    case ConditionalKind::kW: return "w";
    case ConditionalKind::kZ: return "z";
    case ConditionalKind::kMu: return "mu";
    case ConditionalKind::kTau: return "tau";
    case ConditionalKind::kLambda: return "lambda";
    case ConditionalKind::kSigma2: return "sigma2";
  }
  return "?";
}

BruteCheckReport brute_conditional_check(
    ModelKind model, ConditionalKind which, const FactorState& state,
    const PriorState& prior, const ObservedMatrix& data,
    const HyperParams& hyper, double beta_lambda, std::size_t i, std::size_t j,
    Perturb perturb, double mean_tol, double var_rel_tol) {
  BruteCheckReport rep;

  // --- the implemented conditional and its analytic moments ---------------
  ImpliedMoments implied;
  std::function<double(double)> log_unnorm;  // prior (+likelihood) in the
                                             // integration variable
  double lo = 0.0, hi = 0.0;
  bool log_domain = false;

  const double w_here = which == ConditionalKind::kZ ? state.Z(i, j)
                        : which == ConditionalKind::kW ? state.W(i, j)
                                                       : state.W(i, j);
  switch (which) {
    case ConditionalKind::kW:
    case ConditionalKind::kZ: {
      TnParams tn;
      const bool is_w = which == ConditionalKind::kW;
      switch (model) {
        case ModelKind::kGrrn:
          tn = is_w ? grrn_cond_w(state, prior, data, i, j)
                    : grrn_cond_z(state, prior, data, i, j);
          break;
        case ModelKind::kGee:
          tn = is_w ? gee_cond_w(state, data, i, j, hyper)
                    : gee_cond_z(state, data, i, j, hyper);
          break;
        case ModelKind::kGtt:
          tn = is_w ? gtt_cond_w(state, data, i, j, hyper)
                    : gtt_cond_z(state, data, i, j, hyper);
          break;
        case ModelKind::kGttn:
          tn = is_w ? gttn_cond_w(state, prior, data, i, j)
                    : gttn_cond_z(state, prior, data, i, j);
          break;
        case ModelKind::kNpnmf:
          throw DomainError("brute_conditional_check: NPNMF has no conditionals");
      }
      if (perturb == Perturb::kFirstParam) tn.parent_mean *= 1.1;
      if (perturb == Perturb::kSecondParam) tn.parent_precision *= 1.1;
      const auto mm = tn_moments(tn.parent_mean, tn.parent_precision);
      implied = {mm.mean, mm.variance, true};

      log_unnorm = [&, is_w](double x) {
        double lp = 0.0;
        switch (model) {
          case ModelKind::kGrrn: {
            const double mu = is_w ? prior.mu_W(i, j) : prior.mu_Z(i, j);
            const double tau = is_w ? prior.tau_W(i, j) : prior.tau_Z(i, j);
            const double lam =
                is_w ? prior.lambda_W(i, j) : prior.lambda_Z(i, j);
            lp = log_rn_density(x, mu, tau, lam);
            break;
          }
          case ModelKind::kGee:
            lp = std::log(hyper.gee_lambda) - hyper.gee_lambda * x;
            break;
          case ModelKind::kGtt:
            lp = log_tn_density(x, hyper.gtt_mu, hyper.gtt_tau);
            break;
          case ModelKind::kGttn: {
            const double mu = is_w ? prior.mu_W(i, j) : prior.mu_Z(i, j);
            const double tau = is_w ? prior.tau_W(i, j) : prior.tau_Z(i, j);
            lp = log_tn_density(x, mu, tau);
            break;
          }
          case ModelKind::kNpnmf: break;
        }
        return data_log_likelihood(state, data, which, i, j, x) + lp;
      };
      break;
    }
    case ConditionalKind::kMu: {
      if (model != ModelKind::kGrrn && model != ModelKind::kGttn)
        throw DomainError("brute_conditional_check: mu needs a hierarchical model");
      const double tau = prior.tau_W(i, j);
      const double lam =
          model == ModelKind::kGrrn ? prior.lambda_W(i, j) : 0.0;
      GaussianParams g = model == ModelKind::kGrrn
                             ? grrn_cond_mu(w_here, tau, hyper)
                             : gttn_cond_mu(w_here, tau, hyper);
      if (perturb == Perturb::kFirstParam) g.mean = g.mean * 1.1 + 1e-2;
      if (perturb == Perturb::kSecondParam) g.precision *= 1.1;
      implied = {g.mean, 1.0 / g.precision, true};

      // normalized prior densities with their mu-dependent constants kept in,
      // so the RNSNG / TNSNG cancellation is verified numerically
      log_unnorm = [&, tau, lam](double mu) {
        double lp;
        if (model == ModelKind::kGrrn) {
          lp = log_rn_density(w_here, mu, tau, lam) +
               log_rn_constant(mu, tau, lam);
        } else {
          lp = log_tn_density(w_here, mu, tau) +
               std_normal_log_cdf_oracle(mu * std::sqrt(tau));
        }
        const double d = mu - hyper.mu_mu;
        return lp + 0.5 * (std::log(hyper.tau_mu) - kLog2Pi) -
               hyper.tau_mu * d * d / 2.0;
      };
      break;
    }
    case ConditionalKind::kTau: {
      if (model != ModelKind::kGrrn && model != ModelKind::kGttn)
        throw DomainError("brute_conditional_check: tau needs a hierarchical model");
      const double mu = prior.mu_W(i, j);
      const double lam =
          model == ModelKind::kGrrn ? prior.lambda_W(i, j) : 0.0;
      GammaParams g = model == ModelKind::kGrrn
                          ? grrn_cond_tau(w_here, mu, hyper)
                          : gttn_cond_tau(w_here, mu, hyper);
      if (perturb == Perturb::kFirstParam) g.shape *= 1.1;
      if (perturb == Perturb::kSecondParam) g.rate *= 1.1;
      implied = {g.mean(), g.variance(), true};

      log_unnorm = [&, mu, lam](double tau) {
        double lp;
        if (model == ModelKind::kGrrn) {
          lp = log_rn_density(w_here, mu, tau, lam) +
               log_rn_constant(mu, tau, lam);
        } else {
          lp = log_tn_density(w_here, mu, tau) +
               std_normal_log_cdf_oracle(mu * std::sqrt(tau));
        }
        return lp + log_gamma_density_unnorm(tau, hyper.a, hyper.b);
      };
      break;
    }
    case ConditionalKind::kLambda: {
      if (model != ModelKind::kGrrn)
        throw DomainError("brute_conditional_check: lambda is GRRN-only");
      const double mu = prior.mu_W(i, j);
      const double tau = prior.tau_W(i, j);
      GammaParams g = grrn_cond_lambda(w_here, beta_lambda, hyper);
      if (perturb == Perturb::kFirstParam) g.shape *= 1.1;
      if (perturb == Perturb::kSecondParam) g.rate *= 1.1;
      implied = {g.mean(), g.variance(), true};

      log_unnorm = [&, mu, tau](double lam) {
        return log_rn_density(w_here, mu, tau, lam) +
               log_rn_constant(mu, tau, lam) +
               log_gamma_density_unnorm(lam, hyper.alpha_lambda, beta_lambda);
      };
      break;
    }
    case ConditionalKind::kSigma2: {
      InvGammaParams g = cond_sigma2(state, data, hyper);
      if (perturb == Perturb::kFirstParam) g.shape *= 1.1;
      if (perturb == Perturb::kSecondParam) g.scale *= 1.1;
      if (!(g.shape > 1.0))
        throw DomainError("brute_conditional_check: sigma2 mean needs shape > 1");
      implied.mean = g.mean();
      implied.variance_defined = g.shape > 2.0;
      if (implied.variance_defined)
        implied.variance = g.scale * g.scale /
                           ((g.shape - 1.0) * (g.shape - 1.0) * (g.shape - 2.0));

      log_unnorm = [&](double s2) {
        return data_log_likelihood(state, data, which, 0, 0, s2) -
               (hyper.alpha_sigma + 1.0) * std::log(s2) -
               hyper.beta_sigma / s2;
      };
      log_domain = true;
      break;
    }
  }

  rep.implied_mean = implied.mean;
  rep.implied_variance = implied.variance;

  // --- quadrature over the unnormalized density, widening on trouble ------
  // A support edge at zero may legitimately carry mass; only soft tails must
  // have decayed before the grid is trusted.
  const bool lower_is_support_edge =
      !log_domain && which != ConditionalKind::kMu;
  const double sd = std::sqrt(std::max(implied.variance, 1e-30));
  double span = 10.0;
  for (int attempt = 0; attempt < 4; ++attempt) {
    if (log_domain) {
      const double mid = std::max(implied.mean, 1e-300);
      lo = mid * std::exp(-span);
      hi = mid * std::exp(span);
    } else if (lower_is_support_edge) {
      lo = 1e-10 * std::max(1.0, implied.mean);  // avoid log(0) terms at 0
      hi = implied.mean + span * sd;
    } else {
      lo = implied.mean - span * sd;
      hi = implied.mean + span * sd;
    }
    const double shift = log_unnorm(std::clamp(
        implied.mean, lo + 1e-12 * (hi - lo), hi - 1e-12 * (hi - lo)));
    const double scale = std::max(std::abs(implied.mean), sd);
    const GridMoments gm =
        grid_moments(log_unnorm, lo, hi, shift, scale, log_domain);
    rep.grid_mean = gm.mean;
    rep.grid_variance = gm.variance;
    rep.grid_converged = gm.converged;
    rep.widenings = attempt;
    const bool edges_ok =
        gm.upper_edge_ratio < 1e-10 &&
        (lower_is_support_edge || gm.lower_edge_ratio < 1e-10);
    if (gm.converged && edges_ok && gm.mass > 0.0) break;
    span *= 1.6;
    if (attempt == 3) {
      rep.note = "grid under-resolution: quadrature did not settle";
      rep.pass = false;
      return rep;
    }
  }

  // --- compare ------------------------------------------------------------
  rep.variance_checked = implied.variance_defined;
  const double grid_sd = std::sqrt(std::max(rep.grid_variance, 0.0));
  const double mean_scale = std::max(std::abs(rep.grid_mean), grid_sd);
  rep.mean_err = std::abs(rep.implied_mean - rep.grid_mean) / mean_scale;
  rep.pass = rep.mean_err <= mean_tol;
  if (implied.variance_defined) {
    rep.var_rel_err =
        std::abs(rep.implied_variance - rep.grid_variance) / rep.grid_variance;
    rep.pass = rep.pass && rep.var_rel_err <= var_rel_tol;
  }
  return rep;
}

}  // namespace bnmf::verify

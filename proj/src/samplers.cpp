#include "bnmf/samplers.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "bnmf/errors.hpp"

namespace bnmf {

namespace {

constexpr double kGeeVarianceEps = 1e-12;
constexpr double kNpnmfEps = 1e-9;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double floor_pos(double v) { return v < kPrecisionFloor ? kPrecisionFloor : v; }

// Likelihood sums for w_mk with the k-th factor's contribution excluded:
//   s1 = sum_{j in Omega_m} z_kj^2
//   s2 = sum_{j in Omega_m} z_kj (a_mj - sum_{i != k} w_mi z_ij)
// Direct evaluation; the sweep reproduces these through the residual cache.
std::pair<double, double> sums_w(const FactorState& state,
                                 const ObservedMatrix& data, std::size_t m,
                                 std::size_t k) {
  const std::size_t kdim = state.k();
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t t = data.row_ptr[m]; t < data.row_ptr[m + 1]; ++t) {
    const std::size_t j = data.obs_col[t];
    const double z = state.Z(k, j);
    s1 += z * z;
    double rest = 0.0;
    for (std::size_t i = 0; i < kdim; ++i)
      if (i != k) rest += state.W(m, i) * state.Z(i, j);
    s2 += z * (data.obs_val[t] - rest);
  }
  return {s1, s2};
}

std::pair<double, double> sums_z(const FactorState& state,
                                 const ObservedMatrix& data, std::size_t k,
                                 std::size_t n) {
  const std::size_t kdim = state.k();
  double s1 = 0.0, s2 = 0.0;
  for (const std::uint32_t t : data.col_cells[n]) {
    const std::size_t i = data.obs_row[t];
    const double w = state.W(i, k);
    s1 += w * w;
    double rest = 0.0;
    for (std::size_t l = 0; l < kdim; ++l)
      if (l != k) rest += state.W(i, l) * state.Z(l, n);
    s2 += w * (data.obs_val[t] - rest);
  }
  return {s1, s2};
}

// Shared TN conditional: parent variance sigma^2 / (s1 + prior_tau sigma^2),
// parent mean (s2/sigma^2 + prior_tau * prior_mean) * variance. With an empty
// likelihood (s1 = s2 = 0) this reduces exactly to the prior TN.
TnParams tn_conditional(double s1, double s2, double sigma2, double prior_tau,
                        double prior_mean) {
  const double variance = sigma2 / (s1 + prior_tau * sigma2);
  const double mean = (s2 / sigma2 + prior_tau * prior_mean) * variance;
  return {mean, 1.0 / variance};
}

TnParams gee_conditional(double s1, double s2, double sigma2, double rate,
                         std::size_t* clamp_counter) {
  if (s1 < kGeeVarianceEps) {
    s1 = kGeeVarianceEps;
    if (clamp_counter) ++*clamp_counter;
  }
  const double variance = sigma2 / s1;
  const double mean = (-rate + s2 / sigma2) * variance;
  return {mean, 1.0 / variance};
}

void require_finite_tn(const TnParams& p, const char* var, std::size_t i,
                       std::size_t j, double sigma2, double s1, double s2) {
  if (std::isfinite(p.parent_mean) && std::isfinite(p.parent_precision) &&
      p.parent_precision > 0.0)
    return;
  std::ostringstream os;
  os << "gibbs_sweep: non-finite conditional for " << var << "[" << i << ","
     << j << "]: parent_mean=" << p.parent_mean
     << " parent_precision=" << p.parent_precision << " sigma2=" << sigma2
     << " s1=" << s1 << " s2=" << s2;
  throw NumericalError(os.str());
}

void require_finite_gamma(const GammaParams& p, const char* var, std::size_t i,
                          std::size_t j) {
  if (std::isfinite(p.shape) && p.shape > 0.0 && std::isfinite(p.rate) &&
      p.rate > 0.0)
    return;
  std::ostringstream os;
  os << "gibbs_sweep: non-finite conditional for " << var << "[" << i << ","
     << j << "]: shape=" << p.shape << " rate=" << p.rate;
  throw NumericalError(os.str());
}

void require_finite_gaussian(const GaussianParams& p, const char* var,
                             std::size_t i, std::size_t j) {
  if (std::isfinite(p.mean) && std::isfinite(p.precision) && p.precision > 0.0)
    return;
  std::ostringstream os;
  os << "gibbs_sweep: non-finite conditional for " << var << "[" << i << ","
     << j << "]: mean=" << p.mean << " precision=" << p.precision;
  throw NumericalError(os.str());
}

struct GibbsWorkspace {
  std::vector<double> resid;  // a - w.z at observed cells, flat CSR order
  SweepDiagnostics diag;
};

double dot_wz(const FactorState& state, std::size_t i, std::size_t j) {
  const std::size_t kdim = state.k();
  double s = 0.0;
  for (std::size_t k = 0; k < kdim; ++k) s += state.W(i, k) * state.Z(k, j);
  return s;
}

void refresh_residuals(const FactorState& state, const ObservedMatrix& data,
                       std::vector<double>& resid) {
  resid.resize(data.observed_count);
  for (std::size_t t = 0; t < data.observed_count; ++t)
    resid[t] = data.obs_val[t] - dot_wz(state, data.obs_row[t], data.obs_col[t]);
}

void sweep_impl(ModelKind kind, FactorState& state, PriorState& prior,
                const ObservedMatrix& data, const HyperParams& hyper,
                double beta_lambda, Rng& rng, GibbsWorkspace& ws) {
  const std::size_t M = state.m(), N = state.n(), K = state.k();
  refresh_residuals(state, data, ws.resid);
  auto& resid = ws.resid;

  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      // cached likelihood sums; s2 re-adds w_mk's own residual contribution
      double s1 = 0.0, sr = 0.0;
      for (std::size_t t = data.row_ptr[m]; t < data.row_ptr[m + 1]; ++t) {
        const double z = state.Z(k, data.obs_col[t]);
        s1 += z * z;
        sr += z * resid[t];
      }
      const double w_old = state.W(m, k);
      const double s2 = sr + w_old * s1;

      TnParams cond;
      switch (kind) {
        case ModelKind::kGrrn: {
          const double tau = floor_pos(prior.tau_W(m, k));
          const double lam = floor_pos(prior.lambda_W(m, k));
          const double mu_prime = (tau * prior.mu_W(m, k) - lam) / tau;
          cond = tn_conditional(s1, s2, state.sigma2, tau, mu_prime);
          break;
        }
        case ModelKind::kGee:
          cond = gee_conditional(s1, s2, state.sigma2, hyper.gee_lambda,
                                 &ws.diag.gee_variance_clamps);
          break;
        case ModelKind::kGtt:
          cond = tn_conditional(s1, s2, state.sigma2, hyper.gtt_tau, hyper.gtt_mu);
          break;
        case ModelKind::kGttn:
          cond = tn_conditional(s1, s2, state.sigma2,
                                floor_pos(prior.tau_W(m, k)), prior.mu_W(m, k));
          break;
        case ModelKind::kNpnmf:
          throw ValidationError("gibbs_sweep: NPNMF is not a Gibbs model");
      }
      require_finite_tn(cond, "w", m, k, state.sigma2, s1, s2);
      const double w_new = sample_tn(cond, rng);
      state.W(m, k) = w_new;
      const double delta = w_new - w_old;
      if (delta != 0.0) {
        for (std::size_t t = data.row_ptr[m]; t < data.row_ptr[m + 1]; ++t)
          resid[t] -= delta * state.Z(k, data.obs_col[t]);
      }

      if (kind == ModelKind::kGrrn || kind == ModelKind::kGttn) {
        const GaussianParams mu_cond =
            grrn_cond_mu(w_new, floor_pos(prior.tau_W(m, k)), hyper);
        require_finite_gaussian(mu_cond, "mu_W", m, k);
        const double mu_new = sample_gaussian(mu_cond, rng);
        prior.mu_W(m, k) = mu_new;
        const GammaParams tau_cond = grrn_cond_tau(w_new, mu_new, hyper);
        require_finite_gamma(tau_cond, "tau_W", m, k);
        prior.tau_W(m, k) = sample_gamma(tau_cond, rng);
        if (kind == ModelKind::kGrrn) {
          const GammaParams lam_cond =
              grrn_cond_lambda(w_new, beta_lambda, hyper);
          require_finite_gamma(lam_cond, "lambda_W", m, k);
          prior.lambda_W(m, k) = sample_gamma(lam_cond, rng);
        }
      }
    }

    for (std::size_t n = 0; n < N; ++n) {
      double s1 = 0.0, sr = 0.0;
      for (const std::uint32_t t : data.col_cells[n]) {
        const double w = state.W(data.obs_row[t], k);
        s1 += w * w;
        sr += w * resid[t];
      }
      const double z_old = state.Z(k, n);
      const double s2 = sr + z_old * s1;

      TnParams cond;
      switch (kind) {
        case ModelKind::kGrrn: {
          const double tau = floor_pos(prior.tau_Z(k, n));
          const double lam = floor_pos(prior.lambda_Z(k, n));
          const double mu_prime = (tau * prior.mu_Z(k, n) - lam) / tau;
          cond = tn_conditional(s1, s2, state.sigma2, tau, mu_prime);
          break;
        }
        case ModelKind::kGee:
          cond = gee_conditional(s1, s2, state.sigma2, hyper.gee_lambda,
                                 &ws.diag.gee_variance_clamps);
          break;
        case ModelKind::kGtt:
          cond = tn_conditional(s1, s2, state.sigma2, hyper.gtt_tau, hyper.gtt_mu);
          break;
        case ModelKind::kGttn:
          cond = tn_conditional(s1, s2, state.sigma2,
                                floor_pos(prior.tau_Z(k, n)), prior.mu_Z(k, n));
          break;
        case ModelKind::kNpnmf:
          throw ValidationError("gibbs_sweep: NPNMF is not a Gibbs model");
      }
      require_finite_tn(cond, "z", k, n, state.sigma2, s1, s2);
      const double z_new = sample_tn(cond, rng);
      state.Z(k, n) = z_new;
      const double delta = z_new - z_old;
      if (delta != 0.0) {
        for (const std::uint32_t t : data.col_cells[n])
          resid[t] -= delta * state.W(data.obs_row[t], k);
      }

      if (kind == ModelKind::kGrrn || kind == ModelKind::kGttn) {
        const GaussianParams mu_cond =
            grrn_cond_mu(z_new, floor_pos(prior.tau_Z(k, n)), hyper);
        require_finite_gaussian(mu_cond, "mu_Z", k, n);
        const double mu_new = sample_gaussian(mu_cond, rng);
        prior.mu_Z(k, n) = mu_new;
        const GammaParams tau_cond = grrn_cond_tau(z_new, mu_new, hyper);
        require_finite_gamma(tau_cond, "tau_Z", k, n);
        prior.tau_Z(k, n) = sample_gamma(tau_cond, rng);
        if (kind == ModelKind::kGrrn) {
          const GammaParams lam_cond =
              grrn_cond_lambda(z_new, beta_lambda, hyper);
          require_finite_gamma(lam_cond, "lambda_Z", k, n);
          prior.lambda_Z(k, n) = sample_gamma(lam_cond, rng);
        }
      }
    }
  }

  double rss = 0.0;
  for (const double r : resid) rss += r * r;
  if (!std::isfinite(rss)) {
    std::ostringstream os;
    os << "gibbs_sweep: non-finite residual sum of squares (" << rss << ")";
    throw NumericalError(os.str());
  }
  const InvGammaParams sp{static_cast<double>(data.observed_count) / 2.0 +
                              hyper.alpha_sigma,
                          rss / 2.0 + hyper.beta_sigma};
  const double s2_new = sample_inverse_gamma(sp, rng);
  if (!std::isfinite(s2_new) || !(s2_new > 0.0)) {
    std::ostringstream os;
    os << "gibbs_sweep: non-finite sigma2 draw (shape=" << sp.shape
       << " scale=" << sp.scale << ")";
    throw NumericalError(os.str());
  }
  state.sigma2 = s2_new;
  ws.diag.residual_sum_squares = rss;
}

}  // namespace

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGrrn: return "GRRN";
    case ModelKind::kGee: return "GEE";
    case ModelKind::kGtt: return "GTT";
    case ModelKind::kGttn: return "GTTN";
    case ModelKind::kNpnmf: return "NPNMF";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "GRRN") return ModelKind::kGrrn;
  if (name == "GEE") return ModelKind::kGee;
  if (name == "GTT") return ModelKind::kGtt;
  if (name == "GTTN") return ModelKind::kGttn;
  if (name == "NPNMF") return ModelKind::kNpnmf;
  throw ValidationError("unknown model kind: " + name);
}

void RunConfig::validate() const {
  if (latent_dim < 1) throw ValidationError("RunConfig: latent_dim must be >= 1");
  if (iterations < 1) throw ValidationError("RunConfig: iterations must be >= 1");
  if (burn_in >= iterations)
    throw ValidationError("RunConfig: burn_in must be < iterations");
  hyper.validate();
}

TnParams grrn_cond_w(const FactorState& state, const PriorState& prior,
                     const ObservedMatrix& data, std::size_t m, std::size_t k) {
  const auto [s1, s2] = sums_w(state, data, m, k);
  const double tau = floor_pos(prior.tau_W(m, k));
  const double lam = floor_pos(prior.lambda_W(m, k));
  const double mu_prime = (tau * prior.mu_W(m, k) - lam) / tau;
  return tn_conditional(s1, s2, state.sigma2, tau, mu_prime);
}

TnParams grrn_cond_z(const FactorState& state, const PriorState& prior,
                     const ObservedMatrix& data, std::size_t k, std::size_t n) {
  const auto [s1, s2] = sums_z(state, data, k, n);
  const double tau = floor_pos(prior.tau_Z(k, n));
  const double lam = floor_pos(prior.lambda_Z(k, n));
  const double mu_prime = (tau * prior.mu_Z(k, n) - lam) / tau;
  return tn_conditional(s1, s2, state.sigma2, tau, mu_prime);
}

GaussianParams grrn_cond_mu(double w, double tau_w, const HyperParams& hyper) {
  const double t = tau_w + hyper.tau_mu;
  return {(tau_w * w + hyper.tau_mu * hyper.mu_mu) / t, t};
}

GammaParams grrn_cond_tau(double w, double mu_w, const HyperParams& hyper) {
  const double d = w - mu_w;
  return {hyper.a + 0.5, hyper.b + d * d / 2.0};
}

GammaParams grrn_cond_lambda(double w, double beta_lambda,
                             const HyperParams& hyper) {
  if (!(w >= 0.0)) throw DomainError("grrn_cond_lambda: w must be >= 0");
  return {hyper.alpha_lambda + 1.0, beta_lambda + w};
}

InvGammaParams cond_sigma2(const FactorState& state, const ObservedMatrix& data,
                           const HyperParams& hyper) {
  double rss = 0.0;
  for (std::size_t t = 0; t < data.observed_count; ++t) {
    const double r =
        data.obs_val[t] - dot_wz(state, data.obs_row[t], data.obs_col[t]);
    rss += r * r;
  }
  return {static_cast<double>(data.observed_count) / 2.0 + hyper.alpha_sigma,
          rss / 2.0 + hyper.beta_sigma};
}

TnParams gee_cond_w(const FactorState& state, const ObservedMatrix& data,
                    std::size_t m, std::size_t k, const HyperParams& hyper,
                    std::size_t* clamp_counter) {
  const auto [s1, s2] = sums_w(state, data, m, k);
  return gee_conditional(s1, s2, state.sigma2, hyper.gee_lambda, clamp_counter);
}

TnParams gee_cond_z(const FactorState& state, const ObservedMatrix& data,
                    std::size_t k, std::size_t n, const HyperParams& hyper,
                    std::size_t* clamp_counter) {
  const auto [s1, s2] = sums_z(state, data, k, n);
  return gee_conditional(s1, s2, state.sigma2, hyper.gee_lambda, clamp_counter);
}

TnParams gtt_cond_w(const FactorState& state, const ObservedMatrix& data,
                    std::size_t m, std::size_t k, const HyperParams& hyper) {
  const auto [s1, s2] = sums_w(state, data, m, k);
  return tn_conditional(s1, s2, state.sigma2, hyper.gtt_tau, hyper.gtt_mu);
}

TnParams gtt_cond_z(const FactorState& state, const ObservedMatrix& data,
                    std::size_t k, std::size_t n, const HyperParams& hyper) {
  const auto [s1, s2] = sums_z(state, data, k, n);
  return tn_conditional(s1, s2, state.sigma2, hyper.gtt_tau, hyper.gtt_mu);
}

TnParams gttn_cond_w(const FactorState& state, const PriorState& prior,
                     const ObservedMatrix& data, std::size_t m, std::size_t k) {
  const auto [s1, s2] = sums_w(state, data, m, k);
  return tn_conditional(s1, s2, state.sigma2, floor_pos(prior.tau_W(m, k)),
                        prior.mu_W(m, k));
}

TnParams gttn_cond_z(const FactorState& state, const PriorState& prior,
                     const ObservedMatrix& data, std::size_t k, std::size_t n) {
  const auto [s1, s2] = sums_z(state, data, k, n);
  return tn_conditional(s1, s2, state.sigma2, floor_pos(prior.tau_Z(k, n)),
                        prior.mu_Z(k, n));
}

GaussianParams gttn_cond_mu(double w, double tau_w, const HyperParams& hyper) {
  return grrn_cond_mu(w, tau_w, hyper);
}

GammaParams gttn_cond_tau(double w, double mu_w, const HyperParams& hyper) {
  return grrn_cond_tau(w, mu_w, hyper);
}

PriorState make_prior_state(ModelKind kind, std::size_t m, std::size_t n,
                            std::size_t k) {
  PriorState prior;
  if (kind == ModelKind::kGrrn || kind == ModelKind::kGttn) {
    prior.mu_W = Matrix(m, k);
    prior.tau_W = Matrix(m, k, 1.0);
    prior.mu_Z = Matrix(k, n);
    prior.tau_Z = Matrix(k, n, 1.0);
  }
  if (kind == ModelKind::kGrrn) {
    prior.lambda_W = Matrix(m, k, 1.0);
    prior.lambda_Z = Matrix(k, n, 1.0);
  }
  return prior;
}

double resolve_beta_lambda(const HyperParams& hyper, const ObservedMatrix& train,
                           std::size_t latent_dim) {
  if (hyper.beta_lambda) return *hyper.beta_lambda;
  if (train.observed_count == 0)
    throw ValidationError("resolve_beta_lambda: no observed entries");
  double sum = 0.0;
  for (const double v : train.obs_val) sum += v;
  const double m0 = sum / static_cast<double>(train.observed_count);
  if (!(m0 > 0.0))
    throw ValidationError(
        "resolve_beta_lambda: observed mean is not positive; set beta_lambda "
        "explicitly");
  return hyper.beta_lambda_scale *
         std::sqrt(m0 / static_cast<double>(latent_dim));
}

FactorState init_state(ModelKind kind, const ObservedMatrix& train,
                       std::size_t latent_dim, const HyperParams& hyper,
                       double beta_lambda, PriorState& prior, Rng& rng) {
  const std::size_t M = train.rows(), N = train.cols(), K = latent_dim;
  FactorState state;
  state.W = Matrix(M, K);
  state.Z = Matrix(K, N);
  state.sigma2 =
      sample_inverse_gamma({hyper.alpha_sigma, hyper.beta_sigma}, rng);

  auto draw_entry = [&](Matrix* mu, Matrix* tau, Matrix* lambda, std::size_t i,
                        std::size_t j) -> double {
    switch (kind) {
      case ModelKind::kGrrn: {
        const double m = sample_gaussian({hyper.mu_mu, hyper.tau_mu}, rng);
        const double t = sample_gamma({hyper.a, hyper.b}, rng);
        const double l = sample_gamma({hyper.alpha_lambda, beta_lambda}, rng);
        (*mu)(i, j) = m;
        (*tau)(i, j) = t;
        (*lambda)(i, j) = l;
        return sample_rn({m, floor_pos(t), floor_pos(l)}, rng);
      }
      case ModelKind::kGttn: {
        const double m = sample_gaussian({hyper.mu_mu, hyper.tau_mu}, rng);
        const double t = sample_gamma({hyper.a, hyper.b}, rng);
        (*mu)(i, j) = m;
        (*tau)(i, j) = t;
        return sample_tn({m, floor_pos(t)}, rng);
      }
      case ModelKind::kGtt:
        return sample_tn({hyper.gtt_mu, hyper.gtt_tau}, rng);
      case ModelKind::kGee:
        return sample_exponential(hyper.gee_lambda, rng);
      case ModelKind::kNpnmf:
        return sample_exponential(1.0, rng);
    }
    return 0.0;
  };

  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k)
      state.W(m, k) =
          draw_entry(&prior.mu_W, &prior.tau_W, &prior.lambda_W, m, k);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t n = 0; n < N; ++n)
      state.Z(k, n) =
          draw_entry(&prior.mu_Z, &prior.tau_Z, &prior.lambda_Z, k, n);
  return state;
}

void gibbs_sweep(ModelKind kind, FactorState& state, PriorState& prior,
                 const ObservedMatrix& data, const HyperParams& hyper,
                 double beta_lambda, Rng& rng, SweepDiagnostics* diag) {
  if (data.observed_count == 0)
    throw ValidationError("gibbs_sweep: data observes no cells");
  GibbsWorkspace ws;
  sweep_impl(kind, state, prior, data, hyper, beta_lambda, rng, ws);
  if (diag) *diag = ws.diag;
}

namespace {

// Shared trace bookkeeping for the Gibbs and multiplicative-update runs.
struct TraceAccumulator {
  const ObservedMatrix& train;
  const ObservedMatrix* test;
  const RunConfig& config;
  RunTrace trace;
  std::vector<double> acc_train;
  std::vector<double> acc_test;
  Matrix acc_full;

  TraceAccumulator(const RunConfig& config_, const ObservedMatrix& train_,
                   const ObservedMatrix* test_)
      : train(train_), test(test_), config(config_) {
    trace.train_mse.reserve(config.iterations);
    trace.has_test = test != nullptr && test->observed_count > 0;
    if (trace.has_test) trace.test_mse.reserve(config.iterations);
    acc_train.assign(train.observed_count, 0.0);
    if (trace.has_test) acc_test.assign(test->observed_count, 0.0);
    if (config.accumulate_full_prediction)
      acc_full = Matrix(train.rows(), train.cols());
  }

  // `train_pred` must be predictions at train cells in flat CSR order.
  void record(std::size_t iteration, const FactorState& state,
              const std::vector<double>& train_pred) {
    double rss = 0.0;
    for (std::size_t t = 0; t < train.observed_count; ++t) {
      const double r = train.obs_val[t] - train_pred[t];
      rss += r * r;
    }
    trace.train_mse.push_back(rss / static_cast<double>(train.observed_count));

    std::vector<double> test_pred;
    if (trace.has_test) {
      test_pred.resize(test->observed_count);
      double tss = 0.0;
      for (std::size_t t = 0; t < test->observed_count; ++t) {
        test_pred[t] = dot_wz(state, test->obs_row[t], test->obs_col[t]);
        const double r = test->obs_val[t] - test_pred[t];
        tss += r * r;
      }
      trace.test_mse.push_back(tss / static_cast<double>(test->observed_count));
    }

    if (iteration < config.burn_in) return;
    ++trace.samples_accumulated;
    for (std::size_t t = 0; t < train.observed_count; ++t)
      acc_train[t] += train_pred[t];
    for (std::size_t t = 0; t < acc_test.size(); ++t) acc_test[t] += test_pred[t];
    if (config.accumulate_full_prediction) {
      for (std::size_t i = 0; i < acc_full.rows(); ++i)
        for (std::size_t j = 0; j < acc_full.cols(); ++j)
          acc_full(i, j) += dot_wz(state, i, j);
    }
  }

  RunTrace finish() {
    const double s = static_cast<double>(trace.samples_accumulated);
    trace.posterior_mean = Matrix(train.rows(), train.cols(), kNaN);
    if (config.accumulate_full_prediction) {
      for (std::size_t i = 0; i < acc_full.rows(); ++i)
        for (std::size_t j = 0; j < acc_full.cols(); ++j)
          trace.posterior_mean(i, j) = acc_full(i, j) / s;
    }
    double rss = 0.0;
    for (std::size_t t = 0; t < train.observed_count; ++t) {
      const double p = acc_train[t] / s;
      trace.posterior_mean(train.obs_row[t], train.obs_col[t]) = p;
      const double r = train.obs_val[t] - p;
      rss += r * r;
    }
    trace.train_mse_of_posterior_mean =
        rss / static_cast<double>(train.observed_count);

    double burn_sum = 0.0;
    for (std::size_t i = config.burn_in; i < config.iterations; ++i)
      burn_sum += trace.train_mse[i];
    trace.mean_sample_train_mse = burn_sum / s;

    if (trace.has_test) {
      double tss = 0.0;
      for (std::size_t t = 0; t < test->observed_count; ++t) {
        const double p = acc_test[t] / s;
        trace.posterior_mean(test->obs_row[t], test->obs_col[t]) = p;
        const double r = test->obs_val[t] - p;
        tss += r * r;
      }
      trace.test_mse_of_posterior_mean =
          tss / static_cast<double>(test->observed_count);
      double tsum = 0.0;
      for (std::size_t i = config.burn_in; i < config.iterations; ++i)
        tsum += trace.test_mse[i];
      trace.mean_sample_test_mse = tsum / s;
    }
    return std::move(trace);
  }
};

void validate_run_inputs(const RunConfig& config, const ObservedMatrix& train,
                         const ObservedMatrix* test) {
  config.validate();
  if (train.observed_count == 0)
    throw ValidationError("run: training data observes no cells");
  if (test && (test->rows() != train.rows() || test->cols() != train.cols()))
    throw ValidationError("run: test shape differs from train");
}

}  // namespace

RunTrace run_gibbs(const RunConfig& config, const ObservedMatrix& train,
                   const ObservedMatrix* test) {
  validate_run_inputs(config, train, test);
  if (config.kind == ModelKind::kNpnmf)
    throw ValidationError("run_gibbs: NPNMF is not a Gibbs model");

  const double beta_lambda =
      config.kind == ModelKind::kGrrn
          ? resolve_beta_lambda(config.hyper, train, config.latent_dim)
          : 0.0;
  Rng rng(config.seed);
  PriorState prior = make_prior_state(config.kind, train.rows(), train.cols(),
                                      config.latent_dim);
  FactorState state = init_state(config.kind, train, config.latent_dim,
                                 config.hyper, beta_lambda, prior, rng);

  TraceAccumulator acc(config, train, test);
  GibbsWorkspace ws;
  std::vector<double> train_pred(train.observed_count);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    sweep_impl(config.kind, state, prior, train, config.hyper, beta_lambda, rng,
               ws);
    for (std::size_t t = 0; t < train.observed_count; ++t)
      train_pred[t] = train.obs_val[t] - ws.resid[t];
    acc.record(it, state, train_pred);
  }
  RunTrace trace = acc.finish();
  trace.resolved_beta_lambda = beta_lambda;
  trace.gee_variance_clamps = ws.diag.gee_variance_clamps;
  return trace;
}

RunTrace run_npnmf(const RunConfig& config, const ObservedMatrix& train,
                   const ObservedMatrix* test) {
  validate_run_inputs(config, train, test);
  for (const double v : train.obs_val)
    if (v < 0.0)
      throw DomainError("run_npnmf: observed values must be nonnegative");

  const std::size_t M = train.rows(), N = train.cols(), K = config.latent_dim;
  Rng rng(config.seed);
  FactorState state;
  state.W = Matrix(M, K);
  state.Z = Matrix(K, N);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) state.W(m, k) = rng.exponential(1.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t n = 0; n < N; ++n) state.Z(k, n) = rng.exponential(1.0);

  std::vector<double> pred(train.observed_count);
  auto refresh_pred = [&]() {
    for (std::size_t t = 0; t < train.observed_count; ++t)
      pred[t] = dot_wz(state, train.obs_row[t], train.obs_col[t]);
  };

  TraceAccumulator acc(config, train, test);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    refresh_pred();
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t k = 0; k < K; ++k) {
        double numer = 0.0, denom = kNpnmfEps;
        for (std::size_t t = train.row_ptr[m]; t < train.row_ptr[m + 1]; ++t) {
          const double z = state.Z(k, train.obs_col[t]);
          numer += train.obs_val[t] * z;
          denom += pred[t] * z;
        }
        state.W(m, k) *= numer / denom;
      }
      // refresh row m's predictions for the Z phase
      for (std::size_t t = train.row_ptr[m]; t < train.row_ptr[m + 1]; ++t)
        pred[t] = dot_wz(state, m, train.obs_col[t]);
    }
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) {
        double numer = 0.0, denom = kNpnmfEps;
        for (const std::uint32_t t : train.col_cells[n]) {
          const double w = state.W(train.obs_row[t], k);
          numer += train.obs_val[t] * w;
          denom += pred[t] * w;
        }
        state.Z(k, n) *= numer / denom;
      }
      for (const std::uint32_t t : train.col_cells[n])
        pred[t] = dot_wz(state, train.obs_row[t], n);
    }
    acc.record(it, state, pred);
  }
  return acc.finish();
}

RunTrace run_model(const RunConfig& config, const ObservedMatrix& train,
                   const ObservedMatrix* test) {
  return config.kind == ModelKind::kNpnmf ? run_npnmf(config, train, test)
                                          : run_gibbs(config, train, test);
}

}  // namespace bnmf

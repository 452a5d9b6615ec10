#include "bnmf/model.hpp"

#include <cmath>
#include <string>

namespace bnmf {

ObservedMatrix ObservedMatrix::from(Matrix values, Mask mask) {
  if (values.rows() != mask.rows() || values.cols() != mask.cols())
    throw ValidationError("ObservedMatrix: mask and values shapes differ");
  ObservedMatrix out;
  out.values = std::move(values);
  out.mask = std::move(mask);
  out.reindex();
  return out;
}

void ObservedMatrix::reindex() {
  const std::size_t m = rows(), n = cols();
  obs_row.clear();
  obs_col.clear();
  obs_val.clear();
  row_ptr.assign(m + 1, 0);
  col_cells.assign(n, {});
  for (std::size_t i = 0; i < m; ++i) {
    row_ptr[i] = obs_row.size();
    for (std::size_t j = 0; j < n; ++j) {
      if (mask(i, j)) {
        col_cells[j].push_back(static_cast<std::uint32_t>(obs_row.size()));
        obs_row.push_back(static_cast<std::uint32_t>(i));
        obs_col.push_back(static_cast<std::uint32_t>(j));
        obs_val.push_back(values(i, j));
      }
    }
  }
  row_ptr[m] = obs_row.size();
  observed_count = obs_row.size();
}

void HyperParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ValidationError(std::string("HyperParams: ") + name +
                            " must be finite and > 0");
  };
  positive(alpha_sigma, "alpha_sigma");
  positive(beta_sigma, "beta_sigma");
  positive(tau_mu, "tau_mu");
  positive(a, "a");
  positive(b, "b");
  positive(alpha_lambda, "alpha_lambda");
  positive(beta_lambda_scale, "beta_lambda_scale");
  positive(gee_lambda, "gee_lambda");
  positive(gtt_tau, "gtt_tau");
  if (beta_lambda && !(*beta_lambda > 0.0))
    throw ValidationError("HyperParams: beta_lambda must be > 0 when set");
  if (!std::isfinite(mu_mu) || !std::isfinite(gtt_mu))
    throw ValidationError("HyperParams: means must be finite");
}

Matrix predict(const FactorState& state) {
  if (state.W.cols() != state.Z.rows())
    throw ValidationError("predict: W cols != Z rows");
  const std::size_t m = state.m(), n = state.n(), k = state.k();
  Matrix out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double w = state.W(i, kk);
      if (w == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += w * state.Z(kk, j);
    }
  }
  return out;
}

double masked_mse(const ObservedMatrix& data, const Matrix& prediction,
                  const Mask* mask_override) {
  if (!data.values.same_shape(prediction))
    throw ValidationError("masked_mse: prediction shape differs from data");
  const Mask& m = mask_override ? *mask_override : data.mask;
  if (m.rows() != data.rows() || m.cols() != data.cols())
    throw ValidationError("masked_mse: mask shape differs from data");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.cols(); ++j) {
      if (!m(i, j)) continue;
      const double d = data.values(i, j) - prediction(i, j);
      sum += d * d;
      ++n;
    }
  }
  if (n == 0) throw DomainError("masked_mse: effective mask observes no cells");
  return sum / static_cast<double>(n);
}

}  // namespace bnmf

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bnmf/matrix.hpp"

namespace bnmf {

// A value matrix plus the boolean mask of observed cells. Values stored at
// unobserved cells are ignored by every computation. Observed cells are also
// held in a CSR-style flat layout (row-major over observed cells) with a
// per-column index, which is what makes the conditional updates O(|observed
// in row/column|).
struct ObservedMatrix {
  Matrix values;
  Mask mask;
  std::size_t observed_count = 0;

  // flat observed-cell layout, row-major
  std::vector<std::uint32_t> obs_row;   // row of flat cell
  std::vector<std::uint32_t> obs_col;   // column of flat cell
  std::vector<double> obs_val;          // value of flat cell
  std::vector<std::size_t> row_ptr;     // CSR offsets, size rows+1
  std::vector<std::vector<std::uint32_t>> col_cells;  // flat indices per column

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }

  static ObservedMatrix from(Matrix values, Mask mask);

  // Rebuilds the flat layout after values/mask were edited in place.
  void reindex();
};

// Current factor state: W (M x K) and Z (K x N), entrywise nonnegative, plus
// the likelihood variance.
struct FactorState {
  Matrix W;          // M x K
  Matrix Z;          // K x N
  double sigma2 = 1.0;

  std::size_t m() const { return W.rows(); }
  std::size_t n() const { return Z.cols(); }
  std::size_t k() const { return W.cols(); }
};

// Fixed top-level constants. Defaults are the uninformative choices from the
// sampler's caption: alpha_sigma = beta_sigma = 1, mu_mu = 0, tau_mu = 0.1,
// a = b = 1, alpha_lambda = 1, and beta_lambda = sqrt(m0 / K) resolved at fit
// time from the observed training mean (left unset here). The fixed GEE and
// GTT prior constants are lambda = 0.1 and (mu, tau) = (0, 0.1).
struct HyperParams {
  double alpha_sigma = 1.0;
  double beta_sigma = 1.0;
  double mu_mu = 0.0;
  double tau_mu = 0.1;
  double a = 1.0;
  double b = 1.0;
  double alpha_lambda = 1.0;
  std::optional<double> beta_lambda;  // unset -> beta_lambda_scale * sqrt(m0/K)
  double beta_lambda_scale = 1.0;     // e.g. 20 or 0.1 for more regularization
  double gee_lambda = 0.1;
  double gtt_mu = 0.0;
  double gtt_tau = 0.1;

  void validate() const;
};

// Per-entry hyperprior variables for the hierarchical models. The mean
// matrices are unbounded; precisions and rates are entrywise positive. The
// rate matrices stay empty for the model without the rectifier layer.
struct PriorState {
  Matrix mu_W, tau_W, lambda_W;  // M x K
  Matrix mu_Z, tau_Z, lambda_Z;  // K x N
};

// Prediction matrix W * Z; entrywise nonnegative since the factors are.
Matrix predict(const FactorState& state);

// Mean squared error over the observed cells of `data` (or of mask_override
// when given), comparing data values against `prediction`. The effective mask
// must observe at least one cell.
double masked_mse(const ObservedMatrix& data, const Matrix& prediction,
                  const Mask* mask_override = nullptr);

}  // namespace bnmf

#pragma once

// Matrix normal distribution N_{r×m}(M, Σ1, Σ2) with cov[vec(Y)] = Σ2 ⊗ Σ1.

#include <vector>

#include "matenv/random.hpp"
#include "matenv/tensorlin.hpp"

namespace matenv {

/// Column covariance sigma1 (r×r) and row covariance sigma2 (m×m).
struct KroneckerCov {
  PdMatrix sigma1;
  PdMatrix sigma2;
  bool normalized = false;

  Matrix product() const { return kron(sigma2.matrix(), sigma1.matrix()); }
};

/// Rescales (Σ1, Σ2) to (dΣ1, Σ2/d) with d = sign(Σ2[0,0])·‖Σ2‖_F.
KroneckerCov identify_factors(const PdMatrix& sigma1, const PdMatrix& sigma2);

struct RowColCov {
  Matrix delta1;  // r×r, column covariance factor
  Matrix delta2;  // m×m, row covariance factor (unit Frobenius norm unless degenerate)
  Matrix cov_c;   // mean of (Y-Ȳ)(Y-Ȳ)'
  Matrix cov_r;   // mean of (Y-Ȳ)'(Y-Ȳ)
  bool degenerate = false;
};

/// Moment estimates of the Kronecker factors from cov_r and cov_c, using
/// Δ2 = cov_r/tr(Δ1). Factors follow the identify_factors convention.
RowColCov row_col_cov(const std::vector<Matrix>& sample);

double matnorm_logpdf(const Matrix& y, const Matrix& mean, const PdMatrix& sigma1,
                      const PdMatrix& sigma2);

/// Y = M + A Z Bᵀ with A, B the Cholesky factors of Σ1, Σ2.
std::vector<Matrix> matnorm_sample(const Matrix& mean, const PdMatrix& sigma1,
                                   const PdMatrix& sigma2, int count, Rng& rng);

}  // namespace matenv

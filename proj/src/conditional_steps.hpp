#pragma once

// Conditional maximization steps shared by the bilinear, envelope and sparse fitters.
//
// A "side" holds the centered responses and predictors oriented for one half of
// the flip-flop: the row side uses (Y_i - Ȳ, X_i), the column side uses the
// transposes. Every step below is written once against a side.

#include <vector>

#include "matenv/dataset.hpp"
#include "matenv/tensorlin.hpp"

namespace matenv::detail {

struct Side {
  std::vector<Matrix> yc;  // a×b centered responses
  std::vector<Matrix> x;   // pa×pb predictors (centered)
  Eigen::Index rows() const { return yc.front().rows(); }
  Eigen::Index cols() const { return yc.front().cols(); }
};

struct Sides {
  Side row;     // (Y_i - Ȳ, X_i)
  Side col;     // (Y_iᵀ - Ȳᵀ, X_iᵀ)
  Matrix y_mean;
  std::size_t n = 0;
};

/// Builds both orientations; predictors must already be centered.
Sides make_sides(const MatrixDataset& centered);

struct HalfStep {
  Matrix c;      // Σ yc W β x'
  Matrix m;      // Σ x β' W β x'
  Matrix b;      // C M⁻¹
  Matrix s_res;  // (n·b)⁻¹ Σ (yc - B x β')W(yc - B x β')'
  Matrix s_y;    // (n·b)⁻¹ Σ yc W yc'
};

/// One conditional step given the other side's coefficient and inverse covariance.
/// Throws SingularStepError when M is singular and jitter is off.
HalfStep half_step(const Side& side, const Matrix& other_beta, const Matrix& other_sigma_inv,
                   bool ridge_jitter);

/// (n·b)⁻¹ Σ (yc - β x β_o')W(yc - β x β_o')' for a given coefficient on this side.
Matrix residual_cov(const Side& side, const Matrix& beta, const Matrix& other_beta,
                    const Matrix& other_sigma_inv);

/// Σ_i log N(Y_i; Ȳ + β1 X_i β2', Σ1, Σ2) on the row side.
double loglik_centered(const Side& row, const Matrix& beta1, const Matrix& beta2,
                       const Matrix& sigma1, const Matrix& sigma2);

/// Throws SingularStepError if `s` is not positive definite.
void require_pd(const Matrix& s, const char* what);

}  // namespace matenv::detail

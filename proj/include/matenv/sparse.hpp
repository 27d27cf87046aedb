#pragma once

// Row-sparse estimation for the bilinear and envelope models with adaptive
// group-lasso penalties on response rows (β1, L) and response columns (β2, R).

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "matenv/bilinear.hpp"
#include "matenv/dataset.hpp"
#include "matenv/envelope.hpp"

namespace matenv {

struct AdaptiveWeights {
  Vector w1;  // one per row of β1 (or L); +∞ excludes the row
  Vector w2;  // one per row of β2 (or R)
};

/// w_i = ‖row_i‖^(−gamma); an exactly zero row gets +∞.
Vector row_weights(const Matrix& a, double gamma = 1.0);

/// Weights from the rows of the normalized bilinear coefficients.
AdaptiveWeights adaptive_weights(const BilinearFit& initial, double gamma = 1.0);

/// Weights from the rows of the envelope bases L and R.
AdaptiveWeights adaptive_weights(const EnvelopeFit& initial, double gamma = 1.0);

struct SparseOptions {
  EnvelopeOptions envelope;  // `envelope.bilinear` drives the unpenalized start
  int max_iter = 500;        // outer sweeps
  double tol = 1e-9;         // relative change of the penalized objective
  int inner_iter = 500;      // proximal iterations per block
  double gamma = 1.0;
};

enum class SparseKind { bilinear, envelope };

struct SparseFit {
  SparseKind kind = SparseKind::bilinear;
  std::vector<int> active_rows;  // 0-based rows of β1 that are nonzero
  std::vector<int> active_cols;  // 0-based rows of β2 that are nonzero
  double lambda1 = 0.0, lambda2 = 0.0;
  AdaptiveWeights weights;
  std::optional<BilinearFit> bilinear;
  std::optional<EnvelopeFit> envelope;
  double objective = 0.0;               // penalized negative log-likelihood
  std::vector<double> objective_trace;  // one entry per outer sweep (bilinear kind)

  double loglik() const { return bilinear ? bilinear->loglik : envelope->loglik; }
  const Matrix& beta1() const { return bilinear ? bilinear->beta1 : envelope->beta1; }
  const Matrix& beta2() const { return bilinear ? bilinear->beta2 : envelope->beta2; }
};

/// Minimizes −loglik + λ1 Σ w1,i ‖b1,i‖·‖β2‖_F + λ2 Σ w2,j ‖b2,j‖·‖β1‖_F by blockwise
/// proximal-gradient steps. Each penalty term is the group norm of the matching rows of
/// β2 ⊗ β1, so the objective does not depend on how scale is split between the factors;
/// under ‖β2‖_F = 1 the first term is λ1 Σ w1,i ‖b1,i‖. Weights default to
/// adaptive_weights of the unpenalized fit.
SparseFit penalized_bilinear(const MatrixDataset& data, double lambda1, double lambda2,
                             const std::optional<AdaptiveWeights>& weights = std::nullopt,
                             const SparseOptions& opts = {});

/// Envelope fit in which each basis step minimizes f(G) + λ Σ w_i ‖G_i‖ over
/// semi-orthogonal G. Weights default to the row norms of the unpenalized envelope bases.
/// Throws FitFailure when every row of a basis would be removed.
SparseFit sparse_envelope(const MatrixDataset& data, int u1, int u2, double lambda1, double lambda2,
                          const std::optional<AdaptiveWeights>& weights = std::nullopt,
                          const SparseOptions& opts = {});

struct LambdaCell {
  double lambda1 = 0.0, lambda2 = 0.0;
  double loglik = 0.0;
  int df = 0;
  double score = 0.0;
  int active_rows = 0, active_cols = 0;
  bool ok = false;
  std::string error;
};

struct LambdaSelection {
  double lambda1 = 0.0, lambda2 = 0.0;
  std::vector<LambdaCell> table;
  std::optional<SparseFit> best;
};

/// −2·loglik + log(n)·df with df = (nonzero rows of β1)·p1 + (nonzero rows of β2)·p2.
/// Ties go to the sparser model, then to the larger penalty. `u1`/`u2` are used only
/// for the envelope kind.
LambdaSelection select_lambda(const MatrixDataset& data,
                              const std::vector<std::pair<double, double>>& grid,
                              SparseKind kind = SparseKind::bilinear, int u1 = 0, int u2 = 0,
                              const SparseOptions& opts = {}, unsigned workers = 1);

}  // namespace matenv

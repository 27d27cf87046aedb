#pragma once

// Standard errors (bootstrap and asymptotic), Benjamini–Yekutieli adjustment and
// location-effect reports.

#include <cstdint>
#include <functional>
#include <vector>

#include "matenv/bilinear.hpp"
#include "matenv/dataset.hpp"
#include "matenv/envelope.hpp"

namespace matenv {

enum class InferenceMethod { bootstrap, asymptotic };
enum class BootstrapScheme { residual, pairs };

struct InferenceReport {
  Vector estimate;
  Vector se;
  Vector pvalues;       // two-sided, normal reference
  Vector pvalues_fdr;   // Benjamini–Yekutieli adjusted
  Vector neg_log10_fdr;
  InferenceMethod method = InferenceMethod::bootstrap;
  int B = 0;            // 0 for asymptotic reports
  int failures = 0;     // bootstrap refits that failed and were redrawn
};

/// Benjamini–Yekutieli step-up adjustment with c(k) = Σ_{j≤k} 1/j, capped at 1.
Vector fdr_adjust_by(const Vector& pvalues);

/// Benjamini–Hochberg step-up adjustment.
Vector fdr_adjust_bh(const Vector& pvalues);

/// Two-sided normal p-values for estimate/se; a zero SE gives 1 for a zero estimate, 0 otherwise.
Vector normal_pvalues(const Vector& estimate, const Vector& se);

/// What a bootstrap refit returns: the target statistic and, for the residual scheme,
/// the fitted mean of every unit.
struct FitSummary {
  Vector statistic;
  std::vector<Matrix> fitted;
};

using Fitter = std::function<FitSummary(const MatrixDataset&)>;

/// vec(β̂2 ⊗ β̂1) of the bilinear MLE.
Fitter bilinear_fitter(const BilinearOptions& opts = {});
/// vec(β̂2 ⊗ β̂1) of the envelope MLE.
Fitter envelope_fitter(int u1, int u2, const EnvelopeOptions& opts = {});
/// vec(ν̂) of the vectorized model.
Fitter vector_fitter();

struct BootstrapOptions {
  int B = 200;
  BootstrapScheme scheme = BootstrapScheme::residual;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  int max_retries = 5;  // redraws allowed per replicate before giving up
};

/// Replicate statistics for replicate indices first_index .. first_index + count − 1
/// (one row each). Replicate b always uses the stream derive_seed(seed, {b, attempt}).
Matrix bootstrap_statistics(const MatrixDataset& data, const Fitter& fitter, int first_index,
                            int count, const BootstrapOptions& opts, int* failures = nullptr);

/// Sample SD (divisor B − 1) of the replicate statistics; the estimate is the full-data statistic.
InferenceReport bootstrap_se(const MatrixDataset& data, const Fitter& fitter,
                             const BootstrapOptions& opts = {});

/// Per-observation Fisher information of (vec ν, vech Σ) in the vectorized Gaussian model:
/// diag(Σ_X ⊗ Σ⁻¹, ½ D_kᵀ(Σ⁻¹ ⊗ Σ⁻¹)D_k).
Matrix fisher_information(const Matrix& sigma_x, const Matrix& sigma);

/// Coefficient block of avar(√n vec ν̂) for the vectorized model: Σ_X⁻¹ ⊗ Σ.
Matrix avar_vector(const Matrix& sigma_x, const Matrix& sigma);

/// Coefficient block of H(HᵀJH)†Hᵀ for h(θ) = (vec(β2⊗β1), vech(Σ2⊗Σ1)).
Matrix avar_bilinear(const Matrix& beta1, const Matrix& beta2, const Matrix& sigma1,
                     const Matrix& sigma2, const Matrix& sigma_x);

/// Coefficient block of the envelope avar, with bases moved through the chart
/// L(A) = (L + L0A)(I + AᵀA)^(−1/2).
Matrix avar_envelope(const SemiOrthoBasis& l, const SemiOrthoBasis& r, const Matrix& eta1,
                     const Matrix& eta2, const Matrix& omega1, const Matrix& omega10,
                     const Matrix& omega2, const Matrix& omega20, const Matrix& sigma_x);

/// n-divisor covariance of vec(X_i) after centering.
Matrix predictor_covariance(const MatrixDataset& data);

InferenceReport asymptotic_se_kron(const BilinearFit& fit, const MatrixDataset& data);
InferenceReport asymptotic_se_kron(const EnvelopeFit& fit, const MatrixDataset& data);

enum class Axis { rows, cols };

/// Averages β̂ of a scalar-predictor envelope fit over `axis`, bootstraps the averages with
/// refits at the same (u1, u2), and reports normal p-values with the BY adjustment.
InferenceReport location_effect_report(const ScalarEnvelopeFit& fit, const MatrixDataset& data,
                                       Axis axis, const BootstrapOptions& opts = {},
                                       const EnvelopeOptions& env_opts = {});

}  // namespace matenv

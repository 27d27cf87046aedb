#pragma once

// Bilinear matrix regression Y = μ + β1 X β2ᵀ + ε with cov[vec(ε)] = Σ2 ⊗ Σ1,
// the vectorized baseline vec(Y) = μ + ν vec(X) + ε, and model comparison.

#include <cstdint>
#include <vector>

#include "matenv/dataset.hpp"
#include "matenv/tensorlin.hpp"

namespace matenv {

enum class Convention { raw, with_constraints };
enum class ModelKind { vector, bilinear, envelope };

struct BilinearOptions {
  int max_iter = 500;
  double tol = 1e-6;  // relative change in log-likelihood between full sweeps
  bool normalize = true;
  /// Adds 1e-8·tr(M)/dim to a singular M1/M2 instead of failing. Off by default
  /// because it biases the MLE.
  bool ridge_jitter = false;
  /// Extra fits from random β2 starts; the highest log-likelihood wins.
  int random_restarts = 0;
  std::uint64_t seed = 0;
};

struct BilinearFit {
  Matrix mu;     // r×m, equals Ȳ
  Matrix beta1;  // r×p1
  Matrix beta2;  // m×p2
  PdMatrix sigma1;
  PdMatrix sigma2;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;  // one entry per conditional half-step
  std::size_t n = 0;
  Matrix x_mean;

  Matrix kron_coef() const { return kron(beta2, beta1); }
  Matrix kron_cov() const { return kron(sigma2.matrix(), sigma1.matrix()); }
};

struct VectorModelFit {
  Vector mu;        // rm
  Matrix nu;        // rm × p1p2
  PdMatrix sigma;   // rm × rm, divisor n
  double loglik = 0.0;
  std::size_t n = 0;
};

/// Throws DimensionError unless n > max(r/m, m/r), n·min(p2, m) ≥ p1 and n·min(p1, r) ≥ p2.
void check_bilinear_sample_size(std::size_t n, Eigen::Index r, Eigen::Index m, Eigen::Index p1,
                                Eigen::Index p2);

/// Flip-flop MLE. Predictors are centered first when the dataset is not already.
BilinearFit fit_bilinear(const MatrixDataset& data, const BilinearOptions& opts = {});

/// Σ_i log N(Y_i; μ + β1 X_i β2ᵀ, Σ1, Σ2) using the dataset's predictors as stored.
double loglik_bilinear(const Matrix& mu, const Matrix& beta1, const Matrix& beta2,
                       const PdMatrix& sigma1, const PdMatrix& sigma2, const MatrixDataset& data);

/// OLS on the centered vectorized regression with the n-divisor residual covariance.
VectorModelFit fit_vector_model(const MatrixDataset& data);

/// Σ_i log N(vec Y_i; μ + ν vec X_i, Σ) using the dataset's predictors as stored.
double loglik_vector(const Vector& mu, const Matrix& nu, const PdMatrix& sigma,
                     const MatrixDataset& data);

/// Real-parameter count. `with_constraints` removes the two normalization
/// constraints on β2 and Σ2; `raw` keeps them. For the envelope model with
/// u1 = 0 or u2 = 0 the coefficient vanishes and only μ and the covariances count.
int count_params(ModelKind kind, int r, int m, int p1, int p2, int u1, int u2,
                 Convention convention);

struct LrtResult {
  double stat = 0.0;
  int df = 0;
  double pvalue = 1.0;
};

/// LRT of the bilinear Kronecker structure against the vectorized model.
LrtResult lrt_kron(const VectorModelFit& vector_fit, const BilinearFit& bilinear_fit,
                   Convention convention);

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
};

InformationCriteria information_criteria(double loglik, int num_params, std::size_t n);

/// c = sign(first nonzero of vec β2)·‖β2‖_F and d = sign(Σ2[0,0])·‖Σ2‖_F;
/// returns (cβ1, β2/c, dΣ1, Σ2/d).
void normalize_factors(Matrix& beta1, Matrix& beta2, Matrix& sigma1, Matrix& sigma2);

}  // namespace matenv

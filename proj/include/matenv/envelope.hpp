#pragma once

// Envelope matrix regression: β1 = Lη1, β2 = Rη2 with
// Σ1 = LΩ1Lᵀ + L0Ω10L0ᵀ and Σ2 = RΩ2Rᵀ + R0Ω20R0ᵀ.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "matenv/bilinear.hpp"
#include "matenv/dataset.hpp"
#include "matenv/tensorlin.hpp"

namespace matenv {

/// f(G) = log|GᵀS_res G| + log|GᵀS_Y⁻¹G| for a semi-orthogonal G with at least one column.
double envelope_objective(const SemiOrthoBasis& g, const PdMatrix& s_res, const PdMatrix& s_y);

/// Same objective as a function of span(G) for any full-column-rank G:
/// log|GᵀS_res G| + log|GᵀS_Y⁻¹G| − 2 log|GᵀG|.
double envelope_objective(const Matrix& g, const PdMatrix& s_res, const PdMatrix& s_y);

/// 2S_res G(GᵀS_res G)⁻¹ + 2S_Y⁻¹G(GᵀS_Y⁻¹G)⁻¹ at a semi-orthogonal G, optionally
/// projected onto the tangent space by (I − GGᵀ).
Matrix envelope_gradient(const SemiOrthoBasis& g, const PdMatrix& s_res, const PdMatrix& s_y,
                         bool projected = true);

struct MinimizerOptions {
  int random_starts = 5;
  bool eigen_starts = true;  // u leading directions of S_res and of S_Y
  std::uint64_t seed = 0;
  int max_iter = 200;        // per quasi-Newton run
  std::optional<Matrix> warm_start;
};

struct MinimizerResult {
  SemiOrthoBasis basis;
  double value = 0.0;
  double best_start_value = 0.0;
  int starts = 0;
  /// False when no run moved below the best starting value; the best start is returned.
  bool improved = true;
};

/// Local minimizer of envelope_objective over r×u semi-orthogonal matrices.
/// Each start is refined column by column inside the orthogonal complement of the
/// columns already fixed, then polished jointly; the best result over all starts wins.
MinimizerResult minimize_envelope_objective(const PdMatrix& s_res, const PdMatrix& s_y, int u,
                                            const MinimizerOptions& opts = {});

struct EnvelopeOptions {
  BilinearOptions bilinear;  // used for the initial fit
  int max_iter = 200;
  double tol = 1e-6;         // relative log-likelihood change between outer iterations
  MinimizerOptions minimizer;
};

struct EnvelopeFit {
  int u1 = 0, u2 = 0;
  SemiOrthoBasis L, L0, R, R0;
  Matrix eta1, eta2;                       // u1×p1, u2×p2
  Matrix omega1, omega10, omega2, omega20; // may be 0×0 when a side is trivial
  Matrix mu, beta1, beta2;
  PdMatrix sigma1, sigma2;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;  // one entry per L- or R-step
  std::size_t n = 0;
  Matrix x_mean;

  Matrix kron_coef() const { return kron(beta2, beta1); }
};

/// Alternating envelope MLE initialized from the bilinear MLE (computed here unless
/// `init` is given). u1 = 0 or u2 = 0 gives the no-predictor matrix-normal model.
EnvelopeFit fit_envelope(const MatrixDataset& data, int u1, int u2,
                         const EnvelopeOptions& opts = {}, const BilinearFit* init = nullptr);

/// Envelope fit for the scalar-predictor model Y = μ + LηRᵀx + ε.
struct ScalarEnvelopeFit {
  int u1 = 0, u2 = 0;
  SemiOrthoBasis L, L0, R, R0;
  Matrix eta;        // u1×u2
  Matrix beta;       // r×m, P_L B P_R
  Matrix beta_full;  // unenveloped OLS slope B
  Matrix mu;
  PdMatrix sigma1, sigma2;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;
  std::size_t n = 0;
  double x_mean = 0.0;
};

ScalarEnvelopeFit fit_envelope_scalarX(const MatrixDataset& data, int u1, int u2,
                                       const EnvelopeOptions& opts = {});

enum class Criterion { aic, bic };

struct DimensionCell {
  int u1 = 0, u2 = 0;
  double loglik = 0.0;
  int num_params = 0;
  double value = 0.0;
  bool ok = false;
  std::string error;
};

struct DimensionSelection {
  int u1 = 0, u2 = 0;
  std::vector<DimensionCell> table;
};

/// −2·loglik + h(n)·t(u1, u2) over a grid of (u1, u2); an empty grid means
/// [0..r]×[0..m]. Ties go to the smaller u1 + u2, then the smaller u1.
DimensionSelection select_dims_ic(const MatrixDataset& data, Criterion criterion,
                                  std::vector<std::pair<int, int>> grid = {},
                                  const EnvelopeOptions& opts = {}, unsigned workers = 1);

/// Greedy ascent from (1, 1): moves to whichever of (u1+1, u2), (u1, u2+1) lowers the
/// criterion most and stops when neither does. `score` returns the criterion at a cell.
std::pair<int, int> select_dims_stepwise(int r, int m,
                                         const std::function<double(int, int)>& score);

std::pair<int, int> select_dims_stepwise(const MatrixDataset& data, Criterion criterion,
                                         const EnvelopeOptions& opts = {});

}  // namespace matenv

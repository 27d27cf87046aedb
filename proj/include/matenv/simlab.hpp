#pragma once

// Simulation laboratory: data from the envelope model with isotropic material and
// immaterial variances, estimator comparisons and standard-error studies.

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "matenv/bilinear.hpp"
#include "matenv/dataset.hpp"
#include "matenv/envelope.hpp"
#include "matenv/inference.hpp"

namespace matenv {

struct SimSpec {
  int r = 5, m = 5, p1 = 5, p2 = 5;
  int u1 = 2, u2 = 2;
  double sigma2_mat = 0.5;  // Ω1 = σ²I, Ω2 = σ²I
  double sigma0_sq = 2.5;   // Ω10 = σ0²I, Ω20 = σ0²I
  std::vector<int> n_list{200, 500};
  int reps = 50;
  std::uint64_t seed = 20240607;
  std::vector<ModelKind> models{ModelKind::vector, ModelKind::bilinear, ModelKind::envelope};
  std::vector<int> inactive_rows;  // rows of L (0-based) forced to zero
  std::vector<int> inactive_cols;  // rows of R (0-based) forced to zero

  /// Throws InvalidArgument unless dimensions, variances and counts are admissible.
  void validate() const;
};

struct SimTruth {
  Matrix mu, beta1, beta2, eta1, eta2;
  SemiOrthoBasis L, R;
  PdMatrix sigma1, sigma2;

  Matrix kron_coef() const { return kron(beta2, beta1); }
};

/// Parameters drawn once from spec.seed: bases from orthogonalized Uniform(0, 1) matrices,
/// μ, η1, η2 standard normal.
SimTruth make_truth(const SimSpec& spec);

/// n units with standard-normal predictors and matrix-normal errors drawn from `stream_seed`.
MatrixDataset gen_sim_dataset(const SimSpec& spec, const SimTruth& truth, int n,
                              std::uint64_t stream_seed);

/// Truth from spec.seed and data from `stream_seed`.
std::pair<MatrixDataset, SimTruth> gen_sim_dataset(const SimSpec& spec, int n,
                                                   std::uint64_t stream_seed);

/// Stream seed for replicate `rep` at sample size n: derive_seed(spec.seed, {n, rep}).
std::uint64_t replicate_seed(const SimSpec& spec, int n, int rep);

std::string model_name(ModelKind kind);

struct ComparisonRow {
  ModelKind model = ModelKind::bilinear;
  int n = 0;
  double mean_error = 0.0;
  double sd_error = 0.0;  // NaN when fewer than two replicates succeeded
  int reps_ok = 0;
  int failures = 0;
};

/// Frobenius error of β̂2⊗β̂1 (ν̂ for the vector model) per model and n, in the order
/// n_list × models.
std::vector<ComparisonRow> run_comparison(const SimSpec& spec, unsigned workers = 1,
                                          const EnvelopeOptions& opts = {});

struct SeRow {
  ModelKind model = ModelKind::bilinear;
  int n = 0;
  double asymptotic_se = 0.0;  // mean over replicates
  double actual_sd = 0.0;      // SD of the element over replicates
  double bootstrap_se = 0.0;   // from replicate 0
  int reps_ok = 0;
  int failures = 0;
};

struct SeStudyOptions {
  int row = 0, col = 0;  // element of the Kronecker coefficient
  int B = 200;
  BootstrapScheme scheme = BootstrapScheme::residual;
  unsigned workers = 1;
  EnvelopeOptions envelope;
};

std::vector<SeRow> run_se_study(const SimSpec& spec, const SeStudyOptions& opts = {});

/// Shortest round-trip decimal form; "NA" for NaN.
std::string format_double(double v);

void write_comparison_csv(const std::vector<ComparisonRow>& rows, std::ostream& out);
void write_se_csv(const std::vector<SeRow>& rows, std::ostream& out);

}  // namespace matenv

#pragma once

// The alternating L-step / R-step envelope fit, parameterized by how a basis is
// chosen from (S_res, S_Y). The plain envelope minimizes the envelope objective;
// the sparse envelope minimizes its penalized version.

#include <functional>
#include <optional>

#include "conditional_steps.hpp"
#include "matenv/envelope.hpp"

namespace matenv::detail {

enum class SideId { row = 0, col = 1 };

/// Returns an orthonormal a×u basis. `warm` is the previous basis on this side, if any.
using BasisStep = std::function<Matrix(SideId side, const Matrix& s_res, const Matrix& s_y, int u,
                                       const std::optional<Matrix>& warm, int outer_iter)>;

/// Runs the alternation for 1 ≤ u1, u2 starting from (β2, Σ2) of `init`.
EnvelopeFit envelope_alternation(const MatrixDataset& centered, const Sides& sides,
                                 const BilinearFit& init, int u1, int u2,
                                 const EnvelopeOptions& opts, const BasisStep& step);

/// Default basis step: minimize_envelope_objective with restarts only on the first pass.
BasisStep objective_basis_step(const MinimizerOptions& base);

/// Builds the reported fit from bases, coefficients and covariances (normalizes first).
EnvelopeFit assemble_envelope(const SemiOrthoBasis& l, const SemiOrthoBasis& r, Matrix beta1,
                              Matrix beta2, Matrix sigma1, Matrix sigma2, bool normalize);

}  // namespace matenv::detail

#pragma once

// Unconstrained quasi-Newton minimization used by the envelope basis search.

#include <functional>

#include "matenv/tensorlin.hpp"

namespace matenv::detail {

/// Returns f(x) and writes ∇f(x) into `grad`. A non-finite value marks x as infeasible.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct BfgsOptions {
  int max_iter = 200;
  double grad_tol = 1e-9;   // stop when ‖∇f‖∞ < grad_tol·(1 + |f|)
  double value_tol = 1e-13; // or when a step improves f by less than value_tol·(1 + |f|)
};

struct BfgsResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// BFGS with an inverse-Hessian update and Armijo backtracking. The returned
/// value never exceeds f(x0).
BfgsResult bfgs_minimize(const Objective& f, Vector x0, const BfgsOptions& opts = {});

}  // namespace matenv::detail

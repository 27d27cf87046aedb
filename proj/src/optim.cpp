#include "optim.hpp"

#include <cmath>

namespace matenv::detail {

BfgsResult bfgs_minimize(const Objective& f, Vector x0, const BfgsOptions& opts) {
  const Eigen::Index k = x0.size();
  BfgsResult res;
  res.x = std::move(x0);
  Vector g(k);
  res.value = f(res.x, g);
  if (k == 0 || !std::isfinite(res.value)) {
    res.converged = k == 0;
    return res;
  }
  Matrix h = Matrix::Identity(k, k);
  bool scaled = false;
  Vector g_new(k);
  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it;
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol * (1.0 + std::abs(res.value))) {
      res.converged = true;
      return res;
    }
    Vector dir = -h * g;
    double slope = g.dot(dir);
    if (slope >= 0.0) {
      h.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = scaled ? 1.0 : std::min(1.0, 1.0 / g.norm());
    double f_new = 0.0;
    Vector x_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = res.x + step * dir;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= res.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = true;  // no descent available at working precision
      return res;
    }
    const Vector s = x_new - res.x;
    const Vector y = g_new - g;
    const double improvement = res.value - f_new;
    res.x = std::move(x_new);
    res.value = f_new;
    g = g_new;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      if (!scaled) {
        h *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Vector hy = h * y;
      h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
           rho * (hy * s.transpose() + s * hy.transpose());
    }
    if (improvement < opts.value_tol * (1.0 + std::abs(res.value))) {
      res.converged = true;
      res.iterations = it + 1;
      return res;
    }
  }
  res.iterations = opts.max_iter;
  return res;
}

}  // namespace matenv::detail

#include "matenv/sparse.hpp"

#include <cmath>
#include <limits>

#include "conditional_steps.hpp"
#include "envelope_core.hpp"
#include "matenv/errors.hpp"
#include "matenv/parallel.hpp"

namespace matenv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_lambdas(double lambda1, double lambda2) {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw InvalidArgument("penalty parameters must be nonnegative");
}

// Σ w_i ‖a_i‖ with +∞·0 read as 0.
double weighted_row_norms(const Matrix& a, const Vector& w) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double nrm = a.row(i).norm();
    if (nrm > 0.0) s += w(i) * nrm;
  }
  return s;
}

std::vector<int> nonzero_rows(const Matrix& a) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (a.row(i).cwiseAbs().maxCoeff() > 0.0) out.push_back(static_cast<int>(i));
  }
  return out;
}

struct CrossMoments {
  Matrix c, m;
};

CrossMoments cross_moments(const detail::Side& side, const Matrix& other_beta, const Matrix& w) {
  const Matrix wb = w * other_beta;
  const Matrix btwb = other_beta.transpose() * wb;
  const Eigen::Index pa = side.x.front().rows();
  CrossMoments out{Matrix::Zero(side.rows(), pa), Matrix::Zero(pa, pa)};
  for (std::size_t i = 0; i < side.yc.size(); ++i) {
    out.c.noalias() += side.yc[i] * wb * side.x[i].transpose();
    out.m.noalias() += side.x[i] * btwb * side.x[i].transpose();
  }
  out.m = symmetrize(out.m);
  return out;
}

double lambda_max_sym(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

// Row soft-thresholding followed by whole-matrix soft-thresholding.
Matrix nested_prox(Matrix z, const Vector& row_thresh, double frob_thresh) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double nrm = z.row(i).norm();
    if (!std::isfinite(row_thresh(i)) || nrm <= row_thresh(i)) z.row(i).setZero();
    else z.row(i) *= 1.0 - row_thresh(i) / nrm;
  }
  if (frob_thresh > 0.0) {
    const double nrm = z.norm();
    if (nrm <= frob_thresh) z.setZero();
    else z *= 1.0 - frob_thresh / nrm;
  }
  return z;
}

// Minimizes ½ tr(S⁻¹(βMβᵀ − 2Cβᵀ)) + Σ a_i‖β_i‖ + b‖β‖_F over β by proximal gradient.
Matrix penalized_block(Matrix beta, const CrossMoments& cm, const Matrix& sigma_inv,
                       const Vector& row_pen, double frob_pen, int inner_iter) {
  if (cm.m.norm() == 0.0) return beta;  // partner factor is zero: this block is unidentified
  const bool penalized = frob_pen > 0.0 || (row_pen.array() > 0.0).any();
  if (!penalized) {
    Eigen::LLT<Matrix> llt(cm.m);
    if (llt.info() != Eigen::Success) throw SingularStepError("conditional design matrix M is singular");
    return llt.solve(cm.c.transpose()).transpose();
  }
  const double lip = lambda_max_sym(sigma_inv) * lambda_max_sym(cm.m);
  if (!(lip > 0.0)) return Matrix::Zero(beta.rows(), beta.cols());
  const double t = 1.0 / lip;
  for (int k = 0; k < inner_iter; ++k) {
    const Matrix grad = sigma_inv * (beta * cm.m - cm.c);
    Matrix next = nested_prox(beta - t * grad, t * row_pen, t * frob_pen);
    const double change = (next - beta).norm();
    beta = std::move(next);
    if (change <= 1e-11 * (1.0 + beta.norm())) break;
  }
  return beta;
}

Vector scaled(const Vector& w, double s) {
  Vector out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) out(i) = s == 0.0 && std::isfinite(w(i)) ? 0.0 : w(i) * s;
  return out;
}

double penalty(const Matrix& b1, const Matrix& b2, double l1, double l2, const AdaptiveWeights& w) {
  double p = 0.0;
  if (l1 > 0.0) p += l1 * b2.norm() * weighted_row_norms(b1, w.w1);
  if (l2 > 0.0) p += l2 * b1.norm() * weighted_row_norms(b2, w.w2);
  return p;
}

SparseFit finish_bilinear(BilinearFit fit, double l1, double l2, const AdaptiveWeights& w,
                          double objective) {
  SparseFit out;
  out.kind = SparseKind::bilinear;
  out.lambda1 = l1;
  out.lambda2 = l2;
  out.weights = w;
  out.active_rows = nonzero_rows(fit.beta1);
  out.active_cols = nonzero_rows(fit.beta2);
  out.objective = objective;
  out.bilinear = std::move(fit);
  return out;
}

}  // namespace

Vector row_weights(const Matrix& a, double gamma) {
  if (!(gamma > 0.0)) throw InvalidArgument("row_weights: gamma must be positive");
  Vector w(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double nrm = a.row(i).norm();
    w(i) = nrm > 0.0 ? std::pow(nrm, -gamma) : kInf;
  }
  return w;
}

AdaptiveWeights adaptive_weights(const BilinearFit& initial, double gamma) {
  Matrix b1 = initial.beta1, b2 = initial.beta2, s1 = initial.sigma1.matrix(), s2 = initial.sigma2.matrix();
  normalize_factors(b1, b2, s1, s2);
  return {row_weights(b1, gamma), row_weights(b2, gamma)};
}

AdaptiveWeights adaptive_weights(const EnvelopeFit& initial, double gamma) {
  return {row_weights(initial.L.matrix(), gamma), row_weights(initial.R.matrix(), gamma)};
}

SparseFit penalized_bilinear(const MatrixDataset& data, double lambda1, double lambda2,
                             const std::optional<AdaptiveWeights>& weights, const SparseOptions& opts) {
  check_lambdas(lambda1, lambda2);
  const MatrixDataset centered = data.centered ? data : center_predictors(data);
  BilinearFit start = fit_bilinear(centered, opts.envelope.bilinear);
  const AdaptiveWeights w = weights ? *weights : adaptive_weights(start, opts.gamma);
  if (w.w1.size() != data.r || w.w2.size() != data.m) {
    throw DimensionError("penalized_bilinear: weight vectors do not match the response dimensions");
  }
  if (lambda1 == 0.0 && lambda2 == 0.0) {
    const double obj = -start.loglik;
    SparseFit out = finish_bilinear(std::move(start), 0.0, 0.0, w, obj);
    out.objective_trace = {obj};
    return out;
  }

  const detail::Sides sides = detail::make_sides(centered);
  Matrix b1 = start.beta1, b2 = start.beta2;
  Matrix s1 = start.sigma1.matrix(), s2 = start.sigma2.matrix();
  std::vector<double> trace;
  double obj = -detail::loglik_centered(sides.row, b1, b2, s1, s2) + penalty(b1, b2, lambda1, lambda2, w);
  trace.push_back(obj);
  int iterations = 0;
  bool converged = false;
  Matrix kron_prev = kron(b2, b1);
  for (int it = 1; it <= opts.max_iter; ++it) {
    const Matrix w2 = inverse_pd(s2);
    const Matrix w1_old = inverse_pd(s1);
    b1 = penalized_block(b1, cross_moments(sides.row, b2, w2), w1_old,
                         scaled(w.w1, lambda1 * b2.norm()), lambda2 > 0.0 ? lambda2 * weighted_row_norms(b2, w.w2) : 0.0,
                         opts.inner_iter);
    s1 = detail::residual_cov(sides.row, b1, b2, w2);
    detail::require_pd(s1, "column residual covariance");

    const Matrix w1 = inverse_pd(s1);
    b2 = penalized_block(b2, cross_moments(sides.col, b1, w1), w2,
                         scaled(w.w2, lambda2 * b1.norm()), lambda1 > 0.0 ? lambda1 * weighted_row_norms(b1, w.w1) : 0.0,
                         opts.inner_iter);
    s2 = detail::residual_cov(sides.col, b2, b1, w1);
    detail::require_pd(s2, "row residual covariance");

    const double next = -detail::loglik_centered(sides.row, b1, b2, s1, s2) +
                        penalty(b1, b2, lambda1, lambda2, w);
    trace.push_back(next);
    iterations = it;
    const double change = std::abs(obj - next);
    obj = next;
    Matrix kron_next = kron(b2, b1);
    const double step = (kron_next - kron_prev).norm();
    kron_prev = std::move(kron_next);
    if (change < opts.tol * std::max(1.0, std::abs(obj)) && step <= 1e-8 * (1.0 + kron_prev.norm())) {
      converged = true;
      break;
    }
  }

  if (opts.envelope.bilinear.normalize) normalize_factors(b1, b2, s1, s2);
  BilinearFit fit;
  fit.mu = sides.y_mean;
  fit.sigma1 = PdMatrix(symmetrize(s1));
  fit.sigma2 = PdMatrix(symmetrize(s2));
  fit.loglik = detail::loglik_centered(sides.row, b1, b2, s1, s2);
  fit.beta1 = std::move(b1);
  fit.beta2 = std::move(b2);
  fit.iterations = iterations;
  fit.converged = converged;
  fit.n = data.n();
  fit.x_mean = centered.x_mean;
  SparseFit out = finish_bilinear(std::move(fit), lambda1, lambda2, w, obj);
  out.objective_trace = std::move(trace);
  return out;
}

namespace {

struct PenalizedBasis {
  Matrix s;  // S_res
  Matrix t;  // S_Y⁻¹
  Vector w;
  double lambda;

  double f(const Matrix& g) const {
    Eigen::LLT<Matrix> a(symmetrize(g.transpose() * s * g)), b(symmetrize(g.transpose() * t * g));
    if (a.info() != Eigen::Success || b.info() != Eigen::Success) return kInf;
    double v = 0.0;
    for (Eigen::Index i = 0; i < g.cols(); ++i) {
      v += 2.0 * std::log(a.matrixLLT()(i, i)) + 2.0 * std::log(b.matrixLLT()(i, i));
    }
    return v;
  }
  double value(const Matrix& g) const { return f(g) + lambda * weighted_row_norms(g, w); }
  Matrix grad(const Matrix& g) const {
    const Matrix sg = s * g, tg = t * g;
    const Matrix d = 2.0 * sg * inverse_pd(symmetrize(g.transpose() * sg)) +
                     2.0 * tg * inverse_pd(symmetrize(g.transpose() * tg));
    return d - g * (g.transpose() * d);
  }
};

// Proximal gradient on f(G) + λ Σ w_i ‖G_i‖ over semi-orthogonal G with QR retraction.
Matrix penalized_basis(const PenalizedBasis& pb, Matrix g, int max_iter) {
  const Eigen::Index u = g.cols();
  int finite_rows = 0;
  for (Eigen::Index i = 0; i < pb.w.size(); ++i) finite_rows += std::isfinite(pb.w(i)) ? 1 : 0;
  if (finite_rows < u) throw FitFailure("sparse envelope: fewer admissible rows than the envelope dimension");
  double current = pb.value(g);
  double t = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const Matrix grad = pb.grad(g);
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      Matrix z = g - t * grad;
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double thr = t * pb.lambda * pb.w(i);
        const double nrm = z.row(i).norm();
        if (!std::isfinite(thr) || nrm <= thr) z.row(i).setZero();
        else z.row(i) *= 1.0 - thr / nrm;
      }
      Eigen::ColPivHouseholderQR<Matrix> rank(z);
      if (rank.rank() == u) {
        const Matrix cand = SemiOrthoBasis::orthonormalize(z).matrix();
        const double v = pb.value(cand);
        if (v <= current) {
          const double gain = current - v;
          g = cand;
          current = v;
          accepted = true;
          if (gain < 1e-12 * (1.0 + std::abs(current))) return g;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) break;
    t = std::min(1.0, 2.0 * t);
  }
  return g;
}

SparseFit finish_envelope(EnvelopeFit fit, double l1, double l2, const AdaptiveWeights& w) {
  SparseFit out;
  out.kind = SparseKind::envelope;
  out.lambda1 = l1;
  out.lambda2 = l2;
  out.weights = w;
  out.active_rows = nonzero_rows(fit.beta1);
  out.active_cols = nonzero_rows(fit.beta2);
  out.objective = -fit.loglik;
  if (l1 > 0.0) out.objective += l1 * weighted_row_norms(fit.L.matrix(), w.w1);
  if (l2 > 0.0) out.objective += l2 * weighted_row_norms(fit.R.matrix(), w.w2);
  out.envelope = std::move(fit);
  return out;
}

}  // namespace

SparseFit sparse_envelope(const MatrixDataset& data, int u1, int u2, double lambda1, double lambda2,
                          const std::optional<AdaptiveWeights>& weights, const SparseOptions& opts) {
  check_lambdas(lambda1, lambda2);
  if (u1 < 1 || u1 > data.r || u2 < 1 || u2 > data.m) {
    throw InvalidArgument("sparse_envelope: envelope dimensions must lie in [1, r] × [1, m]");
  }
  const MatrixDataset centered = data.centered ? data : center_predictors(data);
  const BilinearFit bil = fit_bilinear(centered, opts.envelope.bilinear);
  std::optional<EnvelopeFit> plain;
  if (!weights || (lambda1 == 0.0 && lambda2 == 0.0)) plain = fit_envelope(centered, u1, u2, opts.envelope, &bil);
  const AdaptiveWeights w = weights ? *weights : adaptive_weights(*plain, opts.gamma);
  if (w.w1.size() != data.r || w.w2.size() != data.m) {
    throw DimensionError("sparse_envelope: weight vectors do not match the response dimensions");
  }
  if (lambda1 == 0.0 && lambda2 == 0.0) return finish_envelope(std::move(*plain), 0.0, 0.0, w);

  const detail::BasisStep base = detail::objective_basis_step(opts.envelope.minimizer);
  const int inner = opts.inner_iter;
  const detail::BasisStep step = [&](detail::SideId side, const Matrix& s_res, const Matrix& s_y, int u,
                                     const std::optional<Matrix>& warm, int outer_iter) {
    Matrix g = base(side, s_res, s_y, u, warm, outer_iter);
    const bool row = side == detail::SideId::row;
    const double lambda = row ? lambda1 : lambda2;
    if (lambda == 0.0) return g;
    const PenalizedBasis pb{s_res, inverse_pd(s_y), row ? w.w1 : w.w2, lambda};
    if (warm && warm->cols() == u && pb.value(*warm) < pb.value(g)) g = *warm;
    return penalized_basis(pb, std::move(g), inner);
  };
  // Full-dimension sides are never penalized: the only basis is the identity.
  const detail::Sides sides = detail::make_sides(centered);
  EnvelopeFit fit = detail::envelope_alternation(centered, sides, bil, u1, u2, opts.envelope, step);
  fit.mu = sides.y_mean;
  fit.n = data.n();
  fit.x_mean = centered.x_mean;
  return finish_envelope(std::move(fit), lambda1, lambda2, w);
}

LambdaSelection select_lambda(const MatrixDataset& data,
                              const std::vector<std::pair<double, double>>& grid, SparseKind kind,
                              int u1, int u2, const SparseOptions& opts, unsigned workers) {
  if (grid.empty()) throw InvalidArgument("select_lambda: empty grid");
  for (const auto& [a, b] : grid) check_lambdas(a, b);
  const MatrixDataset centered = data.centered ? data : center_predictors(data);
  AdaptiveWeights w;
  if (kind == SparseKind::bilinear) {
    w = adaptive_weights(fit_bilinear(centered, opts.envelope.bilinear), opts.gamma);
  } else {
    w = adaptive_weights(fit_envelope(centered, u1, u2, opts.envelope), opts.gamma);
  }
  const double logn = std::log(static_cast<double>(data.n()));

  LambdaSelection out;
  out.table.resize(grid.size());
  std::vector<std::optional<SparseFit>> fits(grid.size());
  parallel_for(grid.size(), workers, [&](std::size_t k) {
    LambdaCell& cell = out.table[k];
    cell.lambda1 = grid[k].first;
    cell.lambda2 = grid[k].second;
    try {
      SparseFit f = kind == SparseKind::bilinear
                        ? penalized_bilinear(centered, cell.lambda1, cell.lambda2, w, opts)
                        : sparse_envelope(centered, u1, u2, cell.lambda1, cell.lambda2, w, opts);
      cell.loglik = f.loglik();
      cell.active_rows = static_cast<int>(f.active_rows.size());
      cell.active_cols = static_cast<int>(f.active_cols.size());
      cell.df = cell.active_rows * static_cast<int>(data.p1) + cell.active_cols * static_cast<int>(data.p2);
      cell.score = -2.0 * cell.loglik + logn * cell.df;
      cell.ok = std::isfinite(cell.score);
      fits[k] = std::move(f);
    } catch (const Error& e) {
      cell.error = e.kind() + ": " + e.what();
    }
  });

  std::size_t best = grid.size();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const LambdaCell& c = out.table[k];
    if (!c.ok) continue;
    if (best == grid.size()) {
      best = k;
      continue;
    }
    const LambdaCell& b = out.table[best];
    const bool wins = c.score < b.score ||
                      (c.score == b.score && (c.df < b.df ||
                                              (c.df == b.df && c.lambda1 + c.lambda2 > b.lambda1 + b.lambda2)));
    if (wins) best = k;
  }
  if (best == grid.size()) throw FitFailure("select_lambda: every grid cell failed");
  out.lambda1 = out.table[best].lambda1;
  out.lambda2 = out.table[best].lambda2;
  out.best = std::move(fits[best]);
  return out;
}

}  // namespace matenv

#include <cmath>
#include <limits>

#include "envelope_core.hpp"
#include "matenv/errors.hpp"
#include "matenv/random.hpp"

namespace matenv {

namespace detail {

namespace {

bool converged_rel(double current, double previous, double tol) {
  return std::isfinite(previous) &&
         std::abs(current - previous) < tol * std::max(1.0, std::abs(previous));
}

// Leading left singular vectors of a coefficient estimate.
Matrix coefficient_directions(const Matrix& b, int u) {
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU);
  const Matrix& left = svd.matrixU();
  if (left.cols() >= u) return left.leftCols(u);
  Matrix g(b.rows(), u);
  g << left, Matrix::Identity(b.rows(), u).rightCols(u - left.cols());
  return g;
}

}  // namespace

BasisStep objective_basis_step(const MinimizerOptions& base) {
  return [base](SideId side, const Matrix& s_res, const Matrix& s_y, int u,
                const std::optional<Matrix>& warm, int outer_iter) {
    MinimizerOptions mo = base;
    mo.seed = derive_seed(base.seed, {static_cast<std::uint64_t>(side)});
    if (outer_iter > 1) mo.random_starts = 0;
    mo.warm_start = warm;
    return minimize_envelope_objective(PdMatrix(s_res), PdMatrix(s_y), u, mo).basis.matrix();
  };
}

EnvelopeFit assemble_envelope(const SemiOrthoBasis& l, const SemiOrthoBasis& r, Matrix beta1,
                              Matrix beta2, Matrix sigma1, Matrix sigma2, bool normalize) {
  if (normalize) normalize_factors(beta1, beta2, sigma1, sigma2);
  EnvelopeFit fit;
  fit.u1 = static_cast<int>(l.dim());
  fit.u2 = static_cast<int>(r.dim());
  fit.L = l;
  fit.R = r;
  fit.L0 = complete_basis(l);
  fit.R0 = complete_basis(r);
  fit.eta1 = l.matrix().transpose() * beta1;
  fit.eta2 = r.matrix().transpose() * beta2;
  fit.omega1 = symmetrize(l.matrix().transpose() * sigma1 * l.matrix());
  fit.omega10 = symmetrize(fit.L0.matrix().transpose() * sigma1 * fit.L0.matrix());
  fit.omega2 = symmetrize(r.matrix().transpose() * sigma2 * r.matrix());
  fit.omega20 = symmetrize(fit.R0.matrix().transpose() * sigma2 * fit.R0.matrix());
  fit.beta1 = std::move(beta1);
  fit.beta2 = std::move(beta2);
  fit.sigma1 = PdMatrix(symmetrize(sigma1));
  fit.sigma2 = PdMatrix(symmetrize(sigma2));
  return fit;
}

EnvelopeFit envelope_alternation(const MatrixDataset& centered, const Sides& sides,
                                 const BilinearFit& init, int u1, int u2,
                                 const EnvelopeOptions& opts, const BasisStep& step) {
  const Eigen::Index r = centered.r, m = centered.m;
  Matrix beta1, beta2 = init.beta2, sigma1, sigma2 = init.sigma2.matrix();
  Matrix lmat = Matrix::Identity(r, r), rmat = Matrix::Identity(m, m);
  std::optional<Matrix> lwarm, rwarm;
  std::vector<double> trace;
  double loglik = -std::numeric_limits<double>::infinity();
  double previous = loglik;
  bool converged = false;
  int iterations = 0;

  for (int it = 1; it <= opts.max_iter; ++it) {
    require_pd(sigma2, "row covariance");
    const HalfStep h1 = half_step(sides.row, beta2, inverse_pd(sigma2), opts.bilinear.ridge_jitter);
    if (u1 < r) {
      if (!lwarm) lwarm = coefficient_directions(h1.b, u1);
      lmat = step(SideId::row, h1.s_res, h1.s_y, u1, lwarm, it);
      lwarm = lmat;
    }
    const Matrix pl = lmat * lmat.transpose();
    const Matrix ql = Matrix::Identity(r, r) - pl;
    beta1 = pl * h1.b;
    sigma1 = symmetrize(pl * h1.s_res * pl + ql * h1.s_y * ql);
    require_pd(sigma1, "column covariance");
    // On the first pass β2 and Σ2 still come from the unconstrained fit.
    if (it > 1) trace.push_back(loglik_centered(sides.row, beta1, beta2, sigma1, sigma2));

    const HalfStep h2 = half_step(sides.col, beta1, inverse_pd(sigma1), opts.bilinear.ridge_jitter);
    if (u2 < m) {
      if (!rwarm) rwarm = coefficient_directions(h2.b, u2);
      rmat = step(SideId::col, h2.s_res, h2.s_y, u2, rwarm, it);
      rwarm = rmat;
    }
    const Matrix pr = rmat * rmat.transpose();
    const Matrix qr = Matrix::Identity(m, m) - pr;
    beta2 = pr * h2.b;
    sigma2 = symmetrize(pr * h2.s_res * pr + qr * h2.s_y * qr);
    require_pd(sigma2, "row covariance");
    loglik = loglik_centered(sides.row, beta1, beta2, sigma1, sigma2);
    trace.push_back(loglik);
    iterations = it;
    if (converged_rel(loglik, previous, opts.tol)) {
      converged = true;
      break;
    }
    previous = loglik;
  }

  EnvelopeFit fit = assemble_envelope(SemiOrthoBasis(lmat, 1e-6), SemiOrthoBasis(rmat, 1e-6),
                                      beta1, beta2, sigma1, sigma2, opts.bilinear.normalize);
  fit.loglik = loglik;
  fit.iterations = iterations;
  fit.converged = converged;
  fit.loglik_trace = std::move(trace);
  return fit;
}

}  // namespace detail

namespace {

Matrix leading_eigenvectors(const Matrix& s, int u) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  return es.eigenvectors().rightCols(u);
}

// No-predictor model: both coefficients vanish and the covariances follow from a
// covariance-only flip-flop on the centered responses.
EnvelopeFit null_envelope(const MatrixDataset& centered, const detail::Sides& sides, int u1, int u2,
                          const EnvelopeOptions& opts) {
  const Eigen::Index r = centered.r, m = centered.m;
  const Matrix zero1 = Matrix::Zero(r, centered.p1);
  const Matrix zero2 = Matrix::Zero(m, centered.p2);
  Matrix sigma2 = Matrix::Zero(m, m);
  for (const auto& e : sides.row.yc) sigma2.noalias() += e.transpose() * e;
  sigma2 = symmetrize(sigma2 / static_cast<double>(sides.n));
  Matrix sigma1;
  std::vector<double> trace;
  double loglik = -std::numeric_limits<double>::infinity(), previous = loglik;
  bool converged = false;
  int iterations = 0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    detail::require_pd(sigma2, "row covariance");
    sigma1 = detail::residual_cov(sides.row, zero1, zero2, inverse_pd(sigma2));
    detail::require_pd(sigma1, "column covariance");
    trace.push_back(detail::loglik_centered(sides.row, zero1, zero2, sigma1, sigma2));
    const Matrix next = detail::residual_cov(sides.col, zero2, zero1, inverse_pd(sigma1));
    detail::require_pd(next, "row covariance");
    const double moved = (next - sigma2).norm() / std::max(1.0, sigma2.norm());
    sigma2 = next;
    loglik = detail::loglik_centered(sides.row, zero1, zero2, sigma1, sigma2);
    trace.push_back(loglik);
    iterations = it;
    if (std::isfinite(previous) &&
        std::abs(loglik - previous) < opts.tol * std::max(1.0, std::abs(previous)) && moved < 1e-10) {
      converged = true;
      break;
    }
    previous = loglik;
  }
  const SemiOrthoBasis l = u1 == 0 ? SemiOrthoBasis::empty(r)
                                   : SemiOrthoBasis::orthonormalize(leading_eigenvectors(sigma1, u1));
  const SemiOrthoBasis rb = u2 == 0 ? SemiOrthoBasis::empty(m)
                                    : SemiOrthoBasis::orthonormalize(leading_eigenvectors(sigma2, u2));
  EnvelopeFit fit = detail::assemble_envelope(l, rb, zero1, zero2, sigma1, sigma2, opts.bilinear.normalize);
  fit.loglik = loglik;
  fit.iterations = iterations;
  fit.converged = converged;
  fit.loglik_trace = std::move(trace);
  return fit;
}

}  // namespace

EnvelopeFit fit_envelope(const MatrixDataset& data, int u1, int u2, const EnvelopeOptions& opts,
                         const BilinearFit* init) {
  if (data.n() == 0) throw InvalidArgument("fit_envelope: empty dataset");
  if (u1 < 0 || u1 > data.r || u2 < 0 || u2 > data.m) {
    throw InvalidArgument("fit_envelope: envelope dimensions out of range");
  }
  check_bilinear_sample_size(data.n(), data.r, data.m, data.p1, data.p2);
  const MatrixDataset centered = data.centered ? data : center_predictors(data);
  const detail::Sides sides = detail::make_sides(centered);

  EnvelopeFit fit;
  if (u1 == 0 || u2 == 0) {
    fit = null_envelope(centered, sides, u1, u2, opts);
  } else {
    const BilinearFit own = init ? BilinearFit{} : fit_bilinear(centered, opts.bilinear);
    const BilinearFit& bil = init ? *init : own;
    if (u1 == data.r && u2 == data.m) {
      // The full-dimension envelope model is the bilinear model.
      fit = detail::assemble_envelope(SemiOrthoBasis::identity(data.r), SemiOrthoBasis::identity(data.m),
                                      bil.beta1, bil.beta2, bil.sigma1.matrix(), bil.sigma2.matrix(),
                                      false);
      fit.loglik = bil.loglik;
      fit.iterations = bil.iterations;
      fit.converged = bil.converged;
      fit.loglik_trace = bil.loglik_trace;
    } else {
      fit = detail::envelope_alternation(centered, sides, bil, u1, u2, opts,
                                         detail::objective_basis_step(opts.minimizer));
    }
  }
  fit.mu = sides.y_mean;
  fit.n = data.n();
  fit.x_mean = centered.x_mean;
  return fit;
}

}  // namespace matenv

#include <cmath>
#include <limits>

#include "envelope_core.hpp"
#include "matenv/errors.hpp"

namespace matenv {

namespace {

struct ScalarData {
  std::vector<Matrix> yc;   // Y_i − Ȳ
  std::vector<double> xc;   // x_i − x̄
  Matrix y_mean;
  double x_mean = 0.0;
  Matrix slope;             // OLS coefficient B
};

ScalarData prepare(const MatrixDataset& data) {
  ScalarData d;
  d.y_mean = data.y_mean();
  double xs = 0.0;
  for (const auto& u : data.units) xs += u.x(0, 0);
  d.x_mean = xs / static_cast<double>(data.n());
  double sxx = 0.0;
  d.slope = Matrix::Zero(data.r, data.m);
  for (const auto& u : data.units) {
    d.yc.push_back(u.y - d.y_mean);
    d.xc.push_back(u.x(0, 0) - d.x_mean);
    sxx += d.xc.back() * d.xc.back();
    d.slope += d.yc.back() * d.xc.back();
  }
  if (!(sxx > 0.0)) throw InvalidArgument("fit_envelope_scalarX: predictor is constant");
  d.slope /= sxx;
  return d;
}

// (n·b)⁻¹ Σ E_i W E_iᵀ with E_i = yc_i − coef·xc_i, optionally on transposes.
Matrix weighted_cov(const ScalarData& d, const Matrix& coef, const Matrix& w, bool transposed) {
  const Eigen::Index a = transposed ? coef.cols() : coef.rows();
  const Eigen::Index b = transposed ? coef.rows() : coef.cols();
  Matrix s = Matrix::Zero(a, a);
  for (std::size_t i = 0; i < d.yc.size(); ++i) {
    const Matrix e = d.yc[i] - coef * d.xc[i];
    if (transposed) s.noalias() += e.transpose() * w * e;
    else s.noalias() += e * w * e.transpose();
  }
  return symmetrize(s / static_cast<double>(d.yc.size() * static_cast<std::size_t>(b)));
}

double scalar_loglik(const ScalarData& d, const Matrix& beta, const Matrix& s1, const Matrix& s2) {
  detail::Side side;
  const Eigen::Index m = beta.cols();
  for (std::size_t i = 0; i < d.yc.size(); ++i) {
    side.yc.push_back(d.yc[i]);
    side.x.push_back(d.xc[i] * Matrix::Identity(m, m));
  }
  return detail::loglik_centered(side, beta, Matrix::Identity(m, m), s1, s2);
}

Matrix leading_left(const Matrix& b, int u) {
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeFullU);
  return svd.matrixU().leftCols(u);
}

}  // namespace

ScalarEnvelopeFit fit_envelope_scalarX(const MatrixDataset& data, int u1, int u2,
                                       const EnvelopeOptions& opts) {
  if (data.n() < 2) throw DimensionError("fit_envelope_scalarX needs at least two units");
  if (data.p1 != 1 || data.p2 != 1) throw DimensionError("fit_envelope_scalarX requires a scalar predictor");
  const Eigen::Index r = data.r, m = data.m;
  if (u1 < 0 || u1 > r || u2 < 0 || u2 > m) {
    throw InvalidArgument("fit_envelope_scalarX: envelope dimensions out of range");
  }
  const ScalarData d = prepare(data);
  const detail::BasisStep step = detail::objective_basis_step(opts.minimizer);
  const Matrix ir = Matrix::Identity(r, r), im = Matrix::Identity(m, m);

  // Unenveloped covariance flip-flop for the starting Σ2.
  Matrix sigma1 = ir, sigma2 = weighted_cov(d, d.slope, ir, true);
  for (int it = 0; it < opts.max_iter; ++it) {
    detail::require_pd(sigma2, "row covariance");
    sigma1 = weighted_cov(d, d.slope, inverse_pd(sigma2), false);
    detail::require_pd(sigma1, "column covariance");
    const Matrix next = weighted_cov(d, d.slope, inverse_pd(sigma1), true);
    const double change = (next - sigma2).norm() / std::max(1.0, sigma2.norm());
    sigma2 = next;
    if (change < opts.tol) break;
  }

  Matrix lmat = ir, rmat = im;
  if (u1 == 0) lmat = Matrix(r, 0);
  if (u2 == 0) rmat = Matrix(m, 0);
  std::optional<Matrix> lwarm, rwarm;
  if (u1 > 0 && u1 < r) lwarm = leading_left(d.slope, u1);
  if (u2 > 0 && u2 < m) rwarm = leading_left(d.slope.transpose(), u2);

  ScalarEnvelopeFit fit;
  Matrix beta;
  double previous = -std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opts.max_iter; ++it) {
    detail::require_pd(sigma2, "row covariance");
    const Matrix w2 = inverse_pd(sigma2);
    Matrix pr = rmat * rmat.transpose();
    const Matrix s_res1 = weighted_cov(d, d.slope * pr, w2, false);
    const Matrix s_y1 = weighted_cov(d, Matrix::Zero(r, m), w2, false);
    if (u1 > 0 && u1 < r) {
      lmat = step(detail::SideId::row, s_res1, s_y1, u1, lwarm, it);
      lwarm = lmat;
    }
    const Matrix pl = lmat * lmat.transpose();
    sigma1 = symmetrize(pl * s_res1 * pl + (ir - pl) * s_y1 * (ir - pl));
    detail::require_pd(sigma1, "column covariance");
    beta = pl * d.slope * pr;
    // On the first pass Σ2 and the column basis are still unstructured.
    if (it > 1) fit.loglik_trace.push_back(scalar_loglik(d, beta, sigma1, sigma2));

    const Matrix w1 = inverse_pd(sigma1);
    const Matrix s_res2 = weighted_cov(d, pl * d.slope, w1, true);
    const Matrix s_y2 = weighted_cov(d, Matrix::Zero(r, m), w1, true);
    if (u2 > 0 && u2 < m) {
      rmat = step(detail::SideId::col, s_res2, s_y2, u2, rwarm, it);
      rwarm = rmat;
    }
    pr = rmat * rmat.transpose();
    sigma2 = symmetrize(pr * s_res2 * pr + (im - pr) * s_y2 * (im - pr));
    detail::require_pd(sigma2, "row covariance");
    beta = pl * d.slope * pr;
    fit.loglik = scalar_loglik(d, beta, sigma1, sigma2);
    fit.loglik_trace.push_back(fit.loglik);
    fit.iterations = it;
    if (std::isfinite(previous) &&
        std::abs(fit.loglik - previous) < opts.tol * std::max(1.0, std::abs(previous))) {
      fit.converged = true;
      break;
    }
    previous = fit.loglik;
  }

  if (opts.bilinear.normalize) {
    const double dn = (sigma2(0, 0) > 0 ? 1.0 : -1.0) * sigma2.norm();
    sigma2 /= dn;
    sigma1 *= dn;
  }
  fit.u1 = u1;
  fit.u2 = u2;
  fit.L = u1 == 0 ? SemiOrthoBasis::empty(r) : SemiOrthoBasis(lmat, 1e-6);
  fit.R = u2 == 0 ? SemiOrthoBasis::empty(m) : SemiOrthoBasis(rmat, 1e-6);
  fit.L0 = complete_basis(fit.L);
  fit.R0 = complete_basis(fit.R);
  fit.eta = fit.L.matrix().transpose() * beta * fit.R.matrix();
  fit.beta = std::move(beta);
  fit.beta_full = d.slope;
  fit.mu = d.y_mean;
  fit.sigma1 = PdMatrix(symmetrize(sigma1));
  fit.sigma2 = PdMatrix(symmetrize(sigma2));
  fit.n = data.n();
  fit.x_mean = d.x_mean;
  return fit;
}

}  // namespace matenv

#include "matenv/bilinear.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "conditional_steps.hpp"
#include "matenv/errors.hpp"
#include "matenv/matnorm.hpp"
#include "matenv/random.hpp"

namespace matenv {

namespace {

double first_nonzero(const Matrix& m) {
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    if (m.data()[k] != 0.0) return m.data()[k];
  }
  return 0.0;
}

struct FlipFlopState {
  Matrix beta1, beta2, sigma1, sigma2;
  double loglik = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

FlipFlopState run_flip_flop(const detail::Sides& sides, Matrix beta2, Matrix sigma2,
                            const BilinearOptions& opts) {
  FlipFlopState st;
  st.beta2 = std::move(beta2);
  st.sigma2 = std::move(sigma2);
  double previous = -std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opts.max_iter; ++it) {
    detail::require_pd(st.sigma2, "row covariance");
    const auto step1 = detail::half_step(sides.row, st.beta2, inverse_pd(st.sigma2), opts.ridge_jitter);
    st.beta1 = step1.b;
    st.sigma1 = step1.s_res;
    detail::require_pd(st.sigma1, "column residual covariance S_res|2");
    st.trace.push_back(detail::loglik_centered(sides.row, st.beta1, st.beta2, st.sigma1, st.sigma2));

    const auto step2 = detail::half_step(sides.col, st.beta1, inverse_pd(st.sigma1), opts.ridge_jitter);
    st.beta2 = step2.b;
    st.sigma2 = step2.s_res;
    detail::require_pd(st.sigma2, "row residual covariance S_res|1");
    st.loglik = detail::loglik_centered(sides.row, st.beta1, st.beta2, st.sigma1, st.sigma2);
    st.trace.push_back(st.loglik);
    st.iterations = it;

    if (std::isfinite(previous) &&
        std::abs(st.loglik - previous) < opts.tol * std::max(1.0, std::abs(previous))) {
      st.converged = true;
      break;
    }
    previous = st.loglik;
  }
  return st;
}

}  // namespace

void check_bilinear_sample_size(std::size_t n, Eigen::Index r, Eigen::Index m, Eigen::Index p1,
                                Eigen::Index p2) {
  const double nn = static_cast<double>(n);
  const double rr = static_cast<double>(r), mm = static_cast<double>(m);
  const bool cov_ok = nn > std::max(rr / mm, mm / rr);
  const bool m2_ok = nn * static_cast<double>(std::min(p2, m)) >= static_cast<double>(p1);
  const bool m1_ok = nn * static_cast<double>(std::min(p1, r)) >= static_cast<double>(p2);
  if (n < 2 || !cov_ok || !m1_ok || !m2_ok) {
    throw DimensionError("sample size n=" + std::to_string(n) +
                         " too small for r=" + std::to_string(r) + ", m=" + std::to_string(m) +
                         ", p1=" + std::to_string(p1) + ", p2=" + std::to_string(p2));
  }
}

void normalize_factors(Matrix& beta1, Matrix& beta2, Matrix& sigma1, Matrix& sigma2) {
  if (beta2.size() > 0 && beta2.norm() > 0.0) {
    const double c = (first_nonzero(beta2) > 0 ? 1.0 : -1.0) * beta2.norm();
    beta2 /= c;
    beta1 *= c;
  }
  const double d = (sigma2(0, 0) > 0 ? 1.0 : -1.0) * sigma2.norm();
  sigma2 /= d;
  sigma1 *= d;
}

BilinearFit fit_bilinear(const MatrixDataset& data, const BilinearOptions& opts) {
  if (data.n() == 0) throw InvalidArgument("fit_bilinear: empty dataset");
  check_bilinear_sample_size(data.n(), data.r, data.m, data.p1, data.p2);
  const MatrixDataset centered = data.centered ? data : center_predictors(data);
  const detail::Sides sides = detail::make_sides(centered);

  Matrix sigma2_init = Matrix::Zero(data.m, data.m);
  for (const auto& e : sides.row.yc) sigma2_init.noalias() += e.transpose() * e;
  sigma2_init = symmetrize(sigma2_init / static_cast<double>(data.n()));

  const Matrix ones = Matrix::Ones(data.m, data.p2);
  FlipFlopState best = run_flip_flop(sides, ones / ones.norm(), sigma2_init, opts);
  Rng rng(opts.seed);
  for (int k = 0; k < opts.random_restarts; ++k) {
    Matrix start = standard_normal(data.m, data.p2, rng);
    start /= start.norm();
    FlipFlopState candidate = run_flip_flop(sides, start, sigma2_init, opts);
    if (candidate.loglik > best.loglik) best = std::move(candidate);
  }

  if (opts.normalize) normalize_factors(best.beta1, best.beta2, best.sigma1, best.sigma2);

  BilinearFit fit;
  fit.mu = sides.y_mean;
  fit.beta1 = std::move(best.beta1);
  fit.beta2 = std::move(best.beta2);
  fit.sigma1 = PdMatrix(symmetrize(best.sigma1));
  fit.sigma2 = PdMatrix(symmetrize(best.sigma2));
  fit.loglik = best.loglik;
  fit.iterations = best.iterations;
  fit.converged = best.converged;
  fit.loglik_trace = std::move(best.trace);
  fit.n = data.n();
  fit.x_mean = centered.x_mean;
  return fit;
}

double loglik_bilinear(const Matrix& mu, const Matrix& beta1, const Matrix& beta2,
                       const PdMatrix& sigma1, const PdMatrix& sigma2, const MatrixDataset& data) {
  if (mu.rows() != data.r || mu.cols() != data.m || beta1.rows() != data.r ||
      beta1.cols() != data.p1 || beta2.rows() != data.m || beta2.cols() != data.p2 ||
      sigma1.size() != data.r || sigma2.size() != data.m) {
    throw DimensionError("loglik_bilinear: parameter dimensions do not match the dataset");
  }
  double total = 0.0;
  const Matrix b2t = beta2.transpose();
  for (const auto& u : data.units) {
    total += matnorm_logpdf(u.y, mu + beta1 * u.x * b2t, sigma1, sigma2);
  }
  return total;
}

namespace {

struct VectorDesign {
  Matrix y;  // n × rm, rows vec(Y_i)
  Matrix x;  // n × p1p2, rows vec(X_i)
};

VectorDesign vector_design(const MatrixDataset& data) {
  const Eigen::Index k = data.r * data.m;
  const Eigen::Index q = data.p1 * data.p2;
  VectorDesign d{Matrix(data.n(), k), Matrix(data.n(), q)};
  for (std::size_t i = 0; i < data.n(); ++i) {
    d.y.row(static_cast<Eigen::Index>(i)) = vec(data.units[i].y).transpose();
    d.x.row(static_cast<Eigen::Index>(i)) = vec(data.units[i].x).transpose();
  }
  return d;
}

}  // namespace

VectorModelFit fit_vector_model(const MatrixDataset& data) {
  if (data.n() < 2) throw DimensionError("fit_vector_model needs at least two units");
  VectorDesign d = vector_design(data);
  const Vector ymean = d.y.colwise().mean();
  const Vector xmean = d.x.colwise().mean();
  const Matrix yc = d.y.rowwise() - ymean.transpose();
  const Matrix xc = d.x.rowwise() - xmean.transpose();

  const Matrix xtx = symmetrize(xc.transpose() * xc);
  Eigen::LLT<Matrix> llt(xtx);
  if (llt.info() != Eigen::Success || xtx.trace() <= 0.0) {
    throw SingularStepError("vectorized design is singular");
  }
  VectorModelFit fit;
  fit.n = data.n();
  fit.mu = ymean;
  fit.nu = llt.solve(xc.transpose() * yc).transpose();
  const Matrix resid = yc - xc * fit.nu.transpose();
  const Matrix sigma = symmetrize(resid.transpose() * resid / static_cast<double>(data.n()));
  Eigen::LLT<Matrix> sllt(sigma);
  if (sllt.info() != Eigen::Success) throw SingularStepError("vectorized residual covariance is singular");
  fit.sigma = PdMatrix(sigma);

  const double k = static_cast<double>(sigma.rows());
  const Matrix z = sllt.matrixL().solve(resid.transpose());
  fit.loglik = -0.5 * static_cast<double>(data.n()) * (k * std::log(2.0 * std::numbers::pi) + fit.sigma.logdet()) -
               0.5 * z.squaredNorm();
  return fit;
}

double loglik_vector(const Vector& mu, const Matrix& nu, const PdMatrix& sigma,
                     const MatrixDataset& data) {
  const Eigen::Index k = data.r * data.m;
  if (mu.size() != k || nu.rows() != k || nu.cols() != data.p1 * data.p2 || sigma.size() != k) {
    throw DimensionError("loglik_vector: parameter dimensions do not match the dataset");
  }
  const Matrix l = sigma.lower();
  double quad = 0.0;
  for (const auto& u : data.units) {
    const Vector e = vec(u.y) - mu - nu * vec(u.x);
    quad += l.triangularView<Eigen::Lower>().solve(e).squaredNorm();
  }
  const double n = static_cast<double>(data.n());
  return -0.5 * n * (static_cast<double>(k) * std::log(2.0 * std::numbers::pi) + sigma.logdet()) -
         0.5 * quad;
}

int count_params(ModelKind kind, int r, int m, int p1, int p2, int u1, int u2,
                 Convention convention) {
  if (r < 1 || m < 1 || p1 < 1 || p2 < 1) throw InvalidArgument("count_params: dimensions must be positive");
  const int cov = r * (r + 1) / 2 + m * (m + 1) / 2;
  const int constraints = convention == Convention::with_constraints ? 2 : 0;
  switch (kind) {
    case ModelKind::vector:
      return r * m + r * m * p1 * p2 + r * m * (r * m + 1) / 2;
    case ModelKind::bilinear:
      return r * m + r * p1 + m * p2 + cov - constraints;
    case ModelKind::envelope:
      if (u1 < 0 || u1 > r || u2 < 0 || u2 > m) {
        throw InvalidArgument("count_params: envelope dimensions out of range");
      }
      if (u1 == 0 || u2 == 0) return r * m + cov - constraints / 2;
      return r * m + u1 * p1 + u2 * p2 + cov - constraints;
  }
  throw InvalidArgument("count_params: unknown model kind");
}

LrtResult lrt_kron(const VectorModelFit& vector_fit, const BilinearFit& bilinear_fit,
                   Convention convention) {
  const auto r = static_cast<int>(bilinear_fit.beta1.rows());
  const auto m = static_cast<int>(bilinear_fit.beta2.rows());
  const auto p1 = static_cast<int>(bilinear_fit.beta1.cols());
  const auto p2 = static_cast<int>(bilinear_fit.beta2.cols());
  if (vector_fit.n != bilinear_fit.n || vector_fit.nu.rows() != r * m ||
      vector_fit.nu.cols() != p1 * p2) {
    throw DimensionError("lrt_kron: fits come from different datasets");
  }
  LrtResult out;
  out.stat = std::max(0.0, 2.0 * (vector_fit.loglik - bilinear_fit.loglik));
  out.df = count_params(ModelKind::vector, r, m, p1, p2, 0, 0, convention) -
           count_params(ModelKind::bilinear, r, m, p1, p2, 0, 0, convention);
  if (out.df > 0) {
    boost::math::chi_squared dist(out.df);
    out.pvalue = boost::math::cdf(boost::math::complement(dist, out.stat));
  }
  return out;
}

InformationCriteria information_criteria(double loglik, int num_params, std::size_t n) {
  const double t = static_cast<double>(num_params);
  return {-2.0 * loglik + 2.0 * t, -2.0 * loglik + std::log(static_cast<double>(n)) * t};
}

}  // namespace matenv

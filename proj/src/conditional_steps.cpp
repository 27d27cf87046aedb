#include "conditional_steps.hpp"

#include <cmath>
#include <numbers>

#include "matenv/errors.hpp"

namespace matenv::detail {

Sides make_sides(const MatrixDataset& centered) {
  Sides s;
  s.n = centered.n();
  s.y_mean = centered.y_mean();
  s.row.yc.reserve(s.n);
  s.row.x.reserve(s.n);
  s.col.yc.reserve(s.n);
  s.col.x.reserve(s.n);
  for (const auto& u : centered.units) {
    Matrix e = u.y - s.y_mean;
    s.col.yc.push_back(e.transpose());
    s.row.yc.push_back(std::move(e));
    s.row.x.push_back(u.x);
    s.col.x.push_back(u.x.transpose());
  }
  return s;
}

void require_pd(const Matrix& s, const char* what) {
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) {
    throw SingularStepError(std::string(what) + " is singular or not positive definite");
  }
}

HalfStep half_step(const Side& side, const Matrix& other_beta, const Matrix& other_sigma_inv,
                   bool ridge_jitter) {
  const Eigen::Index a = side.rows();
  const Eigen::Index b = side.cols();
  const Eigen::Index pa = side.x.front().rows();
  const std::size_t n = side.yc.size();

  const Matrix wb = other_sigma_inv * other_beta;          // b×pb
  const Matrix btwb = other_beta.transpose() * wb;         // pb×pb
  HalfStep out;
  out.c = Matrix::Zero(a, pa);
  out.m = Matrix::Zero(pa, pa);
  out.s_y = Matrix::Zero(a, a);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& x = side.x[i];
    out.c.noalias() += side.yc[i] * wb * x.transpose();
    out.m.noalias() += x * btwb * x.transpose();
    out.s_y.noalias() += side.yc[i] * other_sigma_inv * side.yc[i].transpose();
  }
  out.m = symmetrize(out.m);

  Eigen::LLT<Matrix> llt(out.m);
  if (llt.info() != Eigen::Success || out.m.trace() <= 0.0) {
    if (!ridge_jitter || out.m.trace() <= 0.0) {
      throw SingularStepError("conditional design matrix M is singular");
    }
    const double ridge = 1e-8 * out.m.trace() / static_cast<double>(pa);
    out.m += ridge * Matrix::Identity(pa, pa);
    llt.compute(out.m);
    if (llt.info() != Eigen::Success) throw SingularStepError("conditional design matrix M is singular");
  }
  out.b = llt.solve(out.c.transpose()).transpose();
  out.s_res = residual_cov(side, out.b, other_beta, other_sigma_inv);
  out.s_y = symmetrize(out.s_y / static_cast<double>(n * static_cast<std::size_t>(b)));
  return out;
}

Matrix residual_cov(const Side& side, const Matrix& beta, const Matrix& other_beta,
                    const Matrix& other_sigma_inv) {
  const Eigen::Index a = side.rows();
  const Eigen::Index b = side.cols();
  const std::size_t n = side.yc.size();
  const Matrix bt = other_beta.transpose();
  Matrix s = Matrix::Zero(a, a);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix e = side.yc[i] - beta * side.x[i] * bt;
    s.noalias() += e * other_sigma_inv * e.transpose();
  }
  return symmetrize(s / static_cast<double>(n * static_cast<std::size_t>(b)));
}

double loglik_centered(const Side& row, const Matrix& beta1, const Matrix& beta2,
                       const Matrix& sigma1, const Matrix& sigma2) {
  Eigen::LLT<Matrix> l1(sigma1), l2(sigma2);
  if (l1.info() != Eigen::Success || l2.info() != Eigen::Success) {
    throw SingularStepError("covariance factor is not positive definite");
  }
  const Matrix L1 = l1.matrixL();
  const Matrix L2 = l2.matrixL();
  double logdet1 = 0.0, logdet2 = 0.0;
  for (Eigen::Index i = 0; i < L1.rows(); ++i) logdet1 += 2.0 * std::log(L1(i, i));
  for (Eigen::Index i = 0; i < L2.rows(); ++i) logdet2 += 2.0 * std::log(L2(i, i));

  const Eigen::Index r = sigma1.rows();
  const Eigen::Index m = sigma2.rows();
  const double n = static_cast<double>(row.yc.size());
  const Matrix b2t = beta2.transpose();
  double quad = 0.0;
  for (std::size_t i = 0; i < row.yc.size(); ++i) {
    const Matrix e = row.yc[i] - beta1 * row.x[i] * b2t;
    const Matrix z1 = L1.triangularView<Eigen::Lower>().solve(e);
    const Matrix z2 = L2.triangularView<Eigen::Lower>().solve(z1.transpose());
    quad += z2.squaredNorm();
  }
  return -0.5 * n * static_cast<double>(r * m) * std::log(2.0 * std::numbers::pi) -
         0.5 * n * static_cast<double>(m) * logdet1 - 0.5 * n * static_cast<double>(r) * logdet2 -
         0.5 * quad;
}

}  // namespace matenv::detail

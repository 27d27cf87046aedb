#include "matenv/matnorm.hpp"

#include <cmath>
#include <numbers>

#include "matenv/errors.hpp"

namespace matenv {

KroneckerCov identify_factors(const PdMatrix& sigma1, const PdMatrix& sigma2) {
  const Matrix& s2 = sigma2.matrix();
  const double d = (s2(0, 0) > 0 ? 1.0 : -1.0) * s2.norm();
  return KroneckerCov{PdMatrix(sigma1.matrix() * d), PdMatrix(s2 / d), true};
}

RowColCov row_col_cov(const std::vector<Matrix>& sample) {
  if (sample.size() < 2) throw InvalidArgument("row_col_cov needs at least two observations");
  const Eigen::Index r = sample.front().rows();
  const Eigen::Index m = sample.front().cols();
  Matrix mean = Matrix::Zero(r, m);
  for (const auto& y : sample) {
    if (y.rows() != r || y.cols() != m) throw DimensionError("row_col_cov: ragged sample");
    mean += y;
  }
  mean /= static_cast<double>(sample.size());

  RowColCov out;
  out.cov_c = Matrix::Zero(r, r);
  out.cov_r = Matrix::Zero(m, m);
  for (const auto& y : sample) {
    const Matrix e = y - mean;
    out.cov_c.noalias() += e * e.transpose();
    out.cov_r.noalias() += e.transpose() * e;
  }
  out.cov_c = symmetrize(out.cov_c / static_cast<double>(sample.size()));
  out.cov_r = symmetrize(out.cov_r / static_cast<double>(sample.size()));

  // tr(cov_r) = tr(cov_c) = tr(Δ1)·tr(Δ2).
  const double total = out.cov_r.trace();
  if (!(total > 0.0)) {
    out.degenerate = true;
    out.delta1 = Matrix::Zero(r, r);
    out.delta2 = Matrix::Zero(m, m);
    return out;
  }
  Matrix d1 = out.cov_c;
  Matrix d2 = out.cov_r / total;
  const double d = (d2(0, 0) > 0 ? 1.0 : -1.0) * d2.norm();
  out.delta1 = d1 * d;
  out.delta2 = d2 / d;
  out.degenerate = Eigen::LLT<Matrix>(out.delta1).info() != Eigen::Success ||
                   Eigen::LLT<Matrix>(out.delta2).info() != Eigen::Success;
  return out;
}

double matnorm_logpdf(const Matrix& y, const Matrix& mean, const PdMatrix& sigma1,
                      const PdMatrix& sigma2) {
  const Eigen::Index r = sigma1.size();
  const Eigen::Index m = sigma2.size();
  if (y.rows() != r || y.cols() != m || mean.rows() != r || mean.cols() != m) {
    throw DimensionError("matnorm_logpdf: dimension mismatch");
  }
  // Z = L1⁻¹ (Y - M) L2⁻ᵀ, so the quadratic form is ‖Z‖².
  const Matrix l1 = sigma1.lower();
  const Matrix l2 = sigma2.lower();
  const Matrix z1 = l1.triangularView<Eigen::Lower>().solve(y - mean);
  const Matrix z = l2.triangularView<Eigen::Lower>().solve(z1.transpose());
  const double rm = static_cast<double>(r * m);
  return -0.5 * rm * std::log(2.0 * std::numbers::pi) -
         0.5 * static_cast<double>(m) * sigma1.logdet() -
         0.5 * static_cast<double>(r) * sigma2.logdet() - 0.5 * z.squaredNorm();
}

std::vector<Matrix> matnorm_sample(const Matrix& mean, const PdMatrix& sigma1,
                                   const PdMatrix& sigma2, int count, Rng& rng) {
  if (mean.rows() != sigma1.size() || mean.cols() != sigma2.size()) {
    throw DimensionError("matnorm_sample: dimension mismatch");
  }
  if (count < 0) throw InvalidArgument("matnorm_sample: negative count");
  const Matrix a = sigma1.lower();
  const Matrix bt = sigma2.lower().transpose();
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(mean + a * standard_normal(mean.rows(), mean.cols(), rng) * bt);
  }
  return out;
}

}  // namespace matenv

#pragma once

// Shared fixtures and independent oracles for the test suite.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "matenv/dataset.hpp"
#include "matenv/matnorm.hpp"
#include "matenv/random.hpp"
#include "matenv/tensorlin.hpp"

namespace testing {

using matenv::Matrix;
using matenv::Vector;

inline Matrix random_pd(Eigen::Index k, matenv::Rng& rng, double ridge = 0.5) {
  const Matrix a = matenv::standard_normal(k, k, rng);
  return matenv::symmetrize(a * a.transpose() / static_cast<double>(k) +
                            ridge * Matrix::Identity(k, k));
}

inline Matrix random_orthogonal(Eigen::Index k, matenv::Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(matenv::standard_normal(k, k, rng));
  return qr.householderQ() * Matrix::Identity(k, k);
}

inline Matrix random_semi_ortho(Eigen::Index r, Eigen::Index u, matenv::Rng& rng) {
  return random_orthogonal(r, rng).leftCols(u);
}

struct BilinearTruth {
  Matrix mu, beta1, beta2, sigma1, sigma2;
};

/// Data from Y = μ + β1 X β2ᵀ + E with standard-normal X and matrix-normal E.
inline matenv::MatrixDataset bilinear_data(const BilinearTruth& t, int n, std::uint64_t seed) {
  matenv::Rng rng(seed);
  const matenv::PdMatrix s1(t.sigma1), s2(t.sigma2);
  std::vector<matenv::Unit> units;
  const Matrix zero = Matrix::Zero(t.mu.rows(), t.mu.cols());
  for (int i = 0; i < n; ++i) {
    Matrix x = matenv::standard_normal(t.beta1.cols(), t.beta2.cols(), rng);
    const Matrix e = matenv::matnorm_sample(zero, s1, s2, 1, rng).front();
    units.push_back({t.mu + t.beta1 * x * t.beta2.transpose() + e, std::move(x)});
  }
  return matenv::MatrixDataset(std::move(units));
}

inline BilinearTruth random_truth(int r, int m, int p1, int p2, double noise, std::uint64_t seed) {
  matenv::Rng rng(seed);
  BilinearTruth t;
  t.mu = matenv::standard_normal(r, m, rng);
  t.beta1 = matenv::standard_normal(r, p1, rng);
  t.beta2 = matenv::standard_normal(m, p2, rng);
  t.sigma1 = noise * random_pd(r, rng);
  t.sigma2 = random_pd(m, rng);
  return t;
}

/// Dense multivariate normal log-density through an LU determinant and explicit inverse.
inline double dense_mvn_logpdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const Eigen::FullPivLU<Matrix> lu(cov);
  const Vector d = x - mean;
  const double quad = d.dot(lu.inverse() * d);
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) +
                 std::log(lu.determinant()) + quad);
}

struct OlsOracle {
  Matrix coef;   // q×p
  Matrix sigma;  // q×q, divisor n
};

/// Multivariate least squares of rows of Y (n×q) on centered rows of X (n×p) with intercept.
inline OlsOracle ols(const Matrix& y, const Matrix& x) {
  const Eigen::Index n = y.rows();
  const Matrix yc = y.rowwise() - y.colwise().mean();
  const Matrix xc = x.rowwise() - x.colwise().mean();
  const Matrix coef_t = xc.colPivHouseholderQr().solve(yc);  // p×q
  const Matrix res = yc - xc * coef_t;
  return {coef_t.transpose(), res.transpose() * res / static_cast<double>(n)};
}

/// Frobenius distance between the orthogonal projections onto span(a) and span(b).
inline double subspace_gap(const Matrix& a, const Matrix& b) {
  return (a * a.transpose() - b * b.transpose()).norm();
}

inline bool nondecreasing(const std::vector<double>& trace, double slack) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i] < trace[i - 1] - slack) return false;
  }
  return true;
}

}  // namespace testing

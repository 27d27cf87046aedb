#include "matenv/tensorlin.hpp"

#include <cmath>
#include <string>

#include "matenv/errors.hpp"

namespace matenv {

namespace {

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace

SemiOrthoBasis::SemiOrthoBasis(Matrix basis, double tol) : basis_(std::move(basis)) {
  if (basis_.cols() > basis_.rows()) {
    throw InvalidArgument("semi-orthogonal basis must have at most as many columns as rows");
  }
  if (basis_.cols() == 0) return;
  const Matrix gram = basis_.transpose() * basis_;
  const double err = (gram - Matrix::Identity(gram.rows(), gram.cols())).norm();
  if (!(err <= tol)) {
    throw InvalidArgument("basis columns are not orthonormal (||G'G - I||_F = " +
                          std::to_string(err) + ")");
  }
}

SemiOrthoBasis SemiOrthoBasis::orthonormalize(const Matrix& a) {
  if (a.cols() == 0) return empty(a.rows());
  if (a.cols() > a.rows()) throw InvalidArgument("cannot orthonormalize a wide matrix");
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  const double scale = std::max(max_abs(a), 1e-300);
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    if (std::abs(r(j, j)) <= 1e-12 * scale) {
      throw InvalidArgument("cannot orthonormalize a rank-deficient matrix");
    }
  }
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  // Fix signs so that diag(R) > 0; keeps the result a continuous function of `a`.
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return SemiOrthoBasis(std::move(q), Unchecked{});
}

SemiOrthoBasis SemiOrthoBasis::empty(Eigen::Index ambient) {
  return SemiOrthoBasis(Matrix(ambient, 0), Unchecked{});
}

SemiOrthoBasis SemiOrthoBasis::identity(Eigen::Index ambient) {
  return SemiOrthoBasis(Matrix::Identity(ambient, ambient), Unchecked{});
}

PdMatrix::PdMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw InvalidArgument("PD matrix must be square");
  const double asym = max_abs(m_ - m_.transpose());
  if (asym > 1e-12 * std::max(1.0, max_abs(m_))) {
    throw InvalidArgument("matrix is not symmetric");
  }
  m_ = symmetrize(m_);
  llt_.compute(m_);
  if (llt_.info() != Eigen::Success) throw DefinitenessError("matrix is not positive definite");
}

double PdMatrix::logdet() const {
  const Matrix& l = llt_.matrixLLT();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
  return 2.0 * acc;
}

Matrix PdMatrix::inverse() const {
  return symmetrize(llt_.solve(Matrix::Identity(m_.rows(), m_.cols())));
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Matrix commutation(int p, int q) {
  if (p < 1 || q < 1) throw InvalidArgument("commutation matrix needs positive dimensions");
  Matrix k = Matrix::Zero(p * q, p * q);
  // M(i,j) sits at i + j*p in vec(M) and at j + i*q in vec(M').
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < q; ++j) k(j + i * q, i + j * p) = 1.0;
  }
  return k;
}

Matrix pinv_sym(const Matrix& s, double rel_tol) {
  if (s.size() == 0) return s;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(s));
  const Vector& vals = eig.eigenvalues();
  const double cutoff = rel_tol * vals.cwiseAbs().maxCoeff();
  Vector inv = Vector::Zero(vals.size());
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (std::abs(vals(i)) > cutoff) inv(i) = 1.0 / vals(i);
  }
  return symmetrize(eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose());
}

Matrix project(const Matrix& b) {
  if (b.cols() == 0) return Matrix::Zero(b.rows(), b.rows());
  if (b.norm() == 0.0) return Matrix::Zero(b.rows(), b.rows());
  return symmetrize(b * pinv_sym(b.transpose() * b) * b.transpose());
}

SemiOrthoBasis complete_basis(const SemiOrthoBasis& l) {
  const Eigen::Index r = l.ambient();
  const Eigen::Index u = l.dim();
  if (u == r) return SemiOrthoBasis::empty(r);
  if (u == 0) return SemiOrthoBasis::identity(r);
  Eigen::HouseholderQR<Matrix> qr(l.matrix());
  const Matrix q = qr.householderQ();
  Matrix l0 = q.rightCols(r - u);
  // Remove round-off leakage onto span(l), then re-orthonormalize.
  l0 -= l.matrix() * (l.matrix().transpose() * l0);
  return SemiOrthoBasis::orthonormalize(l0);
}

double logdet_pd(const Matrix& s) { return PdMatrix(s).logdet(); }

Matrix inverse_pd(const Matrix& s) { return PdMatrix(s).inverse(); }

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) throw InvalidArgument("unvec: length does not match shape");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Vector vech(const Matrix& s, double tol) {
  if (s.rows() != s.cols()) throw InvalidArgument("vech needs a square matrix");
  if (max_abs(s - s.transpose()) > tol * std::max(1.0, max_abs(s))) {
    throw InvalidArgument("vech needs a symmetric matrix");
  }
  const Eigen::Index k = s.rows();
  Vector out(k * (k + 1) / 2);
  Eigen::Index pos = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = j; i < k; ++i) out(pos++) = s(i, j);
  }
  return out;
}

Matrix unvech(const Vector& v, Eigen::Index k) {
  if (v.size() != k * (k + 1) / 2) throw InvalidArgument("unvech: length does not match size");
  Matrix s(k, k);
  Eigen::Index pos = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = j; i < k; ++i) {
      s(i, j) = v(pos);
      s(j, i) = v(pos);
      ++pos;
    }
  }
  return s;
}

Matrix duplication(int k) {
  Matrix d = Matrix::Zero(k * k, k * (k + 1) / 2);
  int pos = 0;
  for (int j = 0; j < k; ++j) {
    for (int i = j; i < k; ++i) {
      d(i + j * k, pos) = 1.0;
      d(j + i * k, pos) = 1.0;
      ++pos;
    }
  }
  return d;
}

}  // namespace matenv

#pragma once

// Dense linear-algebra helpers for matrix-variate statistics.
//
// All functions are pure; vec/vech use column-major order throughout.

#include <Eigen/Dense>

namespace matenv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tall matrix with orthonormal columns. A basis with zero columns stands for
/// the trivial subspace.
class SemiOrthoBasis {
 public:
  SemiOrthoBasis() = default;

  /// Validates GᵀG = I within `tol`; throws InvalidArgument otherwise.
  explicit SemiOrthoBasis(Matrix basis, double tol = 1e-8);

  /// Orthonormal basis for span(a) via Householder QR. `a` must have full column rank.
  static SemiOrthoBasis orthonormalize(const Matrix& a);
  static SemiOrthoBasis empty(Eigen::Index ambient);
  static SemiOrthoBasis identity(Eigen::Index ambient);

  const Matrix& matrix() const noexcept { return basis_; }
  Eigen::Index ambient() const noexcept { return basis_.rows(); }
  Eigen::Index dim() const noexcept { return basis_.cols(); }
  Matrix projection() const { return basis_ * basis_.transpose(); }

 private:
  struct Unchecked {};
  SemiOrthoBasis(Matrix basis, Unchecked) : basis_(std::move(basis)) {}
  Matrix basis_;
};

/// Symmetric positive-definite matrix with its Cholesky factor cached.
class PdMatrix {
 public:
  PdMatrix() = default;

  /// Throws InvalidArgument when asymmetric beyond 1e-12 (relative) and
  /// DefinitenessError when the Cholesky factorization fails.
  explicit PdMatrix(Matrix m);

  const Matrix& matrix() const noexcept { return m_; }
  Eigen::Index size() const noexcept { return m_.rows(); }
  Matrix lower() const { return llt_.matrixL(); }
  double logdet() const;
  Matrix inverse() const;
  Matrix solve(const Matrix& rhs) const { return llt_.solve(rhs); }

 private:
  Matrix m_;
  Eigen::LLT<Matrix> llt_;
};

Matrix kron(const Matrix& a, const Matrix& b);

/// K_{pq}: the pq×pq permutation with K·vec(M) = vec(Mᵀ) for every p×q matrix M.
Matrix commutation(int p, int q);

/// Orthogonal projection onto span(b): B (BᵀB)† Bᵀ.
Matrix project(const Matrix& b);

/// Moore–Penrose inverse of a symmetric matrix via eigendecomposition.
/// Eigenvalues below rel_tol·max|λ| are treated as zero.
Matrix pinv_sym(const Matrix& s, double rel_tol = 1e-12);

/// Orthonormal basis of the orthogonal complement of span(l).
SemiOrthoBasis complete_basis(const SemiOrthoBasis& l);

double logdet_pd(const Matrix& s);

/// Inverse of a positive-definite matrix through its Cholesky factor.
Matrix inverse_pd(const Matrix& s);

Vector vec(const Matrix& m);
Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols);

/// Lower-triangular entries, column-major; length k(k+1)/2. Rejects asymmetric input.
Vector vech(const Matrix& s, double tol = 1e-10);
Matrix unvech(const Vector& v, Eigen::Index k);

/// Duplication matrix D_k with D_k·vech(S) = vec(S).
Matrix duplication(int k);

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace matenv

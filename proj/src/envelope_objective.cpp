#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "matenv/envelope.hpp"
#include "matenv/errors.hpp"
#include "matenv/random.hpp"
#include "optim.hpp"

namespace matenv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Problem {
  Matrix s;  // S_res
  Matrix t;  // S_Y⁻¹
};

// log|A| for a symmetric matrix, +∞ when it is not numerically positive definite.
double logdet_or_inf(const Matrix& a, Eigen::LLT<Matrix>& llt) {
  llt.compute(symmetrize(a));
  if (llt.info() != Eigen::Success) return kInf;
  double out = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double d = llt.matrixLLT()(i, i);
    if (!(d > 0.0)) return kInf;
    out += 2.0 * std::log(d);
  }
  return out;
}

// f on span(g) with the gram correction; fills the Euclidean gradient of the first two terms.
double span_value(const Problem& p, const Matrix& g, Matrix* grad_terms) {
  Eigen::LLT<Matrix> a, b, c;
  const Matrix sg = p.s * g;
  const Matrix tg = p.t * g;
  const double v = logdet_or_inf(g.transpose() * sg, a) + logdet_or_inf(g.transpose() * tg, b) -
                   2.0 * logdet_or_inf(g.transpose() * g, c);
  if (!std::isfinite(v)) return kInf;
  if (grad_terms) *grad_terms = 2.0 * sg * a.solve(Matrix::Identity(g.cols(), g.cols())) +
                                2.0 * tg * b.solve(Matrix::Identity(g.cols(), g.cols()));
  return v;
}

// Optimizes the last s columns of G = [F, Q0·C] where C (q×s) has identity rows at
// `id` and free rows A elsewhere. Returns the orthonormalized block Q0·C.
struct BlockProblem {
  const Problem& p;
  Matrix fixed;  // r×k, orthonormal
  Matrix q0;     // r×q, orthonormal, q0ᵀ·fixed = 0
  std::vector<Eigen::Index> id, free_rows;
  Eigen::Index s = 0;

  Matrix c_of(const Vector& a) const {
    Matrix c(q0.cols(), s);
    for (Eigen::Index j = 0; j < s; ++j) {
      c.row(id[static_cast<std::size_t>(j)]) = Eigen::RowVectorXd::Unit(s, j);
    }
    for (std::size_t i = 0; i < free_rows.size(); ++i) {
      for (Eigen::Index j = 0; j < s; ++j) {
        c(free_rows[i], j) = a(static_cast<Eigen::Index>(i) + j * static_cast<Eigen::Index>(free_rows.size()));
      }
    }
    return c;
  }

  Matrix full(const Matrix& c) const {
    Matrix g(q0.rows(), fixed.cols() + s);
    g << fixed, q0 * c;
    return g;
  }

  double operator()(const Vector& a, Vector& grad) const {
    const Matrix c = c_of(a);
    const Matrix g = full(c);
    Matrix d;
    const double v = span_value(p, g, &d);
    grad = Vector::Zero(a.size());
    if (!std::isfinite(v)) return kInf;
    Eigen::LLT<Matrix> ctc(c.transpose() * c);
    const Matrix gc = q0.transpose() * d.rightCols(s) - 4.0 * c * ctc.solve(Matrix::Identity(s, s));
    const auto nf = static_cast<Eigen::Index>(free_rows.size());
    for (Eigen::Index i = 0; i < nf; ++i) {
      for (Eigen::Index j = 0; j < s; ++j) grad(i + j * nf) = gc(free_rows[static_cast<std::size_t>(i)], j);
    }
    return v;
  }
};

Matrix orthonormal_columns(const Matrix& a) {
  return SemiOrthoBasis::orthonormalize(a).matrix();
}

Matrix complement_of(const Matrix& g, Eigen::Index r) {
  if (g.cols() == 0) return Matrix::Identity(r, r);
  return complete_basis(SemiOrthoBasis(g, 1e-6)).matrix();
}

// Refines the s columns spanned by q0·w0 with `fixed` held; returns the orthonormal block.
Matrix optimize_block(const Problem& p, const Matrix& fixed, const Matrix& q0, const Matrix& w0,
                      int max_iter) {
  const Eigen::Index q = q0.cols();
  const Eigen::Index s = w0.cols();
  if (s == q) return q0;
  BlockProblem bp{p, fixed, q0, {}, {}, s};
  Eigen::ColPivHouseholderQR<Matrix> qr(w0.transpose());
  const auto& perm = qr.colsPermutation().indices();
  std::vector<bool> is_id(static_cast<std::size_t>(q), false);
  for (Eigen::Index j = 0; j < s; ++j) {
    bp.id.push_back(perm(j));
    is_id[static_cast<std::size_t>(perm(j))] = true;
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    if (!is_id[static_cast<std::size_t>(i)]) bp.free_rows.push_back(i);
  }
  Matrix top(s, s);
  for (Eigen::Index j = 0; j < s; ++j) top.row(j) = w0.row(bp.id[static_cast<std::size_t>(j)]);
  const Matrix c0 = w0 * top.inverse();
  const auto nf = static_cast<Eigen::Index>(bp.free_rows.size());
  Vector a0(nf * s);
  for (Eigen::Index i = 0; i < nf; ++i) {
    for (Eigen::Index j = 0; j < s; ++j) a0(i + j * nf) = c0(bp.free_rows[static_cast<std::size_t>(i)], j);
  }
  detail::BfgsOptions bo;
  bo.max_iter = max_iter;
  const auto res = detail::bfgs_minimize(
      [&bp](const Vector& a, Vector& g) { return bp(a, g); }, a0, bo);
  return orthonormal_columns(q0 * bp.c_of(res.x));
}

double value_of(const Problem& p, const Matrix& g) { return span_value(p, g, nullptr); }

Matrix polish(const Problem& p, const Matrix& g0, int max_iter) {
  const Eigen::Index r = g0.rows();
  return optimize_block(p, Matrix(r, 0), Matrix::Identity(r, r), g0, max_iter);
}

Matrix column_sweep(const Problem& p, const Matrix& g0, int max_iter) {
  const Eigen::Index r = g0.rows();
  Matrix g(r, 0);
  for (Eigen::Index k = 0; k < g0.cols(); ++k) {
    const Matrix q0 = complement_of(g, r);
    Vector w0 = q0.transpose() * g0.col(k);
    if (w0.norm() < 1e-8) w0 = Vector::Unit(q0.cols(), 0);
    const Matrix col = optimize_block(p, g, q0, w0, max_iter);
    Matrix next(r, k + 1);
    next << g, col;
    g = std::move(next);
  }
  return polish(p, g, max_iter);
}

// u eigenvectors of `m` with the smallest one-dimensional objective values.
Matrix eigen_start(const Problem& p, const Matrix& m, int u) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const Matrix& v = es.eigenvectors();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.cols()));
  std::vector<double> vals(order.size());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    order[static_cast<std::size_t>(j)] = j;
    vals[static_cast<std::size_t>(j)] = value_of(p, v.col(j));
  }
  std::stable_sort(order.begin(), order.end(),
                   [&vals](Eigen::Index a, Eigen::Index b) {
                     return vals[static_cast<std::size_t>(a)] < vals[static_cast<std::size_t>(b)];
                   });
  Matrix g(v.rows(), u);
  for (int j = 0; j < u; ++j) g.col(j) = v.col(order[static_cast<std::size_t>(j)]);
  return g;
}

}  // namespace

double envelope_objective(const SemiOrthoBasis& g, const PdMatrix& s_res, const PdMatrix& s_y) {
  if (g.dim() == 0) throw InvalidArgument("envelope_objective is undefined for u = 0");
  if (g.ambient() != s_res.size() || g.ambient() != s_y.size()) {
    throw DimensionError("envelope_objective: basis and covariance dimensions differ");
  }
  const Matrix& m = g.matrix();
  return logdet_pd(symmetrize(m.transpose() * s_res.matrix() * m)) +
         logdet_pd(symmetrize(m.transpose() * s_y.solve(m)));
}

double envelope_objective(const Matrix& g, const PdMatrix& s_res, const PdMatrix& s_y) {
  if (g.cols() == 0) throw InvalidArgument("envelope_objective is undefined for u = 0");
  if (g.rows() != s_res.size() || g.rows() != s_y.size()) {
    throw DimensionError("envelope_objective: basis and covariance dimensions differ");
  }
  const Problem p{s_res.matrix(), s_y.inverse()};
  const double v = value_of(p, g);
  if (!std::isfinite(v)) throw InvalidArgument("envelope_objective: G must have full column rank");
  return v;
}

Matrix envelope_gradient(const SemiOrthoBasis& g, const PdMatrix& s_res, const PdMatrix& s_y,
                         bool projected) {
  if (g.dim() == 0) throw InvalidArgument("envelope_gradient is undefined for u = 0");
  const Matrix& m = g.matrix();
  const Matrix sg = s_res.matrix() * m;
  const Matrix tg = s_y.solve(m);
  const Matrix grad = 2.0 * sg * inverse_pd(symmetrize(m.transpose() * sg)) +
                      2.0 * tg * inverse_pd(symmetrize(m.transpose() * tg));
  if (!projected) return grad;
  return grad - m * (m.transpose() * grad);
}

MinimizerResult minimize_envelope_objective(const PdMatrix& s_res, const PdMatrix& s_y, int u,
                                            const MinimizerOptions& opts) {
  const Eigen::Index r = s_res.size();
  if (s_y.size() != r) throw DimensionError("minimize_envelope_objective: S_res and S_Y differ in size");
  if (u < 0 || u > r) throw InvalidArgument("minimize_envelope_objective: u out of range");
  MinimizerResult out;
  if (u == 0) {
    out.basis = SemiOrthoBasis::empty(r);
    return out;
  }
  const Problem p{s_res.matrix(), s_y.inverse()};
  if (u == r) {
    out.basis = SemiOrthoBasis::identity(r);
    out.value = value_of(p, out.basis.matrix());
    out.best_start_value = out.value;
    out.starts = 1;
    return out;
  }

  std::vector<Matrix> starts;
  if (opts.warm_start) {
    if (opts.warm_start->rows() != r || opts.warm_start->cols() != u) {
      throw DimensionError("minimize_envelope_objective: warm start has the wrong shape");
    }
    starts.push_back(orthonormal_columns(*opts.warm_start));
  }
  if (opts.eigen_starts) {
    starts.push_back(eigen_start(p, p.s, u));
    starts.push_back(eigen_start(p, s_y.matrix(), u));
  }
  for (int k = 0; k < opts.random_starts; ++k) {
    Rng rng(derive_seed(opts.seed, {static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(k)}));
    starts.push_back(orthonormal_columns(standard_normal(r, u, rng)));
  }
  if (starts.empty()) throw InvalidArgument("minimize_envelope_objective: no starting values requested");

  out.value = kInf;
  out.best_start_value = kInf;
  Matrix best;
  for (const Matrix& g0 : starts) {
    const double v0 = value_of(p, g0);
    if (v0 < out.best_start_value) out.best_start_value = v0;
    if (v0 < out.value) {
      out.value = v0;
      best = g0;
    }
    for (const Matrix& cand : {polish(p, g0, opts.max_iter), column_sweep(p, g0, opts.max_iter)}) {
      const double v = value_of(p, cand);
      if (v < out.value) {
        out.value = v;
        best = cand;
      }
    }
  }
  out.starts = static_cast<int>(starts.size());
  if (!std::isfinite(out.value)) throw FitFailure("envelope objective is not finite at any start");
  out.improved = out.value < out.best_start_value;
  out.basis = SemiOrthoBasis(best, 1e-8);
  return out;
}

}  // namespace matenv

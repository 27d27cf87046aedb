#include <cmath>
#include <limits>

#include "doctest.h"
#include "matenv/errors.hpp"
#include "matenv/simlab.hpp"
#include "matenv/sparse.hpp"
#include "support.hpp"

using namespace matenv;

namespace {

MatrixDataset planted_data(int n, std::uint64_t seed) {
  SimSpec spec;
  spec.inactive_rows = {1, 3};
  const SimTruth truth = make_truth(spec);
  return gen_sim_dataset(spec, truth, n, seed);
}

}  // namespace

TEST_CASE("adaptive row weights") {
  Matrix a(3, 2);
  a << 1, 0, 0, 2, 0, -4;
  const Vector w = row_weights(a);
  CHECK(w(0) == doctest::Approx(1.0));
  CHECK(w(1) == doctest::Approx(0.5));
  CHECK(w(2) == doctest::Approx(0.25));

  const Matrix equal = Matrix::Constant(4, 1, 2.0);
  CHECK((row_weights(equal).array() == 0.5).all());
  CHECK(row_weights(equal, 2.0)(0) == doctest::Approx(0.25));

  Matrix z = Matrix::Ones(2, 2);
  z.row(1).setZero();
  CHECK(std::isinf(row_weights(z)(1)));
}

TEST_CASE("penalized bilinear without penalty is the MLE") {
  const auto truth = testing::random_truth(4, 3, 2, 2, 1.0, 100);
  const MatrixDataset data = testing::bilinear_data(truth, 80, 101);
  const SparseFit fit = penalized_bilinear(data, 0.0, 0.0);
  CHECK((fit.bilinear->kron_coef() - fit_bilinear(data).kron_coef()).norm() < 1e-6);
  CHECK_THROWS_AS(penalized_bilinear(data, -1.0, 0.0), InvalidArgument);
}

TEST_CASE("penalized bilinear sweeps") {
  const MatrixDataset data = planted_data(300, 102);
  for (double lambda : {0.05, 0.2, 1.0}) {
    const SparseFit fit = penalized_bilinear(data, lambda, lambda);
    for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
      CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] + 1e-8);
    }
    const Matrix& b1 = fit.beta1();
    for (Eigen::Index i = 0; i < b1.rows(); ++i) {
      const bool active = std::find(fit.active_rows.begin(), fit.active_rows.end(), i) != fit.active_rows.end();
      if (!active) CHECK((b1.row(i).array() == 0.0).all());
      else CHECK(b1.row(i).norm() > 0.0);
    }
  }
  const SparseFit huge = penalized_bilinear(data, 1e8, 0.0);
  CHECK(huge.beta1().norm() == 0.0);
  CHECK(huge.active_rows.empty());
}

TEST_CASE("penalized bilinear approaches the MLE as the penalty vanishes") {
  const MatrixDataset data = planted_data(200, 103);
  SparseOptions opts;
  opts.envelope.bilinear.tol = 1e-14;
  opts.envelope.bilinear.max_iter = 5000;
  opts.tol = 1e-14;
  opts.max_iter = 5000;
  const Matrix mle = fit_bilinear(data, opts.envelope.bilinear).kron_coef();
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {1e-2, 1e-4, 1e-6}) {
    const double gap =
        (penalized_bilinear(data, lambda, lambda, std::nullopt, opts).bilinear->kron_coef() - mle).norm();
    CHECK(gap <= prev + 1e-9);
    prev = gap;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("sparse envelope without penalty is the envelope MLE") {
  const MatrixDataset data = planted_data(200, 104);
  const EnvelopeFit env = fit_envelope(data, 2, 2);
  const SparseFit fit = sparse_envelope(data, 2, 2, 0.0, 0.0);
  CHECK(std::abs(fit.loglik() - env.loglik) < 1e-6);
}

TEST_CASE("sparse envelope keeps orthonormal bases and exact zero rows") {
  const MatrixDataset data = planted_data(300, 105);
  const SparseFit fit = sparse_envelope(data, 2, 2, 0.5, 0.0);
  const Matrix& l = fit.envelope->L.matrix();
  CHECK((l.transpose() * l - Matrix::Identity(2, 2)).norm() < 1e-8);
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    const bool active = std::find(fit.active_rows.begin(), fit.active_rows.end(), i) != fit.active_rows.end();
    if (!active) {
      CHECK((l.row(i).array() == 0.0).all());
      CHECK((fit.beta1().row(i).array() == 0.0).all());
    }
  }
  AdaptiveWeights one_row{Vector::Constant(5, std::numeric_limits<double>::infinity()), Vector::Ones(5)};
  one_row.w1(0) = 1.0;
  CHECK_THROWS_AS(sparse_envelope(data, 2, 2, 1.0, 0.0, one_row), FitFailure);

  const SparseFit heavy = sparse_envelope(data, 2, 2, 1e8, 0.0);
  CHECK(heavy.active_rows.size() >= 2);
  CHECK((heavy.envelope->L.matrix().transpose() * heavy.envelope->L.matrix() - Matrix::Identity(2, 2)).norm() < 1e-8);
}

TEST_CASE("sparse envelope below the activation threshold keeps the envelope span") {
  const MatrixDataset data = planted_data(300, 106);
  const EnvelopeFit env = fit_envelope(data, 2, 2);
  AdaptiveWeights w{Vector::Ones(5), Vector::Ones(5)};
  const SparseFit fit = sparse_envelope(data, 2, 2, 1e-6, 1e-6, w);
  CHECK(testing::subspace_gap(fit.envelope->L.matrix(), env.L.matrix()) < 1e-3);
  CHECK(testing::subspace_gap(fit.envelope->R.matrix(), env.R.matrix()) < 1e-3);
}

TEST_CASE("lambda selection") {
  const MatrixDataset data = planted_data(300, 107);
  const LambdaSelection zero = select_lambda(data, {{0.0, 0.0}});
  CHECK(zero.lambda1 == 0.0);
  CHECK(zero.lambda2 == 0.0);
  REQUIRE(zero.best.has_value());

  const LambdaSelection sel = select_lambda(data, {{0.0, 0.0}, {0.1, 0.1}, {1.0, 1.0}, {1e8, 1e8}});
  CHECK(sel.table.size() == 4);
  for (const auto& c : sel.table) {
    if (!c.ok) continue;
    CHECK(c.df == c.active_rows * 5 + c.active_cols * 5);
    CHECK(c.score == doctest::Approx(-2 * c.loglik + std::log(300.0) * c.df));
  }
  CHECK_THROWS_AS(select_lambda(data, {{-1.0, 0.0}}), InvalidArgument);
}

TEST_CASE("selected penalty recovers the planted support at least as often as no penalty") {
  int selected_hits = 0, zero_hits = 0;
  const std::vector<int> truth{0, 2, 4};
  for (int rep = 0; rep < 5; ++rep) {
    const MatrixDataset data = planted_data(500, derive_seed(108, {static_cast<std::uint64_t>(rep)}));
    const LambdaSelection sel = select_lambda(data, {{0.0, 0.0}, {0.02, 0.02}, {0.05, 0.05}, {0.1, 0.1}, {0.2, 0.2}});
    if (sel.best->active_rows == truth) ++selected_hits;
    if (penalized_bilinear(data, 0.0, 0.0).active_rows == truth) ++zero_hits;
  }
  CHECK(selected_hits >= zero_hits);
}

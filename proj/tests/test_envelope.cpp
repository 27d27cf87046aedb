#include <cmath>
#include <limits>

#include "doctest.h"
#include "matenv/bilinear.hpp"
#include "matenv/envelope.hpp"
#include "matenv/errors.hpp"
#include "matenv/matnorm.hpp"
#include "matenv/simlab.hpp"
#include "support.hpp"

using namespace matenv;

namespace {

double f_extended(const Matrix& g, const Matrix& s, const Matrix& t) {
  return logdet_pd(g.transpose() * s * g) + logdet_pd(g.transpose() * t * g);
}

// Independent flip-flop for the no-predictor matrix normal model, with its log-likelihood.
double null_model_loglik(const MatrixDataset& data) {
  const Matrix mu = data.y_mean();
  const auto n = static_cast<double>(data.n());
  const double r = static_cast<double>(data.r), m = static_cast<double>(data.m);
  Matrix s1 = Matrix::Identity(data.r, data.r), s2 = Matrix::Identity(data.m, data.m);
  for (int it = 0; it < 5000; ++it) {
    Matrix a = Matrix::Zero(data.r, data.r);
    const Matrix s2i = s2.inverse();
    for (const auto& u : data.units) a += (u.y - mu) * s2i * (u.y - mu).transpose();
    s1 = a / (n * m);
    Matrix b = Matrix::Zero(data.m, data.m);
    const Matrix s1i = s1.inverse();
    for (const auto& u : data.units) b += (u.y - mu).transpose() * s1i * (u.y - mu);
    const Matrix next = b / (n * r);
    const double change = (next - s2).norm();
    s2 = next;
    if (change < 1e-14) break;
  }
  double ll = 0.0;
  const Matrix sigma = kron(s2, s1);
  for (const auto& u : data.units) ll += testing::dense_mvn_logpdf(vec(u.y), vec(mu), sigma);
  return ll;
}

struct ScalarTruth {
  Matrix mu, beta, sigma1, sigma2;
};

MatrixDataset two_group_data(const ScalarTruth& t, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Unit> units;
  const Matrix zero = Matrix::Zero(t.mu.rows(), t.mu.cols());
  for (int i = 0; i < n; ++i) {
    const double x = i % 2 == 0 ? 1.0 : 0.0;
    const Matrix e = matnorm_sample(zero, PdMatrix(t.sigma1), PdMatrix(t.sigma2), 1, rng).front();
    units.push_back({t.mu + x * t.beta + e, Matrix::Constant(1, 1, x)});
  }
  return MatrixDataset(std::move(units));
}

Matrix envelope_cov(const Matrix& g, double material, double immaterial) {
  const Matrix p = g * g.transpose();
  return material * p + immaterial * (Matrix::Identity(p.rows(), p.rows()) - p);
}

}  // namespace

TEST_CASE("envelope objective examples") {
  Rng rng(70);
  const PdMatrix id(Matrix::Identity(4, 4));
  for (int trial = 0; trial < 5; ++trial) {
    CHECK(std::abs(envelope_objective(SemiOrthoBasis(testing::random_semi_ortho(4, 2, rng)), id, id)) < 1e-12);
  }
  Matrix s(2, 2), y(2, 2), e1(2, 1);
  s << 1, 0, 0, 4;
  y << 2, 0, 0, 5;
  e1 << 1, 0;
  CHECK(envelope_objective(SemiOrthoBasis(e1), PdMatrix(s), PdMatrix(y)) ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("envelope objective invariances") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const PdMatrix s(testing::random_pd(5, rng)), y(testing::random_pd(5, rng));
    const Matrix g = testing::random_semi_ortho(5, 3, rng);
    const Matrix o = testing::random_orthogonal(3, rng);
    const double f = envelope_objective(SemiOrthoBasis(g), s, y);
    CHECK(std::abs(f - envelope_objective(SemiOrthoBasis(g * o), s, y)) < 1e-10);
    const Matrix a = standard_normal(3, 3, rng) + 3.0 * Matrix::Identity(3, 3);
    CHECK(std::abs(f - envelope_objective(Matrix(g * a), s, y)) < 1e-9);
  }
}

TEST_CASE("envelope gradient matches central differences") {
  Rng rng(72);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix sm = testing::random_pd(5, rng), ym = testing::random_pd(5, rng);
    const PdMatrix s(sm), y(ym);
    const Matrix t = ym.inverse();
    const int u = 1 + trial % 3;
    const Matrix g = testing::random_semi_ortho(5, u, rng);
    const SemiOrthoBasis gb(g);
    const Matrix full = envelope_gradient(gb, s, y, false);
    const Matrix proj = envelope_gradient(gb, s, y, true);
    Matrix fd_full(5, u), fd_span(5, u);
    const double h = 1e-6;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < u; ++j) {
        Matrix gp = g, gm = g;
        gp(i, j) += h;
        gm(i, j) -= h;
        fd_full(i, j) = (f_extended(gp, sm, t) - f_extended(gm, sm, t)) / (2 * h);
        fd_span(i, j) = (envelope_objective(gp, s, y) - envelope_objective(gm, s, y)) / (2 * h);
      }
    }
    CHECK((full - fd_full).norm() / fd_full.norm() < 1e-5);
    CHECK((proj - fd_span).norm() / std::max(fd_span.norm(), 1e-3) < 1e-5);
  }
}

TEST_CASE("minimizer at full dimension") {
  Rng rng(73);
  const Matrix sm = testing::random_pd(4, rng), ym = testing::random_pd(4, rng);
  const MinimizerResult res = minimize_envelope_objective(PdMatrix(sm), PdMatrix(ym), 4);
  CHECK(std::abs(res.value - (logdet_pd(sm) - logdet_pd(ym))) < 1e-10);
  CHECK((res.basis.projection() - Matrix::Identity(4, 4)).norm() < 1e-10);
}

TEST_CASE("minimizer finds the best axis on a commuting diagonal case") {
  Matrix s = Matrix::Zero(3, 3), y = Matrix::Zero(3, 3);
  s.diagonal() << 0.5, 2, 3;
  y.diagonal() << 3, 2, 1;
  const MinimizerResult res = minimize_envelope_objective(PdMatrix(s), PdMatrix(y), 1);
  int best = 0;
  double best_f = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double f = std::log(s(i, i)) - std::log(y(i, i));
    if (f < best_f) {
      best_f = f;
      best = i;
    }
  }
  const Matrix axis = Matrix::Identity(3, 3).col(best);
  CHECK(testing::subspace_gap(res.basis.matrix(), axis) < 1e-6);
  CHECK(res.value == doctest::Approx(best_f).epsilon(1e-10));
}

TEST_CASE("minimizer beats random probes") {
  Rng rng(74);
  for (int trial = 0; trial < 3; ++trial) {
    const PdMatrix s(testing::random_pd(4, rng)), y(testing::random_pd(4, rng));
    MinimizerOptions opts;
    opts.seed = 1000 + trial;
    const MinimizerResult res = minimize_envelope_objective(s, y, 2, opts);
    double probe = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 500; ++k) {
      probe = std::min(probe, envelope_objective(SemiOrthoBasis(testing::random_semi_ortho(4, 2, rng)), s, y));
    }
    CHECK(res.value <= probe + 1e-12);
    CHECK(res.value <= res.best_start_value + 1e-12);
    CHECK((res.basis.matrix().transpose() * res.basis.matrix() - Matrix::Identity(2, 2)).norm() < 1e-10);
  }
  CHECK_THROWS_AS(minimize_envelope_objective(PdMatrix(Matrix::Identity(3, 3)), PdMatrix(Matrix::Identity(3, 3)), 4),
                  InvalidArgument);
}

TEST_CASE("envelope at full dimensions equals the bilinear fit") {
  const auto truth = testing::random_truth(3, 4, 2, 2, 1.0, 80);
  const MatrixDataset data = testing::bilinear_data(truth, 60, 81);
  const BilinearFit bil = fit_bilinear(data);
  const EnvelopeFit env = fit_envelope(data, 3, 4);
  CHECK((env.kron_coef() - bil.kron_coef()).norm() <= 1e-6);
  CHECK(std::abs(env.loglik - bil.loglik) <= 1e-6);
}

TEST_CASE("envelope fit structure") {
  SimSpec spec;
  const SimTruth truth = make_truth(spec);
  for (int rep = 0; rep < 3; ++rep) {
    const MatrixDataset data = gen_sim_dataset(spec, truth, 200, replicate_seed(spec, 200, rep));
    const EnvelopeFit fit = fit_envelope(data, 2, 2);
    const Matrix ql = Matrix::Identity(5, 5) - fit.L.projection();
    const Matrix qr = Matrix::Identity(5, 5) - fit.R.projection();
    CHECK((ql * fit.beta1).norm() < 1e-8);
    CHECK((qr * fit.beta2).norm() < 1e-8);
    CHECK((fit.L.projection() * fit.sigma1.matrix() * ql).norm() < 1e-8);
    CHECK((fit.R.projection() * fit.sigma2.matrix() * qr).norm() < 1e-8);
    CHECK(testing::nondecreasing(fit.loglik_trace, 1e-8));
    CHECK(std::abs(fit.beta2.norm() - 1.0) < 1e-8);
    CHECK(std::abs(fit.sigma2.matrix().norm() - 1.0) < 1e-8);

    const double ll11 = fit_envelope(data, 1, 1).loglik;
    const double ll55 = fit_bilinear(data).loglik;
    CHECK(ll11 <= fit.loglik + 1e-6);
    CHECK(fit.loglik <= ll55 + 1e-6);
  }
}

TEST_CASE("envelope null model") {
  const auto truth = testing::random_truth(3, 2, 2, 1, 1.0, 82);
  const MatrixDataset data = testing::bilinear_data(truth, 40, 83);
  const EnvelopeFit fit = fit_envelope(data, 0, 0);
  CHECK(fit.beta1.norm() == 0.0);
  CHECK(fit.beta2.norm() == 0.0);
  CHECK(std::abs(fit.loglik - null_model_loglik(data)) < 1e-6);
  CHECK(fit_envelope(data, 0, 2).beta1.norm() == 0.0);
}

TEST_CASE("envelope beats bilinear on envelope data") {
  SimSpec spec;
  spec.reps = 10;
  spec.n_list = {500};
  spec.models = {ModelKind::bilinear, ModelKind::envelope};
  const auto rows = run_comparison(spec);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].mean_error < rows[0].mean_error);
}

TEST_CASE("scalar-predictor envelope at full dimensions is the group-mean difference") {
  Rng rng(84);
  ScalarTruth t{standard_normal(4, 3, rng), standard_normal(4, 3, rng), testing::random_pd(4, rng),
                testing::random_pd(3, rng)};
  const MatrixDataset data = two_group_data(t, 30, 85);
  Matrix ya = Matrix::Zero(4, 3), yc = Matrix::Zero(4, 3);
  int na = 0, nc = 0;
  for (const auto& u : data.units) {
    if (u.x(0, 0) == 1.0) {
      ya += u.y;
      ++na;
    } else {
      yc += u.y;
      ++nc;
    }
  }
  const Matrix diff = ya / na - yc / nc;
  const ScalarEnvelopeFit fit = fit_envelope_scalarX(data, 4, 3);
  CHECK((fit.beta - diff).norm() < 1e-10);

  const ScalarEnvelopeFit low = fit_envelope_scalarX(data, 2, 1);
  CHECK(((Matrix::Identity(4, 4) - low.L.projection()) * low.beta).norm() < 1e-10);
  CHECK((low.beta * (Matrix::Identity(3, 3) - low.R.projection())).norm() < 1e-10);
  CHECK(testing::nondecreasing(low.loglik_trace, 1e-8));

  std::vector<Unit> constant;
  for (const auto& u : data.units) constant.push_back({u.y, Matrix::Ones(1, 1)});
  CHECK_THROWS(fit_envelope_scalarX(MatrixDataset(std::move(constant)), 2, 1));
}

TEST_CASE("scalar-predictor envelope improves on the group-mean difference") {
  Rng rng(86);
  const int r = 6, m = 4;
  const Matrix l = testing::random_semi_ortho(r, 2, rng), rr = testing::random_semi_ortho(m, 1, rng);
  ScalarTruth t;
  t.mu = standard_normal(r, m, rng);
  t.beta = l * standard_normal(2, 1, rng) * rr.transpose();
  t.sigma1 = envelope_cov(l, 0.5, 2.5);
  t.sigma2 = envelope_cov(rr, 0.5, 2.5);
  int wins = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const MatrixDataset data = two_group_data(t, 40, derive_seed(87, {static_cast<std::uint64_t>(rep)}));
    const ScalarEnvelopeFit fit = fit_envelope_scalarX(data, 2, 1);
    if ((fit.beta - t.beta).norm() < (fit.beta_full - t.beta).norm()) ++wins;
  }
  CHECK(wins >= 40);
}

TEST_CASE("dimension selection table") {
  SimSpec spec;
  spec.r = spec.m = 3;
  spec.p1 = spec.p2 = 2;
  spec.u1 = spec.u2 = 1;
  const auto [data, truth] = gen_sim_dataset(spec, 300, 90);
  const DimensionSelection sel = select_dims_ic(data, Criterion::bic);
  CHECK(sel.table.size() == 16);
  const BilinearFit bil = fit_bilinear(data);
  for (const auto& cell : sel.table) {
    CHECK(cell.ok);
    if (cell.u1 == 3 && cell.u2 == 3) CHECK(std::abs(cell.loglik - bil.loglik) < 1e-6);
    CHECK(cell.value == doctest::Approx(-2 * cell.loglik + std::log(300.0) * cell.num_params));
  }
  CHECK(sel.u1 >= 0);
  CHECK(sel.u1 <= 3);
  const DimensionSelection aic = select_dims_ic(data, Criterion::aic, {{1, 1}, {2, 2}});
  CHECK(aic.table.size() == 2);
}

TEST_CASE("stepwise dimension search") {
  const auto bowl = [](int a, int b) { return (a - 3) * (a - 3) + 2.0 * (b - 2) * (b - 2); };
  CHECK(select_dims_stepwise(6, 5, bowl) == std::pair{3, 2});
  int best_a = 0, best_b = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a <= 6; ++a) {
    for (int b = 0; b <= 5; ++b) {
      if (bowl(a, b) < best) {
        best = bowl(a, b);
        best_a = a;
        best_b = b;
      }
    }
  }
  CHECK(select_dims_stepwise(6, 5, bowl) == std::pair{best_a, best_b});

  const auto flat_u2 = [](int a, int) { return std::abs(a - 2.0); };
  CHECK(select_dims_stepwise(4, 4, flat_u2) == std::pair{2, 1});

  const auto downhill = [](int a, int b) { return -static_cast<double>(a + b); };
  const auto edge = select_dims_stepwise(3, 2, downhill);
  CHECK(edge == std::pair{3, 2});
}

#include "matenv/inference.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>
#include <random>

#include "matenv/errors.hpp"
#include "matenv/parallel.hpp"
#include "matenv/random.hpp"

namespace matenv {

namespace {

void check_pvalues(const Vector& p) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p(i) >= 0.0 && p(i) <= 1.0)) throw InvalidArgument("p-values must lie in [0, 1]");
  }
}

Vector step_up(const Vector& p, double correction) {
  check_pvalues(p);
  const Eigen::Index k = p.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&p](Eigen::Index a, Eigen::Index b) { return p(a) < p(b); });
  Vector out(k);
  double running = 1.0;
  for (Eigen::Index j = k; j >= 1; --j) {
    const Eigen::Index idx = order[static_cast<std::size_t>(j - 1)];
    const double v = static_cast<double>(k) * correction * p(idx) / static_cast<double>(j);
    running = std::min(running, v);
    out(idx) = std::min(1.0, running);
  }
  return out;
}

InferenceReport finish_report(Vector estimate, Vector se, InferenceMethod method, int b) {
  InferenceReport rep;
  rep.method = method;
  rep.B = b;
  rep.pvalues = normal_pvalues(estimate, se);
  rep.pvalues_fdr = fdr_adjust_by(rep.pvalues);
  rep.neg_log10_fdr = rep.pvalues_fdr.unaryExpr([](double v) { return -std::log10(v); });
  rep.estimate = std::move(estimate);
  rep.se = std::move(se);
  return rep;
}

// Column-wise sample SD with divisor rows − 1.
Vector column_sd(const Matrix& stats) {
  const Eigen::Index b = stats.rows();
  const Eigen::RowVectorXd mean = stats.colwise().mean();
  const Matrix centered = stats.rowwise() - mean;
  return (centered.colwise().squaredNorm() / static_cast<double>(b - 1)).cwiseSqrt().transpose();
}

MatrixDataset resample(const MatrixDataset& data, const FitSummary& base, BootstrapScheme scheme,
                       Rng& rng) {
  const std::size_t n = data.n();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<Unit> units;
  units.reserve(n);
  if (scheme == BootstrapScheme::pairs) {
    for (std::size_t i = 0; i < n; ++i) units.push_back(data.units[pick(rng)]);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = pick(rng);
      units.push_back({base.fitted[i] + (data.units[j].y - base.fitted[j]), data.units[i].x});
    }
  }
  return MatrixDataset(std::move(units));
}

Matrix statistics_from_base(const MatrixDataset& data, const Fitter& fitter, const FitSummary& base,
                            int first_index, int count, const BootstrapOptions& opts, int* failures) {
  if (opts.scheme == BootstrapScheme::residual && base.fitted.size() != data.n()) {
    throw InvalidArgument("residual bootstrap needs fitted values for every unit");
  }
  const Eigen::Index k = base.statistic.size();
  Matrix stats(count, k);
  std::atomic<int> failed{0};
  parallel_for(static_cast<std::size_t>(count), opts.workers, [&](std::size_t row) {
    const auto b = static_cast<std::uint64_t>(first_index) + row;
    for (int attempt = 0; attempt <= opts.max_retries; ++attempt) {
      Rng rng(derive_seed(opts.seed, {b, static_cast<std::uint64_t>(attempt)}));
      try {
        const FitSummary s = fitter(resample(data, base, opts.scheme, rng));
        if (s.statistic.size() != k) throw DimensionError("bootstrap statistic changed length");
        stats.row(static_cast<Eigen::Index>(row)) = s.statistic.transpose();
        return;
      } catch (const Error&) {
        ++failed;
      }
    }
    throw FitFailure("bootstrap replicate " + std::to_string(b) + " failed after " +
                     std::to_string(opts.max_retries + 1) + " attempts");
  });
  if (failures) *failures = failed.load();
  return stats;
}

std::vector<Matrix> bilinear_fitted(const MatrixDataset& data, const Matrix& mu, const Matrix& b1,
                                    const Matrix& b2, const Matrix& x_mean) {
  std::vector<Matrix> out;
  out.reserve(data.n());
  for (const auto& u : data.units) out.push_back(mu + b1 * (u.x - x_mean) * b2.transpose());
  return out;
}

// Central-difference Jacobian of f at x with steps 1e-6·max(1, |x_k|).
template <typename F>
Matrix jacobian(const F& f, const Vector& x) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(k)));
    Vector xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    jac.col(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return jac;
}

Vector h_map(const Matrix& b1, const Matrix& b2, const Matrix& s1, const Matrix& s2) {
  const Vector coef = vec(kron(b2, b1));
  const Vector cov = vech(kron(s2, s1), 1e-8);
  Vector out(coef.size() + cov.size());
  out << coef, cov;
  return out;
}

Matrix avar_from_jacobian(const Matrix& h, const Matrix& j, Eigen::Index coef_dim) {
  const Matrix info = symmetrize(h.transpose() * j * h);
  const Matrix avar = h * pinv_sym(info, 1e-9) * h.transpose();
  return symmetrize(avar.topLeftCorner(coef_dim, coef_dim));
}

Matrix inverse_sqrt(const Matrix& s) {
  if (s.size() == 0) return s;
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  return es.operatorInverseSqrt();
}

Vector stack(std::initializer_list<Vector> parts) {
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  Vector out(total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

Vector vech_or_empty(const Matrix& s) { return s.size() == 0 ? Vector() : vech(s, 1e-8); }
Matrix unvech_or_empty(const Vector& v, Eigen::Index k) { return k == 0 ? Matrix(0, 0) : unvech(v, k); }

InferenceReport asymptotic_report(const Vector& estimate, const Matrix& avar, std::size_t n) {
  Vector se = (avar.diagonal().cwiseMax(0.0) / static_cast<double>(n)).cwiseSqrt();
  return finish_report(estimate, std::move(se), InferenceMethod::asymptotic, 0);
}

}  // namespace

Vector fdr_adjust_by(const Vector& pvalues) {
  double c = 0.0;
  for (Eigen::Index j = 1; j <= pvalues.size(); ++j) c += 1.0 / static_cast<double>(j);
  return step_up(pvalues, c);
}

Vector fdr_adjust_bh(const Vector& pvalues) { return step_up(pvalues, 1.0); }

Vector normal_pvalues(const Vector& estimate, const Vector& se) {
  if (estimate.size() != se.size()) throw DimensionError("normal_pvalues: length mismatch");
  const boost::math::normal dist;
  Vector p(estimate.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (se(i) > 0.0) {
      p(i) = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(estimate(i)) / se(i))));
    } else {
      p(i) = estimate(i) == 0.0 ? 1.0 : 0.0;
    }
  }
  return p;
}

Fitter bilinear_fitter(const BilinearOptions& opts) {
  return [opts](const MatrixDataset& d) {
    const BilinearFit f = fit_bilinear(d, opts);
    return FitSummary{vec(f.kron_coef()), bilinear_fitted(d, f.mu, f.beta1, f.beta2, f.x_mean)};
  };
}

Fitter envelope_fitter(int u1, int u2, const EnvelopeOptions& opts) {
  return [u1, u2, opts](const MatrixDataset& d) {
    const EnvelopeFit f = fit_envelope(d, u1, u2, opts);
    return FitSummary{vec(f.kron_coef()), bilinear_fitted(d, f.mu, f.beta1, f.beta2, f.x_mean)};
  };
}

Fitter vector_fitter() {
  return [](const MatrixDataset& d) {
    const VectorModelFit f = fit_vector_model(d);
    Vector xbar = Vector::Zero(d.p1 * d.p2);
    for (const auto& u : d.units) xbar += vec(u.x);
    xbar /= static_cast<double>(d.n());
    std::vector<Matrix> fitted;
    for (const auto& u : d.units) fitted.push_back(unvec(f.mu + f.nu * (vec(u.x) - xbar), d.r, d.m));
    return FitSummary{vec(f.nu), std::move(fitted)};
  };
}

Matrix bootstrap_statistics(const MatrixDataset& data, const Fitter& fitter, int first_index,
                            int count, const BootstrapOptions& opts, int* failures) {
  if (count < 0 || first_index < 0) throw InvalidArgument("bootstrap_statistics: negative replicate range");
  if (data.n() == 0) throw InvalidArgument("bootstrap_statistics: empty dataset");
  const FitSummary base = fitter(data);
  return statistics_from_base(data, fitter, base, first_index, count, opts, failures);
}

InferenceReport bootstrap_se(const MatrixDataset& data, const Fitter& fitter, const BootstrapOptions& opts) {
  if (opts.B < 2) throw InvalidArgument("bootstrap_se needs B >= 2");
  if (data.n() == 0) throw InvalidArgument("bootstrap_se: empty dataset");
  const FitSummary base = fitter(data);
  int failures = 0;
  const Matrix stats = statistics_from_base(data, fitter, base, 0, opts.B, opts, &failures);
  InferenceReport rep = finish_report(base.statistic, column_sd(stats), InferenceMethod::bootstrap, opts.B);
  rep.failures = failures;
  return rep;
}

Matrix fisher_information(const Matrix& sigma_x, const Matrix& sigma) {
  const Eigen::Index q = sigma_x.rows();
  const Eigen::Index k = sigma.rows();
  const Matrix si = inverse_pd(sigma);
  const Matrix dk = duplication(static_cast<int>(k));
  const Eigen::Index a = q * k, b = k * (k + 1) / 2;
  Matrix j = Matrix::Zero(a + b, a + b);
  j.topLeftCorner(a, a) = kron(sigma_x, si);
  j.bottomRightCorner(b, b) = 0.5 * dk.transpose() * kron(si, si) * dk;
  return symmetrize(j);
}

Matrix avar_vector(const Matrix& sigma_x, const Matrix& sigma) {
  return symmetrize(kron(inverse_pd(sigma_x), sigma));
}

Matrix avar_bilinear(const Matrix& beta1, const Matrix& beta2, const Matrix& sigma1,
                     const Matrix& sigma2, const Matrix& sigma_x) {
  const Eigen::Index r = beta1.rows(), p1 = beta1.cols(), m = beta2.rows(), p2 = beta2.cols();
  if (sigma_x.rows() != p1 * p2) throw DimensionError("avar_bilinear: predictor covariance has the wrong size");
  const Eigen::Index n1 = r * p1, n2 = m * p2, n3 = r * (r + 1) / 2;
  const Vector theta = stack({vec(beta1), vec(beta2), vech(sigma1, 1e-8), vech(sigma2, 1e-8)});
  auto h = [&](const Vector& t) {
    return h_map(unvec(t.segment(0, n1), r, p1), unvec(t.segment(n1, n2), m, p2),
                 unvech(t.segment(n1 + n2, n3), r), unvech(t.tail(m * (m + 1) / 2), m));
  };
  const Matrix hj = jacobian(h, theta);
  const Matrix j = fisher_information(sigma_x, kron(sigma2, sigma1));
  return avar_from_jacobian(hj, j, r * m * p1 * p2);
}

Matrix avar_envelope(const SemiOrthoBasis& l, const SemiOrthoBasis& r, const Matrix& eta1,
                     const Matrix& eta2, const Matrix& omega1, const Matrix& omega10,
                     const Matrix& omega2, const Matrix& omega20, const Matrix& sigma_x) {
  const Eigen::Index rr = l.ambient(), u1 = l.dim(), mm = r.ambient(), u2 = r.dim();
  const Eigen::Index p1 = eta1.cols(), p2 = eta2.cols();
  if (sigma_x.rows() != p1 * p2) throw DimensionError("avar_envelope: predictor covariance has the wrong size");
  const Matrix l0 = complete_basis(l).matrix(), r0 = complete_basis(r).matrix();
  const Eigen::Index s_eta1 = u1 * p1, s_eta2 = u2 * p2;
  const Eigen::Index s_a1 = (rr - u1) * u1, s_a2 = (mm - u2) * u2;
  const Eigen::Index s_o1 = u1 * (u1 + 1) / 2, s_o10 = (rr - u1) * (rr - u1 + 1) / 2;
  const Eigen::Index s_o2 = u2 * (u2 + 1) / 2, s_o20 = (mm - u2) * (mm - u2 + 1) / 2;
  const Vector zeta = stack({vec(eta1), vec(eta2), Vector::Zero(s_a1), Vector::Zero(s_a2),
                            vech_or_empty(omega1), vech_or_empty(omega10), vech_or_empty(omega2),
                            vech_or_empty(omega20)});

  auto side = [](const Matrix& g, const Matrix& g0, const Matrix& a, const Matrix& eta,
                 const Matrix& om, const Matrix& om0, Matrix& beta, Matrix& sigma) {
    const Eigen::Index u = g.cols(), q = g0.cols();
    const Matrix gm = (g + g0 * a) * inverse_sqrt(Matrix::Identity(u, u) + a.transpose() * a);
    const Matrix g0m = (g0 - g * a.transpose()) * inverse_sqrt(Matrix::Identity(q, q) + a * a.transpose());
    beta = gm * eta;
    sigma = gm * om * gm.transpose() + g0m * om0 * g0m.transpose();
  };
  auto phi = [&](const Vector& z) {
    Eigen::Index at = 0;
    auto take = [&](Eigen::Index len) {
      const Vector seg = z.segment(at, len);
      at += len;
      return seg;
    };
    const Matrix e1 = unvec(take(s_eta1), u1, p1), e2 = unvec(take(s_eta2), u2, p2);
    const Matrix a1 = unvec(take(s_a1), rr - u1, u1), a2 = unvec(take(s_a2), mm - u2, u2);
    const Matrix o1 = unvech_or_empty(take(s_o1), u1), o10 = unvech_or_empty(take(s_o10), rr - u1);
    const Matrix o2 = unvech_or_empty(take(s_o2), u2), o20 = unvech_or_empty(take(s_o20), mm - u2);
    Matrix b1, b2, s1, s2;
    side(l.matrix(), l0, a1, e1, o1, o10, b1, s1);
    side(r.matrix(), r0, a2, e2, o2, o20, b2, s2);
    return h_map(b1, b2, symmetrize(s1), symmetrize(s2));
  };
  const Matrix hj = jacobian(phi, zeta);
  Matrix b1, b2, s1, s2;
  side(l.matrix(), l0, Matrix::Zero(rr - u1, u1), eta1, omega1, omega10, b1, s1);
  side(r.matrix(), r0, Matrix::Zero(mm - u2, u2), eta2, omega2, omega20, b2, s2);
  const Matrix j = fisher_information(sigma_x, kron(symmetrize(s2), symmetrize(s1)));
  return avar_from_jacobian(hj, j, rr * mm * p1 * p2);
}

Matrix predictor_covariance(const MatrixDataset& data) {
  if (data.n() == 0) throw InvalidArgument("predictor_covariance: empty dataset");
  const Eigen::Index q = data.p1 * data.p2;
  Vector mean = Vector::Zero(q);
  for (const auto& u : data.units) mean += vec(u.x);
  mean /= static_cast<double>(data.n());
  Matrix s = Matrix::Zero(q, q);
  for (const auto& u : data.units) {
    const Vector c = vec(u.x) - mean;
    s.noalias() += c * c.transpose();
  }
  return symmetrize(s / static_cast<double>(data.n()));
}

InferenceReport asymptotic_se_kron(const BilinearFit& fit, const MatrixDataset& data) {
  const Matrix avar = avar_bilinear(fit.beta1, fit.beta2, fit.sigma1.matrix(), fit.sigma2.matrix(),
                                    predictor_covariance(data));
  return asymptotic_report(vec(fit.kron_coef()), avar, data.n());
}

InferenceReport asymptotic_se_kron(const EnvelopeFit& fit, const MatrixDataset& data) {
  const Matrix avar = avar_envelope(fit.L, fit.R, fit.eta1, fit.eta2, fit.omega1, fit.omega10,
                                    fit.omega2, fit.omega20, predictor_covariance(data));
  return asymptotic_report(vec(fit.kron_coef()), avar, data.n());
}

InferenceReport location_effect_report(const ScalarEnvelopeFit& fit, const MatrixDataset& data,
                                       Axis axis, const BootstrapOptions& opts,
                                       const EnvelopeOptions& env_opts) {
  if (opts.B < 2) throw InvalidArgument("location_effect_report needs B >= 2");
  auto average = [axis](const Matrix& beta) -> Vector {
    return axis == Axis::rows ? Vector(beta.colwise().mean().transpose()) : Vector(beta.rowwise().mean());
  };
  auto fitted = [](const MatrixDataset& d, const Matrix& mu, const Matrix& beta, double xbar) {
    std::vector<Matrix> out;
    for (const auto& u : d.units) out.push_back(mu + beta * (u.x(0, 0) - xbar));
    return out;
  };
  const int u1 = fit.u1, u2 = fit.u2;
  const Fitter fitter = [=](const MatrixDataset& d) {
    const ScalarEnvelopeFit f = fit_envelope_scalarX(d, u1, u2, env_opts);
    return FitSummary{average(f.beta), fitted(d, f.mu, f.beta, f.x_mean)};
  };
  const FitSummary base{average(fit.beta), fitted(data, fit.mu, fit.beta, fit.x_mean)};
  int failures = 0;
  const Matrix stats = statistics_from_base(data, fitter, base, 0, opts.B, opts, &failures);
  InferenceReport rep = finish_report(base.statistic, column_sd(stats), InferenceMethod::bootstrap, opts.B);
  rep.failures = failures;
  return rep;
}

}  // namespace matenv

#include "matenv/simlab.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>

#include "matenv/errors.hpp"
#include "matenv/matnorm.hpp"
#include "matenv/parallel.hpp"
#include "matenv/random.hpp"

namespace matenv {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kTruthStream = 0x7275746855ULL;
constexpr std::uint64_t kBootStream = 0x626f6f74ULL;

// Orthonormalizes only the active rows so that inactive rows stay exactly zero.
SemiOrthoBasis draw_basis(Eigen::Index ambient, int u, const std::vector<int>& zero_rows, Rng& rng) {
  const Matrix a = uniform01(ambient, u, rng);
  if (u == 0) return SemiOrthoBasis::empty(ambient);
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < ambient; ++i) {
    if (std::find(zero_rows.begin(), zero_rows.end(), i) == zero_rows.end()) active.push_back(i);
  }
  const Matrix q = SemiOrthoBasis::orthonormalize(a(active, Eigen::all)).matrix();
  Matrix g = Matrix::Zero(ambient, u);
  g(active, Eigen::all) = q;
  return SemiOrthoBasis(g);
}

Matrix structured_cov(const SemiOrthoBasis& g, double mat, double immat) {
  const Matrix p = g.projection();
  return mat * p + immat * (Matrix::Identity(p.rows(), p.cols()) - p);
}

// Mean and SD (divisor count − 1) of the finite entries.
std::pair<double, double> mean_sd(const std::vector<double>& v, int& ok) {
  double sum = 0.0;
  ok = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      sum += x;
      ++ok;
    }
  }
  if (ok == 0) return {kNaN, kNaN};
  const double mean = sum / ok;
  if (ok < 2) return {mean, kNaN};
  double ss = 0.0;
  for (double x : v) {
    if (std::isfinite(x)) ss += (x - mean) * (x - mean);
  }
  return {mean, std::sqrt(ss / (ok - 1))};
}

}  // namespace

void SimSpec::validate() const {
  if (r < 1 || m < 1 || p1 < 1 || p2 < 1) throw InvalidArgument("SimSpec: dimensions must be positive");
  if (u1 < 0 || u1 > r || u2 < 0 || u2 > m) throw InvalidArgument("SimSpec: envelope dimensions out of range");
  if (!(sigma2_mat > 0.0) || !(sigma0_sq > 0.0)) throw InvalidArgument("SimSpec: variances must be positive");
  if (reps < 1) throw InvalidArgument("SimSpec: reps must be at least 1");
  for (int n : n_list) {
    if (n < 2) throw InvalidArgument("SimSpec: sample sizes must be at least 2");
  }
  for (int i : inactive_rows) {
    if (i < 0 || i >= r) throw InvalidArgument("SimSpec: inactive row out of range");
  }
  for (int j : inactive_cols) {
    if (j < 0 || j >= m) throw InvalidArgument("SimSpec: inactive column out of range");
  }
  if (r - static_cast<int>(inactive_rows.size()) < u1 || m - static_cast<int>(inactive_cols.size()) < u2) {
    throw InvalidArgument("SimSpec: too many inactive rows for the envelope dimension");
  }
}

SimTruth make_truth(const SimSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {kTruthStream}));
  SimTruth t;
  t.L = draw_basis(spec.r, spec.u1, spec.inactive_rows, rng);
  t.R = draw_basis(spec.m, spec.u2, spec.inactive_cols, rng);
  t.eta1 = standard_normal(spec.u1, spec.p1, rng);
  t.eta2 = standard_normal(spec.u2, spec.p2, rng);
  t.mu = standard_normal(spec.r, spec.m, rng);
  t.beta1 = t.L.matrix() * t.eta1;
  t.beta2 = t.R.matrix() * t.eta2;
  t.sigma1 = PdMatrix(symmetrize(structured_cov(t.L, spec.sigma2_mat, spec.sigma0_sq)));
  t.sigma2 = PdMatrix(symmetrize(structured_cov(t.R, spec.sigma2_mat, spec.sigma0_sq)));
  return t;
}

MatrixDataset gen_sim_dataset(const SimSpec& spec, const SimTruth& truth, int n,
                              std::uint64_t stream_seed) {
  if (n < 1) throw InvalidArgument("gen_sim_dataset: n must be positive");
  Rng rng(stream_seed);
  std::vector<Unit> units;
  units.reserve(static_cast<std::size_t>(n));
  const Matrix b2t = truth.beta2.transpose();
  const Matrix zero = Matrix::Zero(spec.r, spec.m);
  for (int i = 0; i < n; ++i) {
    Matrix x = standard_normal(spec.p1, spec.p2, rng);
    Matrix e = matnorm_sample(zero, truth.sigma1, truth.sigma2, 1, rng).front();
    units.push_back({truth.mu + truth.beta1 * x * b2t + e, std::move(x)});
  }
  return MatrixDataset(std::move(units));
}

std::pair<MatrixDataset, SimTruth> gen_sim_dataset(const SimSpec& spec, int n, std::uint64_t stream_seed) {
  SimTruth truth = make_truth(spec);
  MatrixDataset data = gen_sim_dataset(spec, truth, n, stream_seed);
  return {std::move(data), std::move(truth)};
}

std::uint64_t replicate_seed(const SimSpec& spec, int n, int rep) {
  return derive_seed(spec.seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)});
}

std::string model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::vector: return "vector";
    case ModelKind::bilinear: return "bilinear";
    case ModelKind::envelope: return "envelope";
  }
  return "unknown";
}

std::vector<ComparisonRow> run_comparison(const SimSpec& spec, unsigned workers, const EnvelopeOptions& opts) {
  const SimTruth truth = make_truth(spec);
  const Matrix target = truth.kron_coef();
  const std::size_t nn = spec.n_list.size(), nm = spec.models.size();
  const auto reps = static_cast<std::size_t>(spec.reps);
  // errors[(ni * reps + rep) * nm + mi]
  std::vector<double> errors(nn * reps * nm, kNaN);
  parallel_for(nn * reps, workers, [&](std::size_t job) {
    const std::size_t ni = job / reps, rep = job % reps;
    const int n = spec.n_list[ni];
    const MatrixDataset data = gen_sim_dataset(spec, truth, n, replicate_seed(spec, n, static_cast<int>(rep)));
    std::optional<BilinearFit> bil;
    for (std::size_t mi = 0; mi < nm; ++mi) {
      double err = kNaN;
      try {
        switch (spec.models[mi]) {
          case ModelKind::vector:
            err = (fit_vector_model(data).nu - target).norm();
            break;
          case ModelKind::bilinear:
            if (!bil) bil = fit_bilinear(data, opts.bilinear);
            err = (bil->kron_coef() - target).norm();
            break;
          case ModelKind::envelope: {
            if (!bil) bil = fit_bilinear(data, opts.bilinear);
            err = (fit_envelope(data, spec.u1, spec.u2, opts, &*bil).kron_coef() - target).norm();
            break;
          }
        }
      } catch (const Error&) {
        err = kNaN;
      }
      errors[job * nm + mi] = err;
    }
  });

  std::vector<ComparisonRow> rows;
  for (std::size_t ni = 0; ni < nn; ++ni) {
    for (std::size_t mi = 0; mi < nm; ++mi) {
      std::vector<double> cell;
      for (std::size_t rep = 0; rep < reps; ++rep) cell.push_back(errors[(ni * reps + rep) * nm + mi]);
      ComparisonRow row;
      row.model = spec.models[mi];
      row.n = spec.n_list[ni];
      std::tie(row.mean_error, row.sd_error) = mean_sd(cell, row.reps_ok);
      row.failures = spec.reps - row.reps_ok;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<SeRow> run_se_study(const SimSpec& spec, const SeStudyOptions& opts) {
  const SimTruth truth = make_truth(spec);
  const Eigen::Index coef_rows = static_cast<Eigen::Index>(spec.r) * spec.m;
  if (opts.row < 0 || opts.row >= coef_rows || opts.col < 0 || opts.col >= spec.p1 * spec.p2) {
    throw InvalidArgument("run_se_study: element index out of range");
  }
  const Eigen::Index element = static_cast<Eigen::Index>(opts.col) * coef_rows + opts.row;
  const std::size_t nn = spec.n_list.size(), nm = spec.models.size();
  const auto reps = static_cast<std::size_t>(spec.reps);
  std::vector<double> estimates(nn * reps * nm, kNaN), ases(nn * reps * nm, kNaN);

  parallel_for(nn * reps, opts.workers, [&](std::size_t job) {
    const std::size_t ni = job / reps, rep = job % reps;
    const int n = spec.n_list[ni];
    const MatrixDataset data = gen_sim_dataset(spec, truth, n, replicate_seed(spec, n, static_cast<int>(rep)));
    std::optional<BilinearFit> bil;
    for (std::size_t mi = 0; mi < nm; ++mi) {
      try {
        InferenceReport rep_out;
        switch (spec.models[mi]) {
          case ModelKind::vector: {
            const VectorModelFit f = fit_vector_model(data);
            const Matrix avar = avar_vector(predictor_covariance(data), f.sigma.matrix());
            estimates[job * nm + mi] = vec(f.nu)(element);
            ases[job * nm + mi] = std::sqrt(avar(element, element) / static_cast<double>(n));
            continue;
          }
          case ModelKind::bilinear:
            if (!bil) bil = fit_bilinear(data, opts.envelope.bilinear);
            rep_out = asymptotic_se_kron(*bil, data);
            break;
          case ModelKind::envelope:
            if (!bil) bil = fit_bilinear(data, opts.envelope.bilinear);
            rep_out = asymptotic_se_kron(fit_envelope(data, spec.u1, spec.u2, opts.envelope, &*bil), data);
            break;
        }
        estimates[job * nm + mi] = rep_out.estimate(element);
        ases[job * nm + mi] = rep_out.se(element);
      } catch (const Error&) {
      }
    }
  });

  std::vector<SeRow> rows;
  for (std::size_t ni = 0; ni < nn; ++ni) {
    const int n = spec.n_list[ni];
    const MatrixDataset boot_data = gen_sim_dataset(spec, truth, n, replicate_seed(spec, n, 0));
    for (std::size_t mi = 0; mi < nm; ++mi) {
      std::vector<double> est, as;
      for (std::size_t rep = 0; rep < reps; ++rep) {
        est.push_back(estimates[(ni * reps + rep) * nm + mi]);
        as.push_back(ases[(ni * reps + rep) * nm + mi]);
      }
      SeRow row;
      row.model = spec.models[mi];
      row.n = n;
      int ok_est = 0, ok_as = 0;
      row.actual_sd = mean_sd(est, ok_est).second;
      row.asymptotic_se = mean_sd(as, ok_as).first;
      row.reps_ok = std::min(ok_est, ok_as);
      row.failures = spec.reps - row.reps_ok;

      BootstrapOptions bo;
      bo.B = opts.B;
      bo.scheme = opts.scheme;
      bo.workers = opts.workers;
      bo.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(n), kBootStream});
      Fitter fitter;
      switch (row.model) {
        case ModelKind::vector: fitter = vector_fitter(); break;
        case ModelKind::bilinear: fitter = bilinear_fitter(opts.envelope.bilinear); break;
        case ModelKind::envelope: fitter = envelope_fitter(spec.u1, spec.u2, opts.envelope); break;
      }
      try {
        row.bootstrap_se = bootstrap_se(boot_data, fitter, bo).se(element);
      } catch (const Error&) {
        row.bootstrap_se = kNaN;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_comparison_csv(const std::vector<ComparisonRow>& rows, std::ostream& out) {
  out << "model,n,mean_error,sd_error,reps_ok,failures\n";
  for (const auto& r : rows) {
    out << model_name(r.model) << ',' << r.n << ',' << format_double(r.mean_error) << ','
        << format_double(r.sd_error) << ',' << r.reps_ok << ',' << r.failures << '\n';
  }
}

void write_se_csv(const std::vector<SeRow>& rows, std::ostream& out) {
  out << "model,n,asymptotic_se,actual_sd,bootstrap_se,reps_ok,failures\n";
  for (const auto& r : rows) {
    out << model_name(r.model) << ',' << r.n << ',' << format_double(r.asymptotic_se) << ','
        << format_double(r.actual_sd) << ',' << format_double(r.bootstrap_se) << ',' << r.reps_ok
        << ',' << r.failures << '\n';
  }
}

}  // namespace matenv

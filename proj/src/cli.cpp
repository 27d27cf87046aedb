#include "matenv/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "matenv/dataset_io.hpp"
#include "matenv/simlab.hpp"
#include "matenv/sparse.hpp"

namespace matenv {

using nlohmann::json;

namespace {

// ---- value parsing -------------------------------------------------------------------

template <class T>
T parse_number(const std::string& key, std::string_view text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw UsageError("invalid value '" + std::string(text) + "' for " + key);
  }
  return v;
}

std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text.find(',', start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class E>
struct EnumName {
  E value;
  const char* name;
};

template <class E, std::size_t N>
E parse_enum(const std::string& key, const std::string& text, const EnumName<E> (&names)[N]) {
  for (const auto& e : names) {
    if (text == e.name) return e.value;
  }
  std::string allowed;
  for (const auto& e : names) allowed += (allowed.empty() ? "" : ", ") + std::string(e.name);
  throw UsageError("invalid value '" + text + "' for " + key + " (expected one of: " + allowed + ")");
}

template <class E, std::size_t N>
std::string enum_name(E v, const EnumName<E> (&names)[N]) {
  for (const auto& e : names) {
    if (e.value == v) return e.name;
  }
  return "?";
}

constexpr EnumName<Criterion> kCriteria[] = {{Criterion::aic, "aic"}, {Criterion::bic, "bic"}};
constexpr EnumName<Convention> kConventions[] = {{Convention::raw, "raw"},
                                                 {Convention::with_constraints, "with_constraints"}};
constexpr EnumName<BootstrapScheme> kSchemes[] = {{BootstrapScheme::residual, "residual"},
                                                  {BootstrapScheme::pairs, "pairs"}};
constexpr EnumName<ModelKind> kModels[] = {
    {ModelKind::vector, "vector"}, {ModelKind::bilinear, "bilinear"}, {ModelKind::envelope, "envelope"}};
constexpr EnumName<Axis> kAxes[] = {{Axis::rows, "rows"}, {Axis::cols, "cols"}};
constexpr EnumName<SimStudy> kStudies[] = {{SimStudy::comparison, "comparison"}, {SimStudy::se, "se"}};

const std::vector<std::string> kCommands = {"fit",      "envelope",  "sparse", "select",
                                            "simulate", "bootstrap", "report"};

// ---- field table ---------------------------------------------------------------------

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> from_text;
  std::function<void(RunConfig&, const json&)> from_json;
  std::function<json(const RunConfig&)> to_json;
};

[[noreturn]] void type_error(const std::string& key, const char* expected) {
  throw UsageError("config key '" + key + "' must be " + expected);
}

int json_int(const std::string& key, const json& v) {
  if (!v.is_number_integer()) type_error(key, "an integer");
  const auto x = v.get<std::int64_t>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) type_error(key, "an int");
  return static_cast<int>(x);
}

double json_double(const std::string& key, const json& v) {
  if (!v.is_number()) type_error(key, "a number");
  return v.get<double>();
}

std::string json_string(const std::string& key, const json& v) {
  if (!v.is_string()) type_error(key, "a string");
  return v.get<std::string>();
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

Field int_field(const std::string& key, int RunConfig::*member) {
  return {key, [=](RunConfig& c, const std::string& t) { c.*member = parse_number<int>(key, t); },
          [=](RunConfig& c, const json& v) { c.*member = json_int(key, v); },
          [=](const RunConfig& c) { return json(c.*member); }};
}

Field opt_int_field(const std::string& key, std::optional<int> RunConfig::*member) {
  return {key, [=](RunConfig& c, const std::string& t) { c.*member = parse_number<int>(key, t); },
          [=](RunConfig& c, const json& v) {
            if (v.is_null()) c.*member = std::nullopt;
            else c.*member = json_int(key, v);
          },
          [=](const RunConfig& c) { return optional_json(c.*member); }};
}

Field opt_double_field(const std::string& key, std::optional<double> RunConfig::*member) {
  return {key, [=](RunConfig& c, const std::string& t) { c.*member = parse_number<double>(key, t); },
          [=](RunConfig& c, const json& v) {
            if (v.is_null()) c.*member = std::nullopt;
            else c.*member = json_double(key, v);
          },
          [=](const RunConfig& c) { return optional_json(c.*member); }};
}

Field opt_string_field(const std::string& key, std::optional<std::string> RunConfig::*member) {
  return {key, [=](RunConfig& c, const std::string& t) { c.*member = t; },
          [=](RunConfig& c, const json& v) {
            if (v.is_null()) c.*member = std::nullopt;
            else c.*member = json_string(key, v);
          },
          [=](const RunConfig& c) { return optional_json(c.*member); }};
}

template <class E, std::size_t N>
Field enum_field(const std::string& key, E RunConfig::*member, const EnumName<E> (&names)[N]) {
  return {key, [=, &names](RunConfig& c, const std::string& t) { c.*member = parse_enum(key, t, names); },
          [=, &names](RunConfig& c, const json& v) { c.*member = parse_enum(key, json_string(key, v), names); },
          [=, &names](const RunConfig& c) { return json(enum_name(c.*member, names)); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"command", [](RunConfig& c, const std::string& t) { c.command = t; },
                 [](RunConfig& c, const json& v) { c.command = json_string("command", v); },
                 [](const RunConfig& c) { return json(c.command); }});
    f.push_back(opt_string_field("data", &RunConfig::data));
    f.push_back(opt_int_field("r", &RunConfig::r));
    f.push_back(opt_int_field("m", &RunConfig::m));
    f.push_back(opt_int_field("p1", &RunConfig::p1));
    f.push_back(opt_int_field("p2", &RunConfig::p2));
    f.push_back(opt_int_field("u1", &RunConfig::u1));
    f.push_back(opt_int_field("u2", &RunConfig::u2));
    f.push_back(enum_field("criterion", &RunConfig::criterion, kCriteria));
    f.push_back(opt_double_field("lambda1", &RunConfig::lambda1));
    f.push_back(opt_double_field("lambda2", &RunConfig::lambda2));
    f.push_back({"lambda_grid",
                 [](RunConfig& c, const std::string& t) {
                   c.lambda_grid.clear();
                   for (auto part : split_list(t)) c.lambda_grid.push_back(parse_number<double>("lambda_grid", part));
                 },
                 [](RunConfig& c, const json& v) {
                   if (!v.is_array()) type_error("lambda_grid", "an array of numbers");
                   c.lambda_grid.clear();
                   for (const auto& x : v) c.lambda_grid.push_back(json_double("lambda_grid", x));
                 },
                 [](const RunConfig& c) { return json(c.lambda_grid); }});
    f.push_back(int_field("B", &RunConfig::B));
    f.push_back({"seed",
                 [](RunConfig& c, const std::string& t) { c.seed = parse_number<std::uint64_t>("seed", t); },
                 [](RunConfig& c, const json& v) {
                   if (v.is_null()) {
                     c.seed = std::nullopt;
                   } else {
                     if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                       type_error("seed", "a nonnegative integer");
                     }
                     c.seed = v.get<std::uint64_t>();
                   }
                 },
                 [](const RunConfig& c) { return optional_json(c.seed); }});
    f.push_back(opt_double_field("tol", &RunConfig::tol));
    f.push_back(opt_int_field("max_iter", &RunConfig::max_iter));
    f.push_back(enum_field("convention", &RunConfig::convention, kConventions));
    f.push_back(opt_string_field("out", &RunConfig::out));
    f.push_back(int_field("workers", &RunConfig::workers));
    f.push_back(enum_field("scheme", &RunConfig::scheme, kSchemes));
    f.push_back(enum_field("model", &RunConfig::model, kModels));
    f.push_back(int_field("reps", &RunConfig::reps));
    f.push_back({"n_list",
                 [](RunConfig& c, const std::string& t) {
                   c.n_list.clear();
                   for (auto part : split_list(t)) c.n_list.push_back(parse_number<int>("n_list", part));
                 },
                 [](RunConfig& c, const json& v) {
                   if (!v.is_array()) type_error("n_list", "an array of integers");
                   c.n_list.clear();
                   for (const auto& x : v) c.n_list.push_back(json_int("n_list", x));
                 },
                 [](const RunConfig& c) { return json(c.n_list); }});
    f.push_back(enum_field("axis", &RunConfig::axis, kAxes));
    f.push_back(enum_field("study", &RunConfig::study, kStudies));
    f.push_back(int_field("element_row", &RunConfig::element_row));
    f.push_back(int_field("element_col", &RunConfig::element_col));
    return f;
  }();
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw UsageError("unknown config key '" + key + "'");
}

// ---- result helpers ------------------------------------------------------------------

json matrix_json(const Matrix& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

bool is_randomized(const std::string& command) { return command != "fit"; }

std::uint64_t fresh_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd());
}

BilinearOptions bilinear_options(const RunConfig& cfg) {
  BilinearOptions o;
  if (cfg.tol) o.tol = *cfg.tol;
  if (cfg.max_iter) o.max_iter = *cfg.max_iter;
  return o;
}

EnvelopeOptions envelope_options(const RunConfig& cfg, std::uint64_t seed) {
  EnvelopeOptions o;
  o.bilinear = bilinear_options(cfg);
  if (cfg.tol) o.tol = *cfg.tol;
  if (cfg.max_iter) o.max_iter = *cfg.max_iter;
  o.minimizer.seed = seed;
  return o;
}

BootstrapOptions bootstrap_options(const RunConfig& cfg, std::uint64_t seed) {
  BootstrapOptions o;
  o.B = cfg.B;
  o.scheme = cfg.scheme;
  o.seed = seed;
  o.workers = static_cast<unsigned>(cfg.workers);
  return o;
}

MatrixDataset load_data(const RunConfig& cfg) {
  MatrixDataset data = read_dataset(*cfg.data);
  const auto check = [](const std::optional<int>& want, Eigen::Index got, const char* name) {
    if (want && *want != got) {
      throw DimensionError(std::string("dataset has ") + name + " = " + std::to_string(got) +
                           " but the configuration says " + std::to_string(*want));
    }
  };
  check(cfg.r, data.r, "r");
  check(cfg.m, data.m, "m");
  check(cfg.p1, data.p1, "p1");
  check(cfg.p2, data.p2, "p2");
  return data;
}

void require_dims(const RunConfig& cfg, const MatrixDataset& data) {
  if (!cfg.u1 || !cfg.u2) throw UsageError(cfg.command + " requires u1 and u2");
  if (*cfg.u1 > data.r || *cfg.u2 > data.m) {
    throw UsageError("u1 must not exceed r and u2 must not exceed m");
  }
}

json bilinear_json(const BilinearFit& f) {
  return {{"mu", matrix_json(f.mu)},
          {"beta1", matrix_json(f.beta1)},
          {"beta2", matrix_json(f.beta2)},
          {"sigma1", matrix_json(f.sigma1.matrix())},
          {"sigma2", matrix_json(f.sigma2.matrix())},
          {"loglik", f.loglik},
          {"iterations", f.iterations},
          {"converged", f.converged},
          {"loglik_trace", f.loglik_trace}};
}

json envelope_json(const EnvelopeFit& f) {
  return {{"u1", f.u1},
          {"u2", f.u2},
          {"L", matrix_json(f.L.matrix())},
          {"R", matrix_json(f.R.matrix())},
          {"eta1", matrix_json(f.eta1)},
          {"eta2", matrix_json(f.eta2)},
          {"omega1", matrix_json(f.omega1)},
          {"omega10", matrix_json(f.omega10)},
          {"omega2", matrix_json(f.omega2)},
          {"omega20", matrix_json(f.omega20)},
          {"mu", matrix_json(f.mu)},
          {"beta1", matrix_json(f.beta1)},
          {"beta2", matrix_json(f.beta2)},
          {"sigma1", matrix_json(f.sigma1.matrix())},
          {"sigma2", matrix_json(f.sigma2.matrix())},
          {"loglik", f.loglik},
          {"iterations", f.iterations},
          {"converged", f.converged},
          {"loglik_trace", f.loglik_trace}};
}

json ic_json(double loglik, int k, std::size_t n) {
  const InformationCriteria ic = information_criteria(loglik, k, n);
  return {{"num_params", k}, {"aic", ic.aic}, {"bic", ic.bic}};
}

json sparse_json(const SparseFit& f) {
  json doc = {{"kind", f.kind == SparseKind::bilinear ? "bilinear" : "envelope"},
              {"lambda1", f.lambda1},
              {"lambda2", f.lambda2},
              {"active_rows", f.active_rows},
              {"active_cols", f.active_cols},
              {"weights1", vector_json(f.weights.w1)},
              {"weights2", vector_json(f.weights.w2)},
              {"objective", f.objective},
              {"objective_trace", f.objective_trace}};
  doc["fit"] = f.bilinear ? bilinear_json(*f.bilinear) : envelope_json(*f.envelope);
  return doc;
}

std::string inference_csv(const InferenceReport& rep, Eigen::Index rows, const char* row_name,
                          const char* col_name) {
  std::ostringstream os;
  os << row_name << ',' << col_name << ",estimate,se,pvalue,pvalue_fdr,neg_log10_fdr\n";
  for (Eigen::Index k = 0; k < rep.estimate.size(); ++k) {
    os << (k % rows + 1) << ',' << (k / rows + 1) << ',' << format_double(rep.estimate(k)) << ','
       << format_double(rep.se(k)) << ',' << format_double(rep.pvalues(k)) << ','
       << format_double(rep.pvalues_fdr(k)) << ',' << format_double(rep.neg_log10_fdr(k)) << '\n';
  }
  return os.str();
}

json inference_json(const InferenceReport& rep) {
  return {{"method", rep.method == InferenceMethod::bootstrap ? "bootstrap" : "asymptotic"},
          {"B", rep.B},
          {"failures", rep.failures},
          {"estimate", vector_json(rep.estimate)},
          {"se", vector_json(rep.se)},
          {"pvalues", vector_json(rep.pvalues)},
          {"pvalues_fdr", vector_json(rep.pvalues_fdr)},
          {"neg_log10_fdr", vector_json(rep.neg_log10_fdr)}};
}

// ---- commands ------------------------------------------------------------------------

void cmd_fit(const RunConfig& cfg, RunOutput& out) {
  const MatrixDataset data = load_data(cfg);
  const BilinearFit fit = fit_bilinear(data, bilinear_options(cfg));
  const int r = static_cast<int>(data.r), m = static_cast<int>(data.m);
  const int p1 = static_cast<int>(data.p1), p2 = static_cast<int>(data.p2);
  json res;
  res["n"] = data.n();
  res["bilinear"] = bilinear_json(fit);
  res["bilinear"].update(ic_json(fit.loglik, count_params(ModelKind::bilinear, r, m, p1, p2, 0, 0, cfg.convention), data.n()));
  try {
    const VectorModelFit vf = fit_vector_model(data);
    const LrtResult lrt = lrt_kron(vf, fit, cfg.convention);
    res["vector"] = {{"loglik", vf.loglik}};
    res["vector"].update(ic_json(vf.loglik, count_params(ModelKind::vector, r, m, p1, p2, 0, 0, cfg.convention), data.n()));
    res["lrt"] = {{"stat", lrt.stat}, {"df", lrt.df}, {"pvalue", lrt.pvalue}};
  } catch (const Error& e) {
    res["vector"] = {{"error", {{"kind", e.kind()}, {"message", e.what()}}}};
  }
  out.document["result"] = std::move(res);
}

void cmd_envelope(const RunConfig& cfg, std::uint64_t seed, RunOutput& out) {
  const MatrixDataset data = load_data(cfg);
  require_dims(cfg, data);
  const EnvelopeFit fit = fit_envelope(data, *cfg.u1, *cfg.u2, envelope_options(cfg, seed));
  json res = envelope_json(fit);
  res["n"] = data.n();
  res.update(ic_json(fit.loglik,
                     count_params(ModelKind::envelope, static_cast<int>(data.r), static_cast<int>(data.m),
                                  static_cast<int>(data.p1), static_cast<int>(data.p2), fit.u1, fit.u2,
                                  cfg.convention),
                     data.n()));
  out.document["result"] = std::move(res);
}

void cmd_sparse(const RunConfig& cfg, std::uint64_t seed, RunOutput& out) {
  const MatrixDataset data = load_data(cfg);
  if (cfg.model == ModelKind::vector) throw UsageError("sparse supports model bilinear or envelope");
  const SparseKind kind = cfg.model == ModelKind::envelope ? SparseKind::envelope : SparseKind::bilinear;
  if (kind == SparseKind::envelope) require_dims(cfg, data);
  const bool single = cfg.lambda1 || cfg.lambda2;
  if (single == !cfg.lambda_grid.empty()) {
    throw UsageError("sparse requires either lambda1/lambda2 or lambda_grid, not both");
  }
  SparseOptions opts;
  opts.envelope = envelope_options(cfg, seed);
  const int u1 = cfg.u1.value_or(0), u2 = cfg.u2.value_or(0);
  if (single) {
    const double l1 = cfg.lambda1.value_or(0.0), l2 = cfg.lambda2.value_or(0.0);
    const SparseFit fit = kind == SparseKind::bilinear
                              ? penalized_bilinear(data, l1, l2, std::nullopt, opts)
                              : sparse_envelope(data, u1, u2, l1, l2, std::nullopt, opts);
    out.document["result"] = sparse_json(fit);
    return;
  }
  std::vector<std::pair<double, double>> grid;
  for (double g : cfg.lambda_grid) grid.emplace_back(g, g);
  const LambdaSelection sel = select_lambda(data, grid, kind, u1, u2, opts, static_cast<unsigned>(cfg.workers));
  json res = {{"lambda1", sel.lambda1}, {"lambda2", sel.lambda2}};
  if (sel.best) res["best"] = sparse_json(*sel.best);
  out.document["result"] = std::move(res);
  std::ostringstream os;
  os << "lambda1,lambda2,loglik,df,score,active_rows,active_cols,ok,error\n";
  for (const auto& c : sel.table) {
    os << format_double(c.lambda1) << ',' << format_double(c.lambda2) << ',' << format_double(c.loglik)
       << ',' << c.df << ',' << format_double(c.score) << ',' << c.active_rows << ',' << c.active_cols
       << ',' << (c.ok ? 1 : 0) << ',' << c.error << '\n';
  }
  out.tables.push_back({"lambdas", os.str()});
}

void cmd_select(const RunConfig& cfg, std::uint64_t seed, RunOutput& out) {
  if (cfg.convention != Convention::raw) {
    throw UsageError("select counts parameters under the raw convention only");
  }
  const MatrixDataset data = load_data(cfg);
  const DimensionSelection sel =
      select_dims_ic(data, cfg.criterion, {}, envelope_options(cfg, seed), static_cast<unsigned>(cfg.workers));
  out.document["result"] = {{"u1", sel.u1}, {"u2", sel.u2}, {"criterion", enum_name(cfg.criterion, kCriteria)}};
  std::ostringstream os;
  os << "u1,u2,loglik,num_params,value,ok,error\n";
  for (const auto& c : sel.table) {
    os << c.u1 << ',' << c.u2 << ',' << format_double(c.loglik) << ',' << c.num_params << ','
       << format_double(c.value) << ',' << (c.ok ? 1 : 0) << ',' << c.error << '\n';
  }
  out.tables.push_back({"dimensions", os.str()});
}

SimSpec sim_spec(const RunConfig& cfg, std::uint64_t seed) {
  SimSpec spec;
  if (cfg.r) spec.r = *cfg.r;
  if (cfg.m) spec.m = *cfg.m;
  if (cfg.p1) spec.p1 = *cfg.p1;
  if (cfg.p2) spec.p2 = *cfg.p2;
  if (cfg.u1) spec.u1 = *cfg.u1;
  if (cfg.u2) spec.u2 = *cfg.u2;
  spec.reps = cfg.reps;
  spec.n_list = cfg.n_list;
  spec.seed = seed;
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  return spec;
}

void cmd_simulate(const RunConfig& cfg, std::uint64_t seed, RunOutput& out) {
  const SimSpec spec = sim_spec(cfg, seed);
  const EnvelopeOptions env = envelope_options(cfg, 0);
  std::ostringstream os;
  json res = {{"r", spec.r}, {"m", spec.m}, {"p1", spec.p1}, {"p2", spec.p2}, {"u1", spec.u1},
              {"u2", spec.u2}, {"reps", spec.reps}, {"n_list", spec.n_list},
              {"study", enum_name(cfg.study, kStudies)}};
  if (cfg.study == SimStudy::comparison) {
    write_comparison_csv(run_comparison(spec, static_cast<unsigned>(cfg.workers), env), os);
    out.tables.push_back({"comparison", os.str()});
  } else {
    SeStudyOptions so;
    so.row = cfg.element_row - 1;
    so.col = cfg.element_col - 1;
    so.B = cfg.B;
    so.scheme = cfg.scheme;
    so.workers = static_cast<unsigned>(cfg.workers);
    so.envelope = env;
    write_se_csv(run_se_study(spec, so), os);
    out.tables.push_back({"se", os.str()});
  }
  out.document["result"] = std::move(res);
}

void cmd_bootstrap(const RunConfig& cfg, std::uint64_t seed, RunOutput& out) {
  const MatrixDataset data = load_data(cfg);
  Fitter fitter;
  switch (cfg.model) {
    case ModelKind::vector: fitter = vector_fitter(); break;
    case ModelKind::bilinear: fitter = bilinear_fitter(bilinear_options(cfg)); break;
    case ModelKind::envelope:
      require_dims(cfg, data);
      fitter = envelope_fitter(*cfg.u1, *cfg.u2, envelope_options(cfg, seed));
      break;
  }
  const InferenceReport rep = bootstrap_se(data, fitter, bootstrap_options(cfg, seed));
  json res = inference_json(rep);
  res["model"] = enum_name(cfg.model, kModels);
  out.document["result"] = std::move(res);
  out.tables.push_back({"bootstrap", inference_csv(rep, data.r * data.m, "row", "col")});
}

void cmd_report(const RunConfig& cfg, std::uint64_t seed, RunOutput& out) {
  const MatrixDataset data = load_data(cfg);
  if (data.p1 != 1 || data.p2 != 1) throw DimensionError("report needs a scalar predictor (p1 = p2 = 1)");
  require_dims(cfg, data);
  const EnvelopeOptions env = envelope_options(cfg, seed);
  const ScalarEnvelopeFit fit = fit_envelope_scalarX(data, *cfg.u1, *cfg.u2, env);
  const InferenceReport rep = location_effect_report(fit, data, cfg.axis, bootstrap_options(cfg, seed), env);
  json res = inference_json(rep);
  res["axis"] = enum_name(cfg.axis, kAxes);
  res["fit"] = {{"u1", fit.u1},
                {"u2", fit.u2},
                {"beta", matrix_json(fit.beta)},
                {"beta_full", matrix_json(fit.beta_full)},
                {"eta", matrix_json(fit.eta)},
                {"L", matrix_json(fit.L.matrix())},
                {"R", matrix_json(fit.R.matrix())},
                {"mu", matrix_json(fit.mu)},
                {"sigma1", matrix_json(fit.sigma1.matrix())},
                {"sigma2", matrix_json(fit.sigma2.matrix())},
                {"loglik", fit.loglik},
                {"iterations", fit.iterations},
                {"converged", fit.converged}};
  out.document["result"] = std::move(res);
  std::ostringstream os;
  os << "index,estimate,se,pvalue,pvalue_fdr,neg_log10_fdr\n";
  for (Eigen::Index k = 0; k < rep.estimate.size(); ++k) {
    os << (k + 1) << ',' << format_double(rep.estimate(k)) << ',' << format_double(rep.se(k)) << ','
       << format_double(rep.pvalues(k)) << ',' << format_double(rep.pvalues_fdr(k)) << ','
       << format_double(rep.neg_log10_fdr(k)) << '\n';
  }
  out.tables.push_back({"effects", os.str()});
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("IoError", "cannot write '" + path + "'");
  f << text;
  if (!f) throw DataError("IoError", "failed writing '" + path + "'");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

std::string flag_name(const std::string& key) {
  std::string out = key;
  for (char& c : out) {
    if (c == '_') c = '-';
  }
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& text) {
  find_field(key).from_text(cfg, text);
}

void apply_config_json(RunConfig& cfg, const json& doc) {
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) find_field(key).from_json(cfg, value);
}

RunConfig config_from_json(const json& doc) {
  RunConfig cfg;
  apply_config_json(cfg, doc);
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  json out = json::object();
  for (const auto& f : fields()) out[f.key] = f.to_json(cfg);
  return out;
}

void validate_config(const RunConfig& cfg) {
  if (cfg.command.empty()) throw UsageError("no command given");
  if (std::find(kCommands.begin(), kCommands.end(), cfg.command) == kCommands.end()) {
    throw UsageError("unknown command '" + cfg.command + "'");
  }
  const auto positive = [](const std::optional<int>& v, const char* name) {
    if (v && *v < 1) throw UsageError(std::string(name) + " must be at least 1");
  };
  positive(cfg.r, "r");
  positive(cfg.m, "m");
  positive(cfg.p1, "p1");
  positive(cfg.p2, "p2");
  if (cfg.u1 && *cfg.u1 < 0) throw UsageError("u1 must be nonnegative");
  if (cfg.u2 && *cfg.u2 < 0) throw UsageError("u2 must be nonnegative");
  const auto lambda_ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if ((cfg.lambda1 && !lambda_ok(*cfg.lambda1)) || (cfg.lambda2 && !lambda_ok(*cfg.lambda2))) {
    throw UsageError("lambda1 and lambda2 must be finite and nonnegative");
  }
  for (double g : cfg.lambda_grid) {
    if (!lambda_ok(g)) throw UsageError("lambda_grid values must be finite and nonnegative");
  }
  if (cfg.B < 2) throw UsageError("B must be at least 2");
  if (cfg.tol && !(std::isfinite(*cfg.tol) && *cfg.tol > 0.0)) throw UsageError("tol must be positive");
  if (cfg.max_iter && *cfg.max_iter < 1) throw UsageError("max_iter must be at least 1");
  if (cfg.workers < 1) throw UsageError("workers must be at least 1");
  if (cfg.reps < 1) throw UsageError("reps must be at least 1");
  if (cfg.n_list.empty()) throw UsageError("n_list must not be empty");
  for (int n : cfg.n_list) {
    if (n < 2) throw UsageError("n_list entries must be at least 2");
  }
  if (cfg.element_row < 1 || cfg.element_col < 1) throw UsageError("element_row and element_col are 1-based");
  if (cfg.command == "simulate") {
    if (cfg.data) throw UsageError("simulate does not read a dataset");
  } else if (!cfg.data) {
    throw UsageError(cfg.command + " requires data");
  }
}

RunOutput dispatch(const RunConfig& cfg) {
  validate_config(cfg);
  RunOutput out;
  bool generated = false;
  std::uint64_t seed = 0;
  if (cfg.seed) {
    seed = *cfg.seed;
  } else if (is_randomized(cfg.command)) {
    seed = fresh_seed();
    generated = true;
  }
  RunConfig effective = cfg;
  if (is_randomized(cfg.command)) effective.seed = seed;

  out.document["tool"] = kToolVersion;
  out.document["status"] = "ok";
  out.document["command"] = cfg.command;
  out.document["seed"] = effective.seed ? json(*effective.seed) : json(nullptr);
  out.document["seed_generated"] = generated;
  out.document["config"] = config_to_json(effective);

  if (cfg.command == "fit") cmd_fit(effective, out);
  else if (cfg.command == "envelope") cmd_envelope(effective, seed, out);
  else if (cfg.command == "sparse") cmd_sparse(effective, seed, out);
  else if (cfg.command == "select") cmd_select(effective, seed, out);
  else if (cfg.command == "simulate") cmd_simulate(effective, seed, out);
  else if (cfg.command == "bootstrap") cmd_bootstrap(effective, seed, out);
  else cmd_report(effective, seed, out);
  return out;
}

json error_document(ErrorClass cls, const std::string& kind, const std::string& message) {
  const char* name = cls == ErrorClass::usage ? "usage" : cls == ErrorClass::data ? "data" : "numerical";
  return {{"tool", kToolVersion},
          {"status", "error"},
          {"error", {{"class", name}, {"kind", kind}, {"message", message}, {"exit_code", static_cast<int>(cls)}}}};
}

std::string table_path(const std::string& out, const std::string& name) {
  std::filesystem::path p(out);
  const std::string stem = p.stem().string();
  return (p.parent_path() / (stem + "_" + name + ".csv")).string();
}

int run(const RunConfig& cfg, std::ostream& stdout_stream, std::ostream& stderr_stream) {
  json doc;
  int code = 0;
  std::vector<Table> tables;
  try {
    RunOutput res = dispatch(cfg);
    doc = std::move(res.document);
    tables = std::move(res.tables);
  } catch (const Error& e) {
    doc = error_document(e.error_class(), e.kind(), e.what());
    code = static_cast<int>(e.error_class());
    stderr_stream << "error: " << e.kind() << ": " << e.what() << '\n';
  }
  try {
    if (cfg.out) {
      json files = json::object();
      for (const auto& t : tables) {
        const std::string path = table_path(*cfg.out, t.name);
        write_text(path, t.csv);
        files[t.name] = path;
      }
      if (!tables.empty()) doc["tables"] = files;
      write_text(*cfg.out, doc.dump(2) + "\n");
    } else {
      if (!tables.empty()) {
        json embedded = json::object();
        for (const auto& t : tables) embedded[t.name] = t.csv;
        doc["tables"] = embedded;
      }
      stdout_stream << doc.dump(2) << '\n';
    }
  } catch (const Error& e) {
    stderr_stream << "error: " << e.kind() << ": " << e.what() << '\n';
    stdout_stream << error_document(e.error_class(), e.kind(), e.what()).dump(2) << '\n';
    return static_cast<int>(e.error_class());
  }
  return code;
}

}  // namespace matenv

#pragma once

// Batch front end: run configuration, strict config parsing, command dispatch and
// result documents.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "matenv/bilinear.hpp"
#include "matenv/envelope.hpp"
#include "matenv/errors.hpp"
#include "matenv/inference.hpp"

namespace matenv {

inline constexpr const char* kToolVersion = "matenv 0.1.0";

enum class SimStudy { comparison, se };

/// One run. Every field is reachable both as a config-file key and as a flag
/// (`max_iter` ↔ `--max-iter`). Unset optionals fall back to library defaults.
struct RunConfig {
  std::string command;  // fit | envelope | sparse | select | simulate | bootstrap | report
  std::optional<std::string> data;
  std::optional<int> r, m, p1, p2;
  std::optional<int> u1, u2;
  Criterion criterion = Criterion::bic;
  std::optional<double> lambda1, lambda2;
  std::vector<double> lambda_grid;  // each value g is tried as (λ1, λ2) = (g, g)
  int B = 200;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<int> max_iter;
  Convention convention = Convention::raw;
  std::optional<std::string> out;
  int workers = 1;
  BootstrapScheme scheme = BootstrapScheme::residual;
  ModelKind model = ModelKind::bilinear;  // bootstrap target; sparse uses bilinear or envelope
  int reps = 50;
  std::vector<int> n_list{200, 500};
  Axis axis = Axis::rows;
  SimStudy study = SimStudy::comparison;
  int element_row = 1, element_col = 1;  // 1-based element of β2⊗β1 for the SE study
};

/// Keys in declaration order.
const std::vector<std::string>& config_keys();

/// `max_iter` → `max-iter`.
std::string flag_name(const std::string& key);

/// Sets one field from its textual flag value. Lists are comma-separated.
/// Throws UsageError for unknown keys or malformed values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& text);

/// Overlays a JSON object onto `cfg`. Unknown keys and mistyped values are UsageErrors.
void apply_config_json(RunConfig& cfg, const nlohmann::json& doc);

RunConfig config_from_json(const nlohmann::json& doc);

nlohmann::json config_to_json(const RunConfig& cfg);

/// Range checks on every numeric field plus per-command requirements. Throws UsageError.
void validate_config(const RunConfig& cfg);

struct Table {
  std::string name;
  std::string csv;
};

struct RunOutput {
  nlohmann::json document;
  std::vector<Table> tables;
};

/// Runs the configured command. Randomized commands without a seed draw one and record
/// it under "seed" with "seed_generated": true. Library errors propagate.
RunOutput dispatch(const RunConfig& cfg);

nlohmann::json error_document(ErrorClass cls, const std::string& kind, const std::string& message);

/// Path of table `name` next to the result document `out`: `res.json` → `res_name.csv`.
std::string table_path(const std::string& out, const std::string& name);

/// Dispatches and emits. With `out` set the document goes to that file and tables to
/// table_path(out, name); otherwise the document (tables embedded) goes to `stdout_stream`.
/// Failures emit an error document the same way. Returns the exit code.
int run(const RunConfig& cfg, std::ostream& stdout_stream, std::ostream& stderr_stream);

}  // namespace matenv

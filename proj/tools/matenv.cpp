// matenv: batch front end for matrix-variate regression fits, simulations and inference.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "matenv/cli.hpp"

namespace {

int fail(matenv::ErrorClass cls, const std::string& kind, const std::string& message) {
  std::cerr << "error: " << kind << ": " << message << '\n';
  std::cout << matenv::error_document(cls, kind, message).dump(2) << '\n';
  return static_cast<int>(cls);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix-variate regression with Kronecker covariance and envelope models"};
  app.set_version_flag("--version", matenv::kToolVersion);

  std::string config_path;
  app.add_option("--config", config_path, "JSON file whose keys mirror the flags (underscored)");

  std::map<std::string, std::optional<std::string>> flags;
  for (const auto& key : matenv::config_keys()) {
    flags[key];
    app.add_option("--" + matenv::flag_name(key), flags[key], "sets config key '" + key + "'");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(matenv::ErrorClass::usage, "UsageError", e.what());
  }

  matenv::RunConfig cfg;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw matenv::UsageError("cannot open config file '" + config_path + "'");
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw matenv::UsageError("config file '" + config_path + "' is not valid JSON: " + e.what());
      }
      matenv::apply_config_json(cfg, doc);
    }
    for (const auto& [key, value] : flags) {
      if (value) matenv::set_config_value(cfg, key, *value);
    }
  } catch (const matenv::Error& e) {
    return fail(e.error_class(), e.kind(), e.what());
  }
  return matenv::run(cfg, std::cout, std::cerr);
}

#pragma once

#include "indiff/market_model.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace indiff {

/// Malformed or inconsistent configuration file.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kResultsSchemaVersion = 1;

/// Run section of a config file. Every field is optional there; the values
/// below are the defaults.
struct RunSettings {
  std::size_t paths = 200000;
  std::size_t steps = 50;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> routes = {"bsde", "fde", "girsanov", "oracle"};
  double picard_tol = 1e-3;
  double vanish_tol = 1e-3;
  std::optional<std::size_t> j_override;
  double K1 = 4.0;
  int basis_degree = 2;
};

struct LoadedConfig {
  Scenario scenario;
  RunSettings run;
};

/// Scenario from the config layout:
///   {"schema_version": 1, "name": ..., "T", "gamma", "lambda",
///    "index": {"P0", "mu", "sigma"}, "assets": [{"S0", "mu", "sigma"}, ...],
///    "payoff": {"type", ...}, "run": {...}}
/// Scalars may be numbers or {"knots": [...], "values": [...]}; vectors may be
/// arrays or the same with array values. Asset indices are 1-based.
Scenario scenario_from_json(const nlohmann::json& j);
RunSettings run_from_json(const nlohmann::json& j);
LoadedConfig load_config(const std::filesystem::path& file);
LoadedConfig config_from_json(const nlohmann::json& j);

/// Payoff from its config object; `d` is the asset count.
PayoffSpec payoff_from_json(const nlohmann::json& j, int d);

/// Description of a scenario for result files.
nlohmann::json scenario_summary(const Scenario& scenario);
nlohmann::json ledger_to_json(const ConstantsLedger& ledger);

/// Valid routes: bsde, fde, girsanov, oracle.
std::vector<std::string> parse_routes(const std::string& comma_list);

}  // namespace indiff

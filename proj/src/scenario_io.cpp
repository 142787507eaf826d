#include "indiff/scenario_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace indiff {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field \"" + key + "\"");
  return j.at(key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

double number_or(const json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return number(j.at(key), where + "." + key);
}

Vec vector_of(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], where);
  return v;
}

std::vector<double> knots_of(const json& j, const std::string& where) {
  const json& k = require(j, "knots", where);
  if (!k.is_array()) throw ConfigError(where + ".knots: expected an array");
  std::vector<double> out;
  for (const auto& x : k) out.push_back(number(x, where + ".knots"));
  return out;
}

ScalarSchedule scalar_schedule(const json& j, const std::string& where) {
  if (j.is_number()) return ScalarSchedule(j.get<double>());
  if (!j.is_object()) throw ConfigError(where + ": expected a number or {knots, values}");
  const json& v = require(j, "values", where);
  if (!v.is_array()) throw ConfigError(where + ".values: expected an array");
  std::vector<double> values;
  for (const auto& x : v) values.push_back(number(x, where + ".values"));
  try {
    return ScalarSchedule(knots_of(j, where), std::move(values));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

VectorSchedule vector_schedule(const json& j, const std::string& where) {
  if (j.is_array()) return VectorSchedule(vector_of(j, where));
  if (!j.is_object()) throw ConfigError(where + ": expected an array or {knots, values}");
  const json& v = require(j, "values", where);
  if (!v.is_array()) throw ConfigError(where + ".values: expected an array of arrays");
  std::vector<Vec> values;
  for (const auto& x : v) values.push_back(vector_of(x, where + ".values"));
  try {
    return VectorSchedule(knots_of(j, where), std::move(values));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

int asset_index(const json& p, int d) {
  const json& a = require(p, "asset", "payoff");
  if (!a.is_number_integer()) throw ConfigError("payoff.asset: expected a 1-based integer");
  const int i = a.get<int>();
  if (i < 1 || i > d) throw ConfigError("payoff.asset: " + std::to_string(i) + " outside 1.." + std::to_string(d));
  return i - 1;
}

json schedule_summary(const ScalarSchedule& s) {
  if (s.is_constant()) return s.values().front();
  return json{{"knots", s.knots()}, {"values", s.values()}};
}

json vector_summary(const VectorSchedule& s) {
  auto as_array = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  if (s.is_constant()) return as_array(s.values().front());
  json values = json::array();
  for (const Vec& v : s.values()) values.push_back(as_array(v));
  return json{{"knots", s.knots()}, {"values", values}};
}

}  // namespace

PayoffSpec payoff_from_json(const json& p, int d) {
  const json& type_j = require(p, "type", "payoff");
  if (!type_j.is_string()) throw ConfigError("payoff.type: expected a string");
  const std::string type = type_j.get<std::string>();
  PayoffSpec spec;
  try {
    if (type == "constant") {
      spec = payoffs::constant(number(require(p, "value", "payoff"), "payoff.value"));
    } else if (type == "capped") {
      spec = payoffs::capped(asset_index(p, d), number(require(p, "cap", "payoff"), "payoff.cap"));
    } else if (type == "put") {
      spec = payoffs::put(asset_index(p, d), number(require(p, "strike", "payoff"), "payoff.strike"));
    } else if (type == "call_spread") {
      spec = payoffs::call_spread(asset_index(p, d), number(require(p, "lower", "payoff"), "payoff.lower"),
                                  number(require(p, "upper", "payoff"), "payoff.upper"));
    } else if (type == "capped_basket") {
      const Vec w = vector_of(require(p, "weights", "payoff"), "payoff.weights");
      if (w.size() != d) throw ConfigError("payoff.weights: needs one weight per asset");
      spec = payoffs::capped_basket(std::vector<double>(w.data(), w.data() + w.size()),
                                    number(require(p, "cap", "payoff"), "payoff.cap"));
    } else if (type == "capped_average") {
      spec = payoffs::capped_average(asset_index(p, d), number(require(p, "cap", "payoff"), "payoff.cap"));
    } else {
      throw ConfigError("payoff.type: unknown payoff \"" + type + "\"");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("payoff: ") + e.what());
  }
  if (p.contains("lipschitz_log")) {
    const json& l = p.at("lipschitz_log");
    if (l.is_null()) {
      spec.lipschitz_log.reset();
    } else {
      spec.lipschitz_log = number(l, "payoff.lipschitz_log");
    }
  }
  return spec;
}

Scenario scenario_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  const json& version = require(j, "schema_version", "config");
  if (!version.is_number_integer() || version.get<int>() != kConfigSchemaVersion) {
    throw ConfigError("config: unsupported schema_version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  Scenario s;
  s.name = j.value("name", std::string("unnamed"));
  s.T = number(require(j, "T", "config"), "T");
  s.gamma = number(require(j, "gamma", "config"), "gamma");
  s.lambda = number(require(j, "lambda", "config"), "lambda");

  const json& index = require(j, "index", "config");
  s.P0 = number_or(index, "P0", 1.0, "index");
  s.mu_P = scalar_schedule(require(index, "mu", "index"), "index.mu");
  s.sigma_P = vector_schedule(require(index, "sigma", "index"), "index.sigma");
  s.d = static_cast<int>(s.sigma_P.dim());

  const json& assets = require(j, "assets", "config");
  if (!assets.is_array() || assets.empty()) throw ConfigError("assets: expected a non-empty array");
  if (static_cast<int>(assets.size()) != s.d) {
    throw ConfigError("assets: " + std::to_string(assets.size()) + " assets but index.sigma has " +
                      std::to_string(s.d) + " components");
  }
  for (std::size_t i = 0; i < assets.size(); ++i) {
    const std::string where = "assets[" + std::to_string(i) + "]";
    AssetCoefficients a;
    a.S0 = number_or(assets[i], "S0", 1.0, where);
    a.mu = scalar_schedule(require(assets[i], "mu", where), where + ".mu");
    a.sigma = vector_schedule(require(assets[i], "sigma", where), where + ".sigma");
    if (a.sigma.dim() != s.d) throw ConfigError(where + ".sigma: expected " + std::to_string(s.d) + " components");
    s.assets.push_back(std::move(a));
  }
  s.payoff = payoff_from_json(require(j, "payoff", "config"), s.d);
  return s;
}

RunSettings run_from_json(const json& j) {
  RunSettings r;
  if (!j.contains("run")) return r;
  const json& run = j.at("run");
  if (!run.is_object()) throw ConfigError("run: expected an object");
  auto count = [&](const char* key, std::size_t fallback) -> std::size_t {
    if (!run.contains(key) || run.at(key).is_null()) return fallback;
    const json& v = run.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(std::string("run.") + key + ": expected a count");
    return v.get<std::size_t>();
  };
  r.paths = count("paths", r.paths);
  r.steps = count("steps", r.steps);
  if (run.contains("seed") && !run.at("seed").is_null()) {
    if (!run.at("seed").is_number_integer()) throw ConfigError("run.seed: expected an integer");
    r.seed = run.at("seed").get<std::uint64_t>();
  }
  if (run.contains("routes")) {
    const json& routes = run.at("routes");
    if (!routes.is_array()) throw ConfigError("run.routes: expected an array");
    std::string joined;
    for (const auto& x : routes) {
      if (!x.is_string()) throw ConfigError("run.routes: expected strings");
      joined += (joined.empty() ? "" : ",") + x.get<std::string>();
    }
    r.routes = parse_routes(joined);
  }
  r.picard_tol = number_or(run, "picard_tol", r.picard_tol, "run");
  r.vanish_tol = number_or(run, "vanish_tol", r.vanish_tol, "run");
  if (run.contains("j_override") && !run.at("j_override").is_null()) r.j_override = count("j_override", 1);
  r.K1 = number_or(run, "K1", r.K1, "run");
  if (run.contains("basis_degree")) {
    if (!run.at("basis_degree").is_number_integer()) throw ConfigError("run.basis_degree: expected an integer");
    r.basis_degree = run.at("basis_degree").get<int>();
  }
  return r;
}

LoadedConfig config_from_json(const json& j) { return {scenario_from_json(j), run_from_json(j)}; }

LoadedConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("config " + file.string() + ": " + e.what());
  }
}

json scenario_summary(const Scenario& s) {
  json assets = json::array();
  for (const auto& a : s.assets) {
    assets.push_back({{"S0", a.S0}, {"mu", schedule_summary(a.mu)}, {"sigma", vector_summary(a.sigma)}});
  }
  return {{"name", s.name},
          {"d", s.d},
          {"T", s.T},
          {"gamma", s.gamma},
          {"lambda", s.lambda},
          {"index", {{"P0", s.P0}, {"mu", schedule_summary(s.mu_P)}, {"sigma", vector_summary(s.sigma_P)}}},
          {"assets", assets},
          {"payoff",
           {{"type", s.payoff.name},
            {"g_max", s.payoff.g_max},
            {"lipschitz_log", s.payoff.lipschitz_log ? json(*s.payoff.lipschitz_log) : json(nullptr)}}}};
}

json ledger_to_json(const ConstantsLedger& led) {
  json j = {{"K1", led.K1},
            {"K2", led.K2},
            {"K3", led.K3 ? json(*led.K3) : json(nullptr)},
            {"K4", led.K4},
            {"theta_max", led.theta_max},
            {"epsilon", led.epsilon},
            {"sharpe_max", led.sharpe_max},
            {"lambda_split_theoretical", led.lambda_split_theoretical},
            {"lambda_split_count", led.lambda_split.size()},
            {"partition", led.partition},
            {"partition_bound", std::isfinite(led.partition_bound) ? json(led.partition_bound) : json(nullptr)},
            {"notes", led.notes}};
  return j;
}

std::vector<std::string> parse_routes(const std::string& comma_list) {
  std::vector<std::string> out;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    item = item.substr(b, e - b + 1);
    if (item != "bsde" && item != "fde" && item != "girsanov" && item != "oracle") {
      throw ConfigError("unknown route \"" + item + "\" (expected bsde, fde, girsanov, oracle)");
    }
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("at least one route is required");
  return out;
}

}  // namespace indiff

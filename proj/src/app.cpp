#include "indiff/app.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace indiff {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool wants(const RunSettings& r, const std::string& route) {
  return std::find(r.routes.begin(), r.routes.end(), route) != r.routes.end();
}

RouteOptions route_options(const ResolvedRun& rr) {
  RouteOptions o;
  o.paths = rr.run.paths;
  o.steps = rr.run.steps;
  o.seed = rr.seed;
  o.picard_tol = rr.run.picard_tol;
  o.vanish_tol = rr.run.vanish_tol;
  o.j_override = rr.run.j_override;
  o.basis.degree = rr.run.basis_degree;
  return o;
}

ConstantsLedger ledger_for(const ResolvedRun& rr) {
  ValidationOptions vo;
  vo.K1 = rr.run.K1;
  vo.lambda_split_override = rr.run.j_override;
  return validate_scenario(rr.scenario, vo);
}

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Numbers must be finite; anything else becomes null with a flag.
json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << text;
}

void write_hedge_csv(const std::filesystem::path& file, const TimeGrid& grid, const PricingResult& r) {
  std::string s = "k,t,hedge_mean,hedge_stderr,strategy_mean,strategy_stderr\n";
  for (std::size_t k = 0; k < r.hedge_mean.size(); ++k) {
    s += std::to_string(k) + "," + g17(grid.time(k)) + "," + g17(r.hedge_mean[k]) + "," + g17(r.hedge_stderr[k]) +
         "," + g17(r.strategy_mean[k]) + "," + g17(r.strategy_stderr[k]) + "\n";
  }
  write_text(file, s);
}

void write_history_csv(const std::filesystem::path& file, const std::vector<IterationRecord>& history,
                       bool with_vanish) {
  std::string s = with_vanish ? "block,iteration,S_norm_diff,ratio,vanish_residual\n"
                              : "block,iteration,norm_diff,ratio\n";
  for (const IterationRecord& h : history) {
    s += std::to_string(h.block) + "," + std::to_string(h.iteration) + "," + g17(h.norm_diff) + "," + g17(h.ratio);
    if (with_vanish) s += "," + g17(h.vanish_residual);
    s += "\n";
  }
  write_text(file, s);
}

double max_ratio(const std::vector<IterationRecord>& history) {
  double m = 0.0;
  for (const IterationRecord& h : history) m = std::max(m, h.ratio);
  return m;
}

json route_json(const PricingResult& r, double seconds) {
  json diag = json::object();
  for (const auto& [k, v] : r.diagnostics) diag[k] = finite_or_null(v);
  return {{"price", r.price},
          {"stderr", r.price_stderr},
          {"y0_lambda", r.y0_lambda},
          {"y0_zero", r.y0_zero},
          {"hedge_t0", r.hedge_mean.empty() ? 0.0 : r.hedge_mean.front()},
          {"strategy_t0", r.strategy_mean.empty() ? 0.0 : r.strategy_mean.front()},
          {"iterations", r.history.size()},
          {"runtime_seconds", seconds},
          {"diagnostics", diag}};
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json run_json(const ResolvedRun& rr) {
  return {{"paths", rr.run.paths},
          {"steps", rr.run.steps},
          {"seed", rr.seed},
          {"seed_source", rr.seed_source},
          {"routes", rr.run.routes},
          {"picard_tol", rr.run.picard_tol},
          {"vanish_tol", rr.run.vanish_tol},
          {"j_override", rr.run.j_override ? json(*rr.run.j_override) : json(nullptr)},
          {"K1", rr.run.K1},
          {"basis_degree", rr.run.basis_degree}};
}

/// Replaces non-finite numbers anywhere in `j` by null and reports whether any were found.
bool scrub_non_finite(json& j) {
  bool found = false;
  if (j.is_number_float() && !std::isfinite(j.get<double>())) {
    j = nullptr;
    return true;
  }
  if (j.is_structured()) {
    for (auto& x : j) found = scrub_non_finite(x) || found;
  }
  return found;
}

}  // namespace

ResolvedRun resolve_run(const CommandOptions& o) {
  ResolvedRun rr;
  if (o.config) {
    LoadedConfig c = load_config(*o.config);
    rr.scenario = std::move(c.scenario);
    rr.run = std::move(c.run);
  } else {
    rr.scenario = reference_scenario();
  }
  if (o.paths) rr.run.paths = *o.paths;
  if (o.steps) rr.run.steps = *o.steps;
  if (o.routes) rr.run.routes = parse_routes(*o.routes);
  if (o.j_override) rr.run.j_override = *o.j_override;
  if (rr.run.paths < 1000) throw ConfigError("paths must be at least 1000");
  if (rr.run.steps < 10) throw ConfigError("steps must be at least 10");
  if (rr.run.routes.empty()) throw ConfigError("at least one route is required");
  if (rr.run.j_override && *rr.run.j_override == 0) throw ConfigError("j_override must be positive");
  if (!(rr.run.picard_tol > 0.0) || !(rr.run.vanish_tol > 0.0)) throw ConfigError("tolerances must be positive");
  if (rr.run.basis_degree < 1 || rr.run.basis_degree > 4) throw ConfigError("basis_degree must be in 1..4");

  if (o.seed) {
    rr.seed = *o.seed;
    rr.seed_source = "cli";
  } else if (rr.run.seed) {
    rr.seed = *rr.run.seed;
    rr.seed_source = "config";
  } else if (const char* env = std::getenv("INDIFF_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError(std::string("INDIFF_SEED is not an integer: ") + env);
    rr.seed = v;
    rr.seed_source = "env";
  } else {
    rr.seed = kDefaultSeed;
    rr.seed_source = "default";
  }
  return rr;
}

int run_price(const CommandOptions& options, std::ostream& log) {
  const ResolvedRun rr = resolve_run(options);
  const ConstantsLedger ledger = ledger_for(rr);
  if (wants(rr.run, "girsanov")) (void)build_partition(ledger, rr.scenario.T);
  std::filesystem::create_directories(options.out);
  const RouteOptions ro = route_options(rr);
  const TimeGrid uniform = TimeGrid::uniform(rr.scenario.T, ro.steps);

  json routes = json::object();
  json runtimes = json::object();
  std::map<std::string, double> prices;
  if (wants(rr.run, "bsde")) {
    const auto start = Clock::now();
    const PricingResult r = run_bsde_route(rr.scenario, ledger, ro);
    const double secs = seconds_since(start);
    routes["bsde"] = route_json(r, secs);
    runtimes["bsde"] = secs;
    prices["bsde"] = r.price;
    write_hedge_csv(options.out / "bsde_hedge.csv", uniform, r);
    log << "bsde      " << g17(r.price) << " +- " << r.price_stderr << "\n";
  }
  if (wants(rr.run, "fde")) {
    const auto start = Clock::now();
    const PricingResult r = run_fde_route(rr.scenario, ledger, ro);
    const double secs = seconds_since(start);
    routes["fde"] = route_json(r, secs);
    runtimes["fde"] = secs;
    prices["fde"] = r.price;
    write_hedge_csv(options.out / "fde_hedge.csv", uniform, r);
    write_history_csv(options.out / "fde_convergence.csv", r.history, false);
    log << "fde       " << g17(r.price) << " +- " << r.price_stderr << "\n";
  }
  if (wants(rr.run, "girsanov")) {
    const auto start = Clock::now();
    const GirsanovResult g = run_girsanov_route(rr.scenario, ledger, ro);
    const double secs = seconds_since(start);
    routes["girsanov"] = route_json(g.pricing, secs);
    routes["girsanov"]["blocks"] = g.partition.blocks();
    routes["girsanov"]["partition"] = g.partition.boundaries;
    runtimes["girsanov"] = secs;
    prices["girsanov"] = g.pricing.price;
    write_hedge_csv(options.out / "girsanov_hedge.csv", partition_grid(g.partition, ro.steps), g.pricing);
    write_history_csv(options.out / "girsanov_blocks.csv", g.history, true);
    log << "girsanov  " << g17(g.pricing.price) << " +- " << g.pricing.price_stderr << "\n";
  }
  std::optional<double> oracle_price;
  if (wants(rr.run, "oracle")) {
    const auto start = Clock::now();
    const auto oracle = oracle_route(rr.scenario);
    const double secs = seconds_since(start);
    runtimes["oracle"] = secs;
    if (oracle) {
      routes["oracle"] = {{"price", oracle->price}, {"method", oracle->method}, {"runtime_seconds", secs}};
      oracle_price = oracle->price;
      log << "oracle    " << g17(oracle->price) << " (" << oracle->method << ")\n";
    } else {
      routes["oracle"] = {{"price", nullptr}, {"reason", "scenario does not reduce to one dimension"}};
      log << "oracle    not available for this scenario\n";
    }
  }

  json gaps = json::object();
  for (auto a = prices.begin(); a != prices.end(); ++a) {
    if (oracle_price) {
      gaps[a->first + "_vs_oracle"] = {{"absolute", a->second - *oracle_price},
                                       {"relative", (a->second - *oracle_price) / std::abs(*oracle_price)}};
    }
    for (auto b = std::next(a); b != prices.end(); ++b) gaps[a->first + "_vs_" + b->first] = a->second - b->second;
  }

  json results = {{"schema_version", kResultsSchemaVersion},
                  {"scenario", scenario_summary(rr.scenario)},
                  {"run", run_json(rr)},
                  {"ledger", ledger_to_json(ledger)},
                  {"routes", routes},
                  {"gaps", gaps},
                  {"run_info", {{"timestamp", utc_timestamp()}, {"runtime_seconds", runtimes}}}};
  if (scrub_non_finite(results)) results["non_finite_replaced"] = true;
  write_text(options.out / "results.json", results.dump(2) + "\n");
  log << "wrote " << (options.out / "results.json").string() << "\n";
  return kExitOk;
}

int run_converge(const CommandOptions& options, std::ostream& log) {
  const ResolvedRun rr = resolve_run(options);
  const ConstantsLedger ledger = ledger_for(rr);
  std::filesystem::create_directories(options.out);
  const RouteOptions ro = route_options(rr);
  const TimeGrid grid = TimeGrid::uniform(rr.scenario.T, ro.steps);
  const BrownianBatch b = simulate_brownian(grid, static_cast<std::size_t>(rr.scenario.d), ro.paths, ro.seed);
  const AssetPaths paths = evolve_assets(rr.scenario, grid, b);
  const RegressionGrid reg = build_regression_grid(paths, ro.basis);
  FdeOptions fo;
  fo.picard.tol = ro.picard_tol;
  fo.solver.basis = ro.basis;

  json summary = {{"schema_version", kResultsSchemaVersion}, {"run", run_json(rr)}};
  double worst = 0.0;

  const FdeSolution full = picard_solve_fde(rr.scenario, grid, paths, b, rr.scenario.lambda, reg, ledger, fo);
  write_history_csv(options.out / "fde_convergence.csv", full.v.history, false);
  summary["picard"] = {{"iterations", full.v.history.size()},
                       {"max_ratio", max_ratio(full.v.history)},
                       {"converged", full.v.converged}};
  worst = std::max(worst, max_ratio(full.v.history));
  log << "picard        sweeps " << full.v.history.size() << " max ratio " << max_ratio(full.v.history) << "\n";

  const PerturbationResult pr =
      solve_perturbation_scheme(rr.scenario, grid, b, paths, standardizations(reg), ledger, rr.run.j_override, fo);
  write_history_csv(options.out / "perturbation_convergence.csv", pr.history, false);
  summary["perturbation"] = {{"blocks", pr.blocks}, {"max_ratio", pr.max_ratio}};
  worst = std::max(worst, pr.max_ratio);
  log << "perturbation  blocks " << pr.blocks << " max ratio " << pr.max_ratio << "\n";

  if (ledger.K3) {
    const GirsanovResult g = run_girsanov_route(rr.scenario, ledger, ro);
    write_history_csv(options.out / "girsanov_blocks.csv", g.history, true);
    summary["girsanov"] = {{"blocks", g.partition.blocks()},
                           {"max_ratio", g.max_ratio},
                           {"vanish_residual", g.vanish_residual}};
    worst = std::max(worst, g.max_ratio);
    log << "girsanov      blocks " << g.partition.blocks() << " max ratio " << g.max_ratio << "\n";
  } else {
    summary["girsanov"] = {{"skipped", "payoff has no log-Lipschitz constant"}};
    log << "girsanov      skipped: payoff has no log-Lipschitz constant\n";
  }
  summary["max_ratio"] = worst;
  scrub_non_finite(summary);
  write_text(options.out / "converge.json", summary.dump(2) + "\n");
  if (worst > 0.9) {
    log << "contraction ratio " << worst << " exceeds 0.9\n";
    return kExitConvergence;
  }
  return kExitOk;
}

int run_validate(const CommandOptions& options, std::ostream& log) {
  const ResolvedRun rr = resolve_run(options);
  ValidationSizes sizes;
  if (options.paths) sizes.oracle_paths = *options.paths;
  sizes.steps = rr.run.steps;
  sizes.seed = rr.seed;
  sizes.j_override = rr.run.j_override;
  sizes.picard_tol = rr.run.picard_tol;
  sizes.vanish_tol = rr.run.vanish_tol;
  sizes.K1 = rr.run.K1;
  sizes.basis.degree = rr.run.basis_degree;
  std::filesystem::create_directories(options.out);
  const auto results =
      run_acceptance_suite(rr.scenario, sizes, [&log](const CriterionResult& r) { log << format_criterion(r) << "\n"; });
  json rows = json::array();
  bool failed = false;
  for (const CriterionResult& r : results) {
    rows.push_back({{"id", r.id}, {"name", r.name}, {"status", status_label(r.status)}, {"detail", r.detail}});
    failed = failed || r.status == CriterionStatus::fail;
  }
  json out = {{"schema_version", kResultsSchemaVersion}, {"run", run_json(rr)}, {"criteria", rows}};
  write_text(options.out / "validation.json", out.dump(2) + "\n");
  return failed ? kExitFailure : kExitOk;
}

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ScenarioError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace indiff

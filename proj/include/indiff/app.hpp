#pragma once

#include "indiff/scenario_io.hpp"
#include "indiff/validation.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

namespace indiff {

/// Command line values; each one set here overrides the config file.
struct CommandOptions {
  std::optional<std::filesystem::path> config;  // reference scenario when absent
  std::filesystem::path out = "indiff_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> steps;
  std::optional<std::string> routes;
  std::optional<std::size_t> j_override;
};

inline constexpr std::uint64_t kDefaultSeed = 42;

struct ResolvedRun {
  Scenario scenario;
  RunSettings run;
  std::uint64_t seed = kDefaultSeed;
  std::string seed_source;  // cli, config, env or default
};

/// Merges config and flags. Seed order: flag, config, INDIFF_SEED, default.
/// Throws ConfigError for paths < 1000, steps < 10 or bad overrides.
ResolvedRun resolve_run(const CommandOptions& options);

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitInput = 2, kExitConvergence = 3 };

/// Writes results.json and per-route CSVs into the output directory.
int run_price(const CommandOptions& options, std::ostream& log);

/// Contraction tables for the Picard, perturbation and forward-block schemes.
/// Exit 3 when any ratio exceeds 0.9.
int run_converge(const CommandOptions& options, std::ostream& log);

/// Acceptance criteria on the configured scenario; exit 1 on any failure.
int run_validate(const CommandOptions& options, std::ostream& log);

/// Runs `body`, mapping ConfigError and ScenarioError to 2 and
/// ConvergenceError to 3 with a one-line message on `err`.
int guarded(const std::function<int()>& body, std::ostream& err);

}  // namespace indiff

#include "indiff/app.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Utility indifference prices under a non-traded index"};
  app.require_subcommand(1);

  indiff::CommandOptions options;
  std::string config, out = "indiff_out", routes;
  std::uint64_t seed = 0;
  std::size_t paths = 0, steps = 0, j_override = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Scenario config (JSON); reference scenario when omitted")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Random seed (else config, then INDIFF_SEED, then 42)");
    sub->add_option("--paths", paths, "Monte Carlo paths");
    sub->add_option("--steps", steps, "Time steps");
    sub->add_option("--routes", routes, "Comma list of bsde, fde, girsanov, oracle");
    sub->add_option("--j-override", j_override, "Number of lambda blocks for the perturbation scheme");
  };
  CLI::App* price = app.add_subcommand("price", "Price, hedge and diagnostics per route");
  CLI::App* converge = app.add_subcommand("converge", "Contraction tables of the fixed-point schemes");
  CLI::App* validate = app.add_subcommand("validate", "Acceptance criteria on the scenario");
  for (CLI::App* sub : {price, converge, validate}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : indiff::kExitInput;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (!config.empty()) options.config = config;
  options.out = out;
  if (sub->count("--seed")) options.seed = seed;
  if (sub->count("--paths")) options.paths = paths;
  if (sub->count("--steps")) options.steps = steps;
  if (sub->count("--routes")) options.routes = routes;
  if (sub->count("--j-override")) options.j_override = j_override;

  return indiff::guarded(
      [&] {
        if (sub == price) return indiff::run_price(options, std::cout);
        if (sub == converge) return indiff::run_converge(options, std::cout);
        return indiff::run_validate(options, std::cout);
      },
      std::cerr);
}

// bregman-market: solve, trace, and check budget additivity for scenario files.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11/CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "bregman_market/commands.hpp"

namespace bm = bregman_market;

namespace {

std::vector<double> parse_budget_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    out.push_back(v);
  }
  return out;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("bregman-market");
  logger->set_pattern("%^%l%$: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("BREGMAN_MARKET_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Budget-constrained trading in cost-function prediction markets"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string budgets_text;
  bm::CommandOptions opt;
  std::uint64_t seed = 0;
  double tol = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_flag("--json", opt.json, "Machine-readable JSON output");
  };

  auto* solve = app.add_subcommand("solve", "Optimal trade for each budget (JSON lines)");
  add_common(solve);
  solve->add_option("--budgets", budgets_text, "Comma-separated budgets overriding the scenario");

  auto* path = app.add_subcommand("path", "Trace the solution path from the initial price to the belief");
  add_common(path);
  path->add_option("--samples", opt.samples, "Samples per segment")->check(CLI::PositiveNumber);
  path->add_option("--csv-out", opt.csv_out, "Write path samples as CSV");

  auto* additivity = app.add_subcommand("additivity", "Compare sequential and combined trades over the budgets");
  add_common(additivity);
  additivity->add_option("--budgets", budgets_text, "Comma-separated budgets overriding the scenario");
  auto* additivity_tol = additivity->add_option("--tol", tol, "Price gap tolerance");

  auto* certify = app.add_subcommand("certify", "Check sufficient conditions for budget additivity");
  add_common(certify);

  auto* search = app.add_subcommand("search", "Seeded random search for non-additive instances");
  add_common(search);
  search->add_option("--trials", opt.trials, "Number of random trials")->check(CLI::PositiveNumber);
  auto* search_seed = search->add_option("--seed", seed, "Random seed (defaults to the scenario seed)");
  auto* search_tol = search->add_option("--tol", tol, "Price gap tolerance");
  search->add_option("--workers", opt.workers, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bm::exit_invalid;
  }

  if (!budgets_text.empty()) {
    try {
      opt.budgets = parse_budget_list(budgets_text);
    } catch (const std::exception&) {
      spdlog::error("--budgets: expected a comma-separated list of numbers");
      return bm::exit_invalid;
    }
  }
  if (search_seed->count()) opt.seed = seed;
  if (additivity_tol->count() || search_tol->count()) opt.tol = tol;

  bm::Scenario scenario;
  try {
    scenario = bm::load_scenario(scenario_path);
  } catch (const bm::Error& e) {
    spdlog::error("{}", e.what());
    return bm::exit_invalid;
  }

  bm::CommandIo io{std::cout, [](const std::string& m) { spdlog::warn("{}", m); },
                   [](const std::string& m) { spdlog::error("{}", m); }};
  spdlog::debug("scenario {} loaded from {}", scenario.name, scenario_path);

  if (solve->parsed()) return bm::run_solve(scenario, opt, io);
  if (path->parsed()) return bm::run_path(scenario, opt, io);
  if (additivity->parsed()) return bm::run_additivity(scenario, opt, io);
  if (certify->parsed()) return bm::run_certify(scenario, opt, io);
  return bm::run_search(scenario, opt, io);
}

// Experiment runner: loads a JSON config (or builds one from flags), drives
// the library, and writes a CSV result file plus a JSON summary. Exit codes:
// 0 success, 2 config error, 3 numeric failure.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dequant/experiment.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> samples;
  std::optional<int> dim;
  std::optional<int> threads;
  std::optional<int> pairs;
  std::optional<int> order;
  std::optional<int> higher_n;
  std::optional<double> alpha;
  std::string alpha_grid;
  std::string c_grid;
  std::optional<std::string> functional_file;
  std::optional<std::string> functional_preset;
  std::optional<std::string> density_preset;
  std::optional<double> half_length;
  std::optional<int> points;
  std::optional<double> x0;
  std::optional<std::string> profile;
  std::optional<int> refinements;
};

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw dequant::ConfigError("bad grid value '" + item + "'");
    }
  }
  if (out.empty()) throw dequant::ConfigError("empty grid");
  return out;
}

void add_common_flags(CLI::App* app, Overrides& ov) {
  app->add_option("--config", ov.config_path, "JSON config file");
  app->add_option("--out", ov.out, "result CSV path (JSON summary written alongside)");
  app->add_option("--seed", ov.seed, "RNG seed");
  app->add_option("--samples", ov.samples, "Monte Carlo sample budget");
  app->add_option("--dim", ov.dim, "state space dimension");
  app->add_option("--threads", ov.threads, "worker threads (results do not depend on this)");
  app->add_option("--alpha", ov.alpha, "single dispersion value");
  app->add_option("--alpha-grid", ov.alpha_grid, "comma-separated decreasing alphas");
  app->add_option("--functional-file", ov.functional_file, "functional definition file");
  app->add_option("--functional-preset", ov.functional_preset,
                  "quadratic-random | quartic-random | quadratic-quartic-random | "
                  "quadratic-quartic-sextic-random");
  app->add_option("--density-preset", ov.density_preset,
                  "maximally-mixed | identity | random-psd | pure-random");
}

dequant::ExperimentConfig build_config(dequant::Command cmd, const Overrides& ov) {
  dequant::ExperimentConfig cfg;
  if (!ov.config_path.empty()) cfg = dequant::load_config_file(ov.config_path);
  cfg.command = cmd;
  if (ov.out) cfg.out = *ov.out;
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.samples) cfg.samples = *ov.samples;
  if (ov.dim) cfg.dim = *ov.dim;
  if (ov.threads) cfg.threads = *ov.threads;
  if (ov.pairs) cfg.pairs = *ov.pairs;
  if (ov.order) cfg.order = *ov.order;
  if (ov.higher_n) cfg.higher_n = *ov.higher_n;
  if (ov.alpha) cfg.alpha_grid = {*ov.alpha};
  if (!ov.alpha_grid.empty()) cfg.alpha_grid = parse_grid(ov.alpha_grid);
  if (!ov.c_grid.empty()) cfg.c_grid = parse_grid(ov.c_grid);
  if (ov.functional_file) cfg.functional_file = *ov.functional_file;
  if (ov.functional_preset) cfg.functional_preset = *ov.functional_preset;
  if (ov.density_preset) cfg.density_preset = *ov.density_preset;
  if (ov.half_length) cfg.grid.half_length = *ov.half_length;
  if (ov.points) cfg.grid.points = *ov.points;
  if (ov.x0) cfg.grid.x0 = *ov.x0;
  if (ov.profile) cfg.grid.profile = *ov.profile;
  if (ov.refinements) cfg.grid.refinements = *ov.refinements;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-average <-> quantum-trace experiment runner"};
  app.require_subcommand(0, 1);

  Overrides ov;
  add_common_flags(&app, ov);

  auto* verify = app.add_subcommand("verify-trace", "exact and Monte Carlo trace formula checks");
  verify->add_option("--pairs", ov.pairs, "number of random (A, B) pairs");
  add_common_flags(verify, ov);

  auto* scan = app.add_subcommand("asymptotic-scan",
                                  "classical average vs alpha * quantum trace over an alpha grid");
  add_common_flags(scan, ov);

  auto* wick = app.add_subcommand("wick-check", "Gaussian moment and matching-count checks");
  wick->add_option("--order", ov.order, "highest moment order");
  add_common_flags(wick, ov);

  auto* pure = app.add_subcommand("pure-state",
                                  "one-dimensional Gaussian mixtures and background-field projections");
  add_common_flags(pure, ov);

  auto* higher = app.add_subcommand("higher-order", "generalized trace formula of order n");
  higher->add_option("--n", ov.higher_n, "expansion order n");
  add_common_flags(higher, ov);

  auto* cheb = app.add_subcommand("chebyshov", "tail bound checks over an (alpha, C) grid");
  cheb->add_option("--c-grid", ov.c_grid, "comma-separated thresholds");
  add_common_flags(cheb, ov);

  auto* fieldgrid = app.add_subcommand("fieldgrid", "interval-discretized observables");
  fieldgrid->add_option("--half-length", ov.half_length, "interval half length L");
  fieldgrid->add_option("--points", ov.points, "base grid points");
  fieldgrid->add_option("--x0", ov.x0, "marked point for the delta observable");
  fieldgrid->add_option("--profile", ov.profile, "uniform | gaussian-profile | point");
  fieldgrid->add_option("--refinements", ov.refinements, "number of grid refinements");
  add_common_flags(fieldgrid, ov);

  CLI11_PARSE(app, argc, argv);

  try {
    dequant::Command cmd;
    if (verify->parsed()) {
      cmd = dequant::Command::kVerifyTrace;
    } else if (scan->parsed()) {
      cmd = dequant::Command::kAsymptoticScan;
    } else if (wick->parsed()) {
      cmd = dequant::Command::kWickCheck;
    } else if (pure->parsed()) {
      cmd = dequant::Command::kPureState;
    } else if (higher->parsed()) {
      cmd = dequant::Command::kHigherOrder;
    } else if (cheb->parsed()) {
      cmd = dequant::Command::kChebyshov;
    } else if (fieldgrid->parsed()) {
      cmd = dequant::Command::kFieldGrid;
    } else if (!ov.config_path.empty()) {
      cmd = dequant::load_config_file(ov.config_path).command;
    } else {
      std::cerr << "error[config] no subcommand and no --config given\n";
      return 2;
    }
    const dequant::ExperimentConfig cfg = build_config(cmd, ov);
    return dequant::run(cfg, std::cout, std::cerr);
  } catch (const dequant::ConfigError& e) {
    std::cerr << "error[config] " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error[config] " << e.what() << "\n";
    return 2;
  }
}

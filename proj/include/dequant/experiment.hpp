#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dequant/dequantize.hpp"
#include "dequant/field_grid.hpp"
#include "dequant/functional.hpp"
#include "dequant/gaussian.hpp"
#include "dequant/white_noise.hpp"
#include "dequant/wick.hpp"

namespace dequant {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Command {
  kVerifyTrace,
  kAsymptoticScan,
  kWickCheck,
  kPureState,
  kHigherOrder,
  kChebyshov,
  kFieldGrid,
};

inline const char* command_name(Command c) {
  switch (c) {
    case Command::kVerifyTrace: return "verify-trace";
    case Command::kAsymptoticScan: return "asymptotic-scan";
    case Command::kWickCheck: return "wick-check";
    case Command::kPureState: return "pure-state";
    case Command::kHigherOrder: return "higher-order";
    case Command::kChebyshov: return "chebyshov";
    case Command::kFieldGrid: return "fieldgrid";
  }
  return "?";
}

inline Command parse_command(const std::string& name) {
  for (Command c : {Command::kVerifyTrace, Command::kAsymptoticScan,
                    Command::kWickCheck, Command::kPureState,
                    Command::kHigherOrder, Command::kChebyshov,
                    Command::kFieldGrid}) {
    if (name == command_name(c)) return c;
  }
  throw ConfigError("unknown command '" + name + "'");
}

struct GridConfig {
  double half_length = 1.0;
  int points = 33;
  double x0 = 0.25;
  std::string profile = "gaussian-profile";  // uniform | gaussian-profile | point
  double sigma = 0.0;                        // 0: half_length / 4
  int refinements = 3;
};

struct ExperimentConfig {
  Command command = Command::kVerifyTrace;
  int dim = 2;
  std::vector<double> alpha_grid;  // empty: default geometric grid
  std::uint64_t seed = 1;
  std::uint64_t samples = 0;  // Monte Carlo budget; 0 = exact paths only
  int threads = 0;
  int pairs = 20;     // verify-trace
  int order = 4;      // wick-check: highest moment order
  int higher_n = 2;   // higher-order: expansion order n
  std::vector<double> c_grid;  // chebyshov thresholds
  std::string functional_text;
  std::string functional_file;
  std::string functional_preset;  // see resolve_functional
  std::string density_preset = "maximally-mixed";
  std::vector<std::array<double, 3>> density_entries;  // (i, j, value)
  GridConfig grid;
  std::string out = "results.csv";
};

// alpha in {10^-1, 10^-1.5, ..., 10^-4}; the covariance family is B = alpha D
// with D held fixed.
inline std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i < 7; ++i) g.push_back(std::pow(10.0, -1.0 - 0.5 * i));
  return g;
}

inline std::vector<double> default_c_grid() { return {0.05, 0.1, 0.2, 0.5, 1.0}; }

inline constexpr double kDefaultAlpha = 0.01;
inline constexpr std::uint64_t kDefaultMcSamples = 100000;

// ---------------------------------------------------------------------------
// config I/O

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    if (j.contains("command")) cfg.command = parse_command(j.at("command").get<std::string>());
    if (j.contains("dim")) cfg.dim = j.at("dim").get<int>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("samples")) cfg.samples = j.at("samples").get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    if (j.contains("pairs")) cfg.pairs = j.at("pairs").get<int>();
    if (j.contains("order")) cfg.order = j.at("order").get<int>();
    if (j.contains("higher_n")) cfg.higher_n = j.at("higher_n").get<int>();
    if (j.contains("alpha")) cfg.alpha_grid = {j.at("alpha").get<double>()};
    if (j.contains("alpha_grid")) cfg.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
    if (j.contains("c_grid")) cfg.c_grid = j.at("c_grid").get<std::vector<double>>();
    if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
    if (j.contains("functional")) {
      const auto& f = j.at("functional");
      if (f.contains("file")) cfg.functional_file = f.at("file").get<std::string>();
      if (f.contains("inline")) cfg.functional_text = f.at("inline").get<std::string>();
      if (f.contains("preset")) cfg.functional_preset = f.at("preset").get<std::string>();
    }
    if (j.contains("density")) {
      const auto& d = j.at("density");
      if (d.contains("preset")) cfg.density_preset = d.at("preset").get<std::string>();
      if (d.contains("entries")) {
        cfg.density_preset = "entries";
        for (const auto& e : d.at("entries")) {
          if (!e.is_array() || e.size() != 3) throw ConfigError("density entry must be [i, j, value]");
          cfg.density_entries.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
        }
      }
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      if (g.contains("half_length")) cfg.grid.half_length = g.at("half_length").get<double>();
      if (g.contains("points")) cfg.grid.points = g.at("points").get<int>();
      if (g.contains("x0")) cfg.grid.x0 = g.at("x0").get<double>();
      if (g.contains("profile")) cfg.grid.profile = g.at("profile").get<std::string>();
      if (g.contains("sigma")) cfg.grid.sigma = g.at("sigma").get<double>();
      if (g.contains("refinements")) cfg.grid.refinements = g.at("refinements").get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline bool command_requires_mc(Command c) {
  return c == Command::kPureState || c == Command::kChebyshov;
}

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.dim < 1) throw ConfigError("dim must be >= 1");
  if (cfg.out.empty()) throw ConfigError("output path must not be empty");
  if (!cfg.alpha_grid.empty()) {
    for (double a : cfg.alpha_grid) {
      if (!(a > 0.0)) throw ConfigError("alpha grid values must be positive");
    }
    for (std::size_t i = 1; i < cfg.alpha_grid.size(); ++i) {
      if (!(cfg.alpha_grid[i] < cfg.alpha_grid[i - 1])) {
        throw ConfigError("alpha grid must be strictly decreasing");
      }
    }
  }
  if (cfg.samples > 0 && cfg.samples < 1000) {
    throw ConfigError("sample budget must be at least 1000 for Monte Carlo commands");
  }
  if (!cfg.functional_file.empty() && !std::filesystem::exists(cfg.functional_file)) {
    throw ConfigError("functional file '" + cfg.functional_file + "' does not exist");
  }
  if (cfg.pairs < 1) throw ConfigError("pairs must be >= 1");
  if (cfg.order < 1 || cfg.order > kMaxMomentOrder) {
    throw ConfigError("order must be in [1, " + std::to_string(kMaxMomentOrder) + "]");
  }
  if (cfg.higher_n < 1 || 2 * cfg.higher_n > kMaxFormDegree) {
    throw ConfigError("higher_n must be in [1, " + std::to_string(kMaxFormDegree / 2) + "]");
  }
  for (double c : cfg.c_grid) {
    if (!(c > 0.0)) throw ConfigError("c grid values must be positive");
  }
  if (cfg.grid.points < 2) throw ConfigError("grid points must be >= 2");
  if (cfg.grid.refinements < 2) throw ConfigError("grid refinements must be >= 2");
  if (std::abs(cfg.grid.x0) > cfg.grid.half_length) {
    throw ConfigError("x0 must lie inside [-half_length, half_length]");
  }
}

// ---------------------------------------------------------------------------
// seeded object construction

namespace detail {

inline SymmetricMatrix random_symmetric(int dim, Rng& rng) {
  SymmetricMatrix a(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) a.set(i, j, rng.normal());
  return a;
}

inline SymmetricMatrix random_psd(int dim, Rng& rng) {
  Eigen::MatrixXd g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = rng.normal();
  const Eigen::MatrixXd b = (g * g.transpose()) / static_cast<double>(dim);
  return SymmetricMatrix::from_dense(b);
}

inline SymmetricMatrix random_density_matrix(int dim, Rng& rng) {
  SymmetricMatrix b = random_psd(dim, rng);
  b *= 1.0 / b.trace();
  return b;
}

inline Eigen::VectorXd random_unit(int dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  double n = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    n = v.norm();
  } while (n == 0.0);
  return v / n;
}

}  // namespace detail

// Density/covariance presets. "identity" is for raw moment checks; the other
// presets produce unit-trace matrices.
inline SymmetricMatrix resolve_density_matrix(const ExperimentConfig& cfg, Rng& rng) {
  const std::string& p = cfg.density_preset;
  if (p == "maximally-mixed") {
    SymmetricMatrix m(cfg.dim);
    for (int i = 0; i < cfg.dim; ++i) m.set(i, i, 1.0 / cfg.dim);
    return m;
  }
  if (p == "identity") return SymmetricMatrix::identity(cfg.dim);
  if (p == "random-psd") return detail::random_density_matrix(cfg.dim, rng);
  if (p == "pure-random") return SymmetricMatrix::outer(detail::random_unit(cfg.dim, rng));
  if (p == "entries") {
    SymmetricMatrix m(cfg.dim);
    for (const auto& e : cfg.density_entries) {
      const int i = static_cast<int>(e[0]);
      const int j = static_cast<int>(e[1]);
      if (i < 0 || j < 0 || i >= cfg.dim || j >= cfg.dim) {
        throw ConfigError("density entry index out of range");
      }
      m.set(i, j, e[2]);
    }
    return m;
  }
  throw ConfigError("unknown density preset '" + p + "'");
}

inline DensityOperator resolve_density(const ExperimentConfig& cfg, Rng& rng) {
  try {
    return DensityOperator(resolve_density_matrix(cfg, rng));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("density matrix rejected: ") + e.what());
  }
}

// Functional source precedence: file, inline text, preset.
inline AnalyticFunctional resolve_functional(const ExperimentConfig& cfg, Rng& rng) {
  try {
    if (!cfg.functional_file.empty()) {
      std::ifstream in(cfg.functional_file);
      if (!in) throw ConfigError("cannot open functional file");
      AnalyticFunctional f = parse_functional(in);
      if (f.dim() != cfg.dim) {
        throw ConfigError("functional dim " + std::to_string(f.dim()) +
                          " does not match config dim " + std::to_string(cfg.dim));
      }
      return f;
    }
    if (!cfg.functional_text.empty()) {
      AnalyticFunctional f = parse_functional(cfg.functional_text);
      if (f.dim() != cfg.dim) throw ConfigError("inline functional dim mismatch");
      return f;
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("functional definition rejected: ") + e.what());
  }

  const std::string preset =
      cfg.functional_preset.empty() ? "quadratic-quartic-random" : cfg.functional_preset;
  AnalyticFunctional f(cfg.dim);
  const SymmetricForm q2 = SymmetricForm::from_matrix(detail::random_symmetric(cfg.dim, rng));
  if (preset == "quadratic-random") {
    f.add_polynomial(q2);
    return f;
  }
  if (preset == "quartic-random") {
    f.add_polynomial(sym_product(q2, q2));
    return f;
  }
  if (preset == "quadratic-quartic-random") {
    const SymmetricForm q2b = SymmetricForm::from_matrix(detail::random_symmetric(cfg.dim, rng));
    f.add_polynomial(q2);
    f.add_polynomial(sym_product(q2b, q2b));
    return f;
  }
  if (preset == "quadratic-quartic-sextic-random") {
    const SymmetricForm q2b = SymmetricForm::from_matrix(detail::random_symmetric(cfg.dim, rng));
    const SymmetricForm q2c = SymmetricForm::from_matrix(detail::random_symmetric(cfg.dim, rng));
    f.add_polynomial(q2);
    f.add_polynomial(sym_product(q2b, q2b));
    f.add_polynomial(sym_product(sym_product(q2c, q2c), q2c));
    return f;
  }
  throw ConfigError("unknown functional preset '" + preset + "'");
}

// ---------------------------------------------------------------------------
// result rows

struct ResultRow {
  std::string command;
  std::optional<double> alpha;
  std::optional<double> exact_value;
  std::optional<double> predicted_value;
  std::optional<double> residual;
  std::optional<double> mc_estimate;
  std::optional<double> mc_stderr;
  std::optional<double> slope;
  std::uint64_t seed = 0;
};

struct RunResult {
  std::vector<ResultRow> rows;
  nlohmann::ordered_json notes;  // command-specific extras for the JSON summary
};

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void check_finite(const ResultRow& row) {
  for (const auto& f :
       {row.alpha, row.exact_value, row.predicted_value, row.residual,
        row.mc_estimate, row.mc_stderr, row.slope}) {
    if (f && !std::isfinite(*f)) {
      throw NumericError("non-finite value in row '" + row.command + "'");
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// per-command drivers

namespace detail {

inline RunResult run_verify_trace(const ExperimentConfig& cfg) {
  RunResult out;
  for (int p = 0; p < cfg.pairs; ++p) {
    const std::uint64_t slot = 2 * static_cast<std::uint64_t>(p) * kStreamStride;
    Rng gen({cfg.seed, slot});
    const SymmetricMatrix a = random_symmetric(cfg.dim, gen);
    const SymmetricMatrix b = random_psd(cfg.dim, gen);
    const SymmetricForm fa = SymmetricForm::from_matrix(a);

    ResultRow row;
    row.command = "verify-trace";
    row.seed = cfg.seed;
    row.alpha = b.trace();
    row.exact_value = average_form(b, fa);
    row.predicted_value = trace_product(b, a);
    row.residual = *row.exact_value - *row.predicted_value;
    if (cfg.samples > 0) {
      const GaussianState state = make_state(b);
      const Eigen::MatrixXd ad = a.dense();
      const McEstimate mc = mc_mean(
          state,
          [&ad](const Eigen::VectorXd& psi) { return psi.dot(ad * psi); },
          cfg.samples, {cfg.seed, slot + kStreamStride}, cfg.threads);
      row.mc_estimate = mc.mean;
      row.mc_stderr = mc.se;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline RunResult run_asymptotic_scan(const ExperimentConfig& cfg) {
  RunResult out;
  Rng gen({cfg.seed, 0});
  const AnalyticFunctional f = resolve_functional(cfg, gen);
  const DensityOperator d = resolve_density(cfg, gen);
  const std::vector<double> alphas =
      cfg.alpha_grid.empty() ? default_alpha_grid() : cfg.alpha_grid;

  std::uint64_t slot = 1;
  for (const double alpha : alphas) {
    SymmetricMatrix b = d.matrix();
    b *= alpha;
    ExpansionOptions opts;
    opts.mc_samples = cfg.samples;
    opts.seed = {cfg.seed, slot * 2 * kStreamStride};
    opts.threads = cfg.threads;
    const ExpansionReport rep = expansion_report(f, make_state(b), alpha, opts);

    ResultRow row;
    row.command = "asymptotic-scan";
    row.seed = cfg.seed;
    row.alpha = alpha;
    row.exact_value = rep.classical_avg;
    row.predicted_value = alpha * rep.quantum_avg;
    row.residual = rep.residual;
    if (rep.mc.n > 0) {
      row.mc_estimate = rep.mc.mean;
      row.mc_stderr = rep.mc.se;
    }
    out.rows.push_back(std::move(row));
    out.notes["rest_bounds"].push_back(
        {{"alpha", alpha}, {"rest_bound", rep.rest_bound}, {"rest_bound_se", rep.rest_bound_se}});
    ++slot;
  }

  if (alphas.size() >= 4) {
    const OrderFit fit = fit_order(f, d, alphas);
    out.notes["exact_regime"] = fit.exact_regime;
    if (!fit.exact_regime) {
      ResultRow row;
      row.command = "asymptotic-scan:fit";
      row.seed = cfg.seed;
      row.slope = fit.slope;
      out.rows.push_back(std::move(row));
      out.notes["slope"] = fit.slope;
      out.notes["slope_se"] = fit.slope_se;
    }
  }
  return out;
}

inline RunResult run_wick_check(const ExperimentConfig& cfg) {
  RunResult out;
  Rng gen({cfg.seed, 0});
  const SymmetricMatrix d = resolve_density_matrix(cfg, gen);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(cfg.dim);
  e1[0] = 1.0;

  for (int m = 1; m <= cfg.order; ++m) {
    const std::vector<Eigen::VectorXd> args(m, e1);
    ResultRow row;
    row.command = "wick-check:moment:m=" + std::to_string(m);
    row.seed = cfg.seed;
    row.exact_value = gaussian_moment(d, args);
    // all pairings coincide on identical arguments
    row.predicted_value =
        m % 2 != 0 ? 0.0
                   : static_cast<double>(pairing_count(m)) * std::pow(d(0, 0), m / 2);
    row.residual = *row.exact_value - *row.predicted_value;
    out.rows.push_back(std::move(row));

    if (m % 2 == 0) {
      std::uint64_t visited = 0;
      enumerate_pairings(m, [&visited](auto) { ++visited; });
      ResultRow crow;
      crow.command = "wick-check:matchings:m=" + std::to_string(m);
      crow.seed = cfg.seed;
      crow.exact_value = static_cast<double>(visited);
      crow.predicted_value = static_cast<double>(pairing_count(m));
      crow.residual = *crow.exact_value - *crow.predicted_value;
      out.rows.push_back(std::move(crow));
    }
  }
  return out;
}

inline RunResult run_pure_state(const ExperimentConfig& cfg) {
  RunResult out;
  const double alpha = cfg.alpha_grid.empty() ? kDefaultAlpha : cfg.alpha_grid.front();
  const std::uint64_t n = cfg.samples == 0 ? kDefaultMcSamples : cfg.samples;
  Rng gen({cfg.seed, 0});
  const Eigen::VectorXd psi1 = random_unit(cfg.dim, gen);
  const Eigen::VectorXd psi2 = random_unit(cfg.dim, gen);
  const double l1 = gen.normal(), l2 = gen.normal();

  // samples of B = alpha psi1 (x) psi1 stay in span{psi1}
  {
    SymmetricMatrix b = SymmetricMatrix::outer(psi1);
    b *= alpha;
    const GaussianState state = make_state(b);
    Rng rng({cfg.seed, 2 * kStreamStride});
    Eigen::VectorXd s(cfg.dim);
    double worst = 0.0;
    const std::uint64_t nspan = std::min<std::uint64_t>(n, 100000);
    for (std::uint64_t i = 0; i < nspan; ++i) {
      state.draw(rng, s);
      worst = std::max(worst, (s - s.dot(psi1) * psi1).norm());
    }
    ResultRow row;
    row.command = "pure-state:span";
    row.seed = cfg.seed;
    row.alpha = alpha;
    row.exact_value = worst;
    row.predicted_value = 0.0;
    row.residual = worst;
    out.rows.push_back(std::move(row));
  }

  {
    const BackgroundField field{cfg.dim, alpha};
    const CovEstimate cov =
        scalar_product_recovery(field, psi1, psi2, n, {cfg.seed, 4 * kStreamStride});
    ResultRow row;
    row.command = "pure-state:overlap";
    row.seed = cfg.seed;
    row.alpha = alpha;
    row.exact_value = psi1.dot(psi2);
    row.mc_estimate = cov.estimate;
    row.mc_stderr = cov.se;
    row.residual = cov.estimate - psi1.dot(psi2);
    out.rows.push_back(std::move(row));
  }

  {
    const BackgroundField field{cfg.dim, alpha};
    const std::uint64_t nlin = std::min<std::uint64_t>(n, 100000);
    const double dev =
        linearity_check(field, psi1, psi2, l1, l2, nlin, {cfg.seed, 6 * kStreamStride});
    ResultRow row;
    row.command = "pure-state:linearity";
    row.seed = cfg.seed;
    row.alpha = alpha;
    row.exact_value = dev;
    row.predicted_value = 0.0;
    row.residual = dev;
    out.rows.push_back(std::move(row));
  }

  {
    SymmetricMatrix b = SymmetricMatrix::outer(psi1);
    b *= alpha;
    const DensityOperator d = quantize_state(make_state(b), alpha);
    const SymmetricMatrix expect = SymmetricMatrix::outer(psi1);
    double worst = 0.0;
    for (int i = 0; i < cfg.dim; ++i)
      for (int j = i; j < cfg.dim; ++j)
        worst = std::max(worst, std::abs(d.matrix()(i, j) - expect(i, j)));
    ResultRow row;
    row.command = "pure-state:density";
    row.seed = cfg.seed;
    row.alpha = alpha;
    row.exact_value = worst;
    row.predicted_value = 0.0;
    row.residual = worst;
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline RunResult run_higher_order(const ExperimentConfig& cfg) {
  RunResult out;
  Rng gen({cfg.seed, 0});
  const AnalyticFunctional f = resolve_functional(cfg, gen);
  const DensityOperator d = resolve_density(cfg, gen);
  const double alpha = cfg.alpha_grid.empty() ? kDefaultAlpha : cfg.alpha_grid.front();

  const HigherQuantization hq = quantize_higher(f, alpha, cfg.higher_n);
  ResultRow row;
  row.command = "higher-order:n=" + std::to_string(cfg.higher_n);
  row.seed = cfg.seed;
  row.alpha = alpha;
  row.exact_value = classical_average(f, d, alpha);
  row.predicted_value = alpha * generalized_trace(d, hq.multiple);
  row.residual = *row.exact_value - *row.predicted_value;
  if (cfg.samples > 0) {
    SymmetricMatrix b = d.matrix();
    b *= alpha;
    const CompiledFunctional cf(f);
    const McEstimate mc =
        mc_mean(make_state(b), cf, cfg.samples, {cfg.seed, 2 * kStreamStride}, cfg.threads);
    row.mc_estimate = mc.mean;
    row.mc_stderr = mc.se;
  }
  out.rows.push_back(std::move(row));
  out.notes["truncated_degrees"] = hq.truncated_degrees;
  return out;
}

inline RunResult run_chebyshov(const ExperimentConfig& cfg) {
  RunResult out;
  Rng gen({cfg.seed, 0});
  const DensityOperator d = resolve_density(cfg, gen);
  const std::vector<double> alphas =
      cfg.alpha_grid.empty() ? default_alpha_grid() : cfg.alpha_grid;
  const std::vector<double> cs = cfg.c_grid.empty() ? default_c_grid() : cfg.c_grid;
  const std::uint64_t n = cfg.samples == 0 ? kDefaultMcSamples : cfg.samples;

  std::uint64_t slot = 1;
  for (const double alpha : alphas) {
    SymmetricMatrix b = d.matrix();
    b *= alpha;
    const GaussianState state = make_state(b);
    for (const double c : cs) {
      const TailCheck tail = chebyshov_tail(state, c, n, {cfg.seed, slot * kStreamStride});
      ResultRow row;
      row.command = "chebyshov:C=" + fmt(c);
      row.seed = cfg.seed;
      row.alpha = alpha;
      row.exact_value = tail.empirical;
      row.predicted_value = tail.bound;
      row.residual = tail.empirical - tail.bound;
      row.mc_stderr = tail.se;
      out.rows.push_back(std::move(row));
      ++slot;
    }
  }
  return out;
}

inline DensityOperator grid_profile_density(const GridConfig& gc, const FieldGrid& g) {
  if (gc.profile == "uniform") return grid_uniform_density(g);
  if (gc.profile == "gaussian-profile") return grid_gaussian_profile_density(g, gc.sigma);
  if (gc.profile == "point") return grid_point_density(g, g.nearest_index(gc.x0));
  throw ConfigError("unknown grid profile '" + gc.profile + "'");
}

inline RunResult run_field_grid(const ExperimentConfig& cfg) {
  RunResult out;
  const double alpha = cfg.alpha_grid.empty() ? kDefaultAlpha : cfg.alpha_grid.front();
  const GridConfig& gc = cfg.grid;

  std::vector<FieldGrid> grids;
  grids.emplace_back(gc.half_length, gc.points);
  for (int r = 0; r < gc.refinements; ++r) grids.push_back(grids.back().refined());
  const int i0_base = grids.front().nearest_index(gc.x0);

  // limiting value of alpha * Tr D A_delta for the smooth profiles, by a fine
  // Riemann sum of the weight
  std::optional<double> limit;
  if (gc.profile == "uniform") {
    limit = alpha / (4.0 * gc.half_length);
  } else if (gc.profile == "gaussian-profile") {
    const double sigma = gc.sigma > 0.0 ? gc.sigma : gc.half_length / 4.0;
    const double x0 = grids.front().point(i0_base);
    const int nfine = 2000000;
    const double h = 2.0 * gc.half_length / nfine;
    KahanSum integral;
    for (int i = 0; i < nfine; ++i) {
      const double x = -gc.half_length + (i + 0.5) * h;
      integral.add(std::exp(-x * x / (2.0 * sigma * sigma)) * h);
    }
    limit = alpha * 0.5 * std::exp(-x0 * x0 / (2.0 * sigma * sigma)) / integral.value();
  }

  int scale = 1;
  for (const FieldGrid& g : grids) {
    const int i0 = i0_base * scale;
    const std::string suffix = ":d=" + std::to_string(g.points());
    const SymmetricMatrix a_delta = delta_observable(g, i0);
    const DensityOperator d = grid_profile_density(gc, g);

    {
      ResultRow row;
      row.command = "fieldgrid:delta-norm" + suffix;
      row.seed = cfg.seed;
      row.alpha = alpha;
      row.exact_value = operator_norm(a_delta);
      row.predicted_value = 1.0 / (2.0 * g.delta());
      row.residual = *row.exact_value - *row.predicted_value;
      out.rows.push_back(std::move(row));
    }
    {
      ResultRow row;
      row.command = "fieldgrid:position-norm" + suffix;
      row.seed = cfg.seed;
      row.alpha = alpha;
      row.exact_value = operator_norm(position_observable(g));
      row.predicted_value = gc.half_length;
      row.residual = *row.exact_value - *row.predicted_value;
      out.rows.push_back(std::move(row));
    }
    {
      // exact trace formula: Wick route against the direct matrix trace
      SymmetricMatrix b = d.matrix();
      b *= alpha;
      ResultRow row;
      row.command = "fieldgrid:trace-formula" + suffix;
      row.seed = cfg.seed;
      row.alpha = alpha;
      row.exact_value = grid_average_quadratic(g, b, a_delta);
      row.predicted_value = trace_product(b, a_delta);
      row.residual = *row.exact_value - *row.predicted_value;
      out.rows.push_back(std::move(row));
    }
    {
      ResultRow row;
      row.command = "fieldgrid:delta-trace" + suffix;
      row.seed = cfg.seed;
      row.alpha = alpha;
      row.exact_value = alpha * trace_product(d.matrix(), a_delta);
      if (limit) {
        row.predicted_value = *limit;
        row.residual = *row.exact_value - *row.predicted_value;
      }
      out.rows.push_back(std::move(row));
    }
    scale *= 2;
  }
  return out;
}

}  // namespace detail

inline RunResult run_rows(const ExperimentConfig& cfg) {
  RunResult out;
  switch (cfg.command) {
    case Command::kVerifyTrace: out = detail::run_verify_trace(cfg); break;
    case Command::kAsymptoticScan: out = detail::run_asymptotic_scan(cfg); break;
    case Command::kWickCheck: out = detail::run_wick_check(cfg); break;
    case Command::kPureState: out = detail::run_pure_state(cfg); break;
    case Command::kHigherOrder: out = detail::run_higher_order(cfg); break;
    case Command::kChebyshov: out = detail::run_chebyshov(cfg); break;
    case Command::kFieldGrid: out = detail::run_field_grid(cfg); break;
  }
  for (const ResultRow& row : out.rows) detail::check_finite(row);
  return out;
}

// ---------------------------------------------------------------------------
// output files

inline constexpr const char* kCsvHeader =
    "command,alpha,exact_value,predicted_value,residual,mc_estimate,mc_stderr,slope,seed";

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["command"] = command_name(cfg.command);
  j["dim"] = cfg.dim;
  j["seed"] = cfg.seed;
  j["samples"] = cfg.samples;
  j["pairs"] = cfg.pairs;
  j["order"] = cfg.order;
  j["higher_n"] = cfg.higher_n;
  j["alpha_grid"] = cfg.alpha_grid.empty() ? default_alpha_grid() : cfg.alpha_grid;
  j["c_grid"] = cfg.c_grid.empty() ? default_c_grid() : cfg.c_grid;
  j["functional"] = {{"file", cfg.functional_file},
                     {"inline", cfg.functional_text},
                     {"preset", cfg.functional_preset}};
  j["density"] = {{"preset", cfg.density_preset}};
  j["grid"] = {{"half_length", cfg.grid.half_length}, {"points", cfg.grid.points},
               {"x0", cfg.grid.x0},                   {"profile", cfg.grid.profile},
               {"sigma", cfg.grid.sigma},             {"refinements", cfg.grid.refinements}};
  return j;
}

inline std::string format_csv(const ExperimentConfig& cfg, const RunResult& result) {
  std::ostringstream os;
  os << "# dequant-results v1\n";
  os << "# command=" << command_name(cfg.command) << " dim=" << cfg.dim
     << " seed=" << cfg.seed << " samples=" << cfg.samples << "\n";
  const auto grid = cfg.alpha_grid.empty() ? default_alpha_grid() : cfg.alpha_grid;
  os << "# alpha_grid=";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i) os << ",";
    os << detail::fmt(grid[i]);
  }
  os << "\n";
  os << "# defaults: psd_tol=" << detail::fmt(kPsdTolerance)
     << " density_trace_tol=" << detail::fmt(kDensityTraceTolerance)
     << " unit_tol=" << detail::fmt(kUnitNormTolerance)
     << " norm_samples=4096 rest_samples=100000 default_mc_samples="
     << kDefaultMcSamples << "\n";
  os << kCsvHeader << "\n";

  auto cell = [](const std::optional<double>& v) {
    return v ? detail::fmt(*v) : std::string();
  };
  for (const ResultRow& r : result.rows) {
    os << r.command << ',' << cell(r.alpha) << ',' << cell(r.exact_value) << ','
       << cell(r.predicted_value) << ',' << cell(r.residual) << ','
       << cell(r.mc_estimate) << ',' << cell(r.mc_stderr) << ',' << cell(r.slope)
       << ',' << r.seed << "\n";
  }
  return os.str();
}

inline nlohmann::ordered_json summary_json(const ExperimentConfig& cfg,
                                           const RunResult& result) {
  nlohmann::ordered_json j;
  j["format"] = "dequant-results";
  j["version"] = 1;
  j["config"] = config_to_json(cfg);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  auto field = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  for (const ResultRow& r : result.rows) {
    nlohmann::ordered_json row;
    row["command"] = r.command;
    row["alpha"] = field(r.alpha);
    row["exact_value"] = field(r.exact_value);
    row["predicted_value"] = field(r.predicted_value);
    row["residual"] = field(r.residual);
    row["mc_estimate"] = field(r.mc_estimate);
    row["mc_stderr"] = field(r.mc_stderr);
    row["slope"] = field(r.slope);
    row["seed"] = r.seed;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  if (!result.notes.is_null()) j["notes"] = result.notes;
  return j;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write to '" + tmp.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::filesystem::path json_path_for(const std::filesystem::path& csv) {
  std::filesystem::path p = csv;
  p.replace_extension(".json");
  return p;
}

// Full driver: validates, runs, writes the CSV and the JSON summary next to
// it. Returns the process exit code (0 ok, 2 config error, 3 numeric error);
// failures produce a single machine-parseable line on `err`.
inline int run(const ExperimentConfig& cfg, std::ostream& log, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    validate_config(cfg);
    const RunResult result = run_rows(cfg);
    write_atomic(cfg.out, format_csv(cfg, result));
    write_atomic(json_path_for(cfg.out), summary_json(cfg, result).dump(2) + "\n");
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    // timing stays on the console: result files must be byte-identical across
    // reruns of the same config
    log << command_name(cfg.command) << ": " << result.rows.size() << " rows -> "
        << cfg.out << " (" << ms << " ms)\n";
    return 0;
  } catch (const ConfigError& e) {
    err << "error[config] " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "error[numeric] " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "error[config] " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error[numeric] " << e.what() << "\n";
    return 3;
  }
}

}  // namespace dequant

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "dequant/functional.hpp"
#include "dequant/gaussian.hpp"
#include "dequant/mc.hpp"
#include "dequant/wick.hpp"

namespace dequant {

// Classical -> quantum map for variables: A = (1/2) f''(0). Linear variables
// map to the zero operator.
inline SymmetricMatrix quantize_variable(const AnalyticFunctional& f) {
  SymmetricMatrix a = f.second_derivative();
  a *= 0.5;
  return a;
}

// Classical -> quantum map for states: D = cov(rho) / alpha. Injective for
// fixed alpha, since alpha * D gives the covariance back.
inline DensityOperator quantize_state(const GaussianState& rho, double alpha) {
  return scale_to_density(rho, alpha);
}

// Exact classical average of a polynomial variable over rho_B with
// B = alpha D, evaluated through Wick sums term by term:
//
//   <f>_rho = sum_k alpha^k / (2k)! * int f^(2k)(0)(phi,...,phi) drho_D.
//
// Odd-degree terms average to zero and are skipped.
inline double classical_average(const AnalyticFunctional& f,
                                const DensityOperator& d, double alpha) {
  if (f.dim() != d.dim()) throw std::invalid_argument("dimension mismatch");
  KahanSum sum;
  for (const auto& [deg, form] : f.terms()) {
    if (deg % 2 != 0) continue;
    const int k = deg / 2;
    sum.add(std::pow(alpha, k) / factorial(deg) * average_form(d.matrix(), form));
  }
  return sum.value();
}

// Per-alpha record of the asymptotic equality
// <f>_rho = alpha * Tr D f''(0) / 2 + o(alpha).
struct ExpansionReport {
  double alpha = 0.0;
  double classical_avg = 0.0;  // exact, via Wick sums
  double quantum_avg = 0.0;    // Tr D f''(0) / 2
  double residual = 0.0;       // classical_avg - alpha * quantum_avg
  double rest_bound = 0.0;     // alpha^2 * c_f * E[exp(r_f |psi|)] under rho_D
  double rest_bound_se = 0.0;  // Monte Carlo error of the bound
  McEstimate mc;               // optional empirical <f>_rho (n == 0 if unused)
};

struct ExpansionOptions {
  std::uint64_t mc_samples = 0;        // 0: skip the empirical cross-check
  std::uint64_t rest_samples = 100000; // Monte Carlo budget for the rest bound
  RngSeed seed{};
  int norm_samples = 4096;             // for the growth envelope
  int threads = 0;
};

inline ExpansionReport expansion_report(const AnalyticFunctional& f,
                                        const GaussianState& rho, double alpha,
                                        const ExpansionOptions& opts = {}) {
  ExpansionReport rep;
  rep.alpha = alpha;
  const DensityOperator d = quantize_state(rho, alpha);
  rep.classical_avg = classical_average(f, d, alpha);
  rep.quantum_avg = 0.5 * trace_product(d.matrix(), f.second_derivative());
  rep.residual = rep.classical_avg - alpha * rep.quantum_avg;

  const GrowthEnvelope env = growth_envelope(f, opts.norm_samples);
  if (env.c > 0.0 && opts.rest_samples > 0) {
    const GaussianState unit = make_state(d.matrix());
    const double r = env.r;
    const McEstimate integral = mc_mean(
        unit, [r](const Eigen::VectorXd& psi) { return std::exp(r * psi.norm()); },
        opts.rest_samples, {opts.seed.seed, opts.seed.stream}, opts.threads);
    rep.rest_bound = alpha * alpha * env.c * integral.mean;
    rep.rest_bound_se = alpha * alpha * env.c * integral.se;
  }

  if (opts.mc_samples > 0) {
    const CompiledFunctional cf(f);
    rep.mc = mc_mean(rho, cf, opts.mc_samples,
                     {opts.seed.seed, opts.seed.stream + kStreamStride},
                     opts.threads);
  }
  return rep;
}

// Log-log least-squares fit of |residual| against alpha, quantifying the
// o(alpha) claim empirically.
struct OrderFit {
  std::vector<double> alphas;
  std::vector<double> residuals;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double slope_se = std::numeric_limits<double>::quiet_NaN();
  bool exact_regime = false;  // every residual at the noise floor
  int points_used = 0;
};

// Residuals are exact Wick values, so the noise floor is pure rounding:
// points with |residual| <= 100 * eps * |classical| are excluded.
inline OrderFit fit_order(const AnalyticFunctional& f, const DensityOperator& d,
                          std::span<const double> alphas) {
  if (alphas.size() < 4) throw std::invalid_argument("need at least 4 grid points");
  OrderFit fit;
  std::vector<double> xs, ys;
  for (const double alpha : alphas) {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha grid must be positive");
    const double classical = classical_average(f, d, alpha);
    const double quantum = 0.5 * trace_product(d.matrix(), f.second_derivative());
    const double residual = classical - alpha * quantum;
    fit.alphas.push_back(alpha);
    fit.residuals.push_back(residual);
    const double floor =
        100.0 * std::numeric_limits<double>::epsilon() * std::abs(classical);
    if (std::abs(residual) > floor) {
      xs.push_back(std::log(alpha));
      ys.push_back(std::log(std::abs(residual)));
    }
  }
  if (xs.empty()) {
    fit.exact_regime = true;
    return fit;
  }
  if (xs.size() < 4) {
    throw std::invalid_argument("fewer than 4 grid points above the noise floor");
  }
  const int n = static_cast<int>(xs.size());
  fit.points_used = n;
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  fit.slope = sxy / sxx;
  double ssr = 0.0;
  for (int i = 0; i < n; ++i) {
    const double pred = my + fit.slope * (xs[i] - mx);
    ssr += (ys[i] - pred) * (ys[i] - pred);
  }
  fit.slope_se = n > 2 ? std::sqrt(ssr / (n - 2) / sxx) : 0.0;
  return fit;
}

// Higher-order map T_2n: A_2k = alpha^(k-1) / (2k)! * f^(2k)(0), k = 1..n.
// Terms of degree above 2n do not fit in the multiple; they are dropped and
// listed in truncated_degrees, never silently.
struct HigherQuantization {
  ObservableMultiple multiple;
  std::vector<int> truncated_degrees;
};

inline HigherQuantization quantize_higher(const AnalyticFunctional& f,
                                          double alpha, int n) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (n < 1 || 2 * n > kMaxFormDegree) {
    throw std::invalid_argument("order n must be in [1, " +
                                std::to_string(kMaxFormDegree / 2) + "]");
  }
  HigherQuantization out{ObservableMultiple(f.dim()), {}};
  for (const auto& [deg, form] : f.terms()) {
    if (deg > 2 * n) {
      out.truncated_degrees.push_back(deg);
      continue;
    }
    if (deg % 2 != 0) continue;  // the map carries only even derivatives
    const int k = deg / 2;
    out.multiple.set_entry(form * (std::pow(alpha, k - 1) / factorial(deg)));
  }
  return out;
}

}  // namespace dequant

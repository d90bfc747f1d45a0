#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "dequant/functional.hpp"
#include "dequant/mc.hpp"
#include "dequant/rng.hpp"

namespace dequant {

// The background field xi(omega) = sqrt(alpha) * eta(omega), eta standard
// Gaussian on R^d. Its one-dimensional projections xi_Psi = (Psi, xi) realize
// every pure state: E xi_Psi = 0, E xi_Psi^2 = alpha |Psi|^2.
struct BackgroundField {
  int dim = 1;
  double alpha = 0.0;

  IsotropicSampler sampler() const { return {dim, std::sqrt(alpha)}; }
};

// xi_Psi together with its field; P_Psi xi = xi_Psi * Psi for unit Psi.
struct ProjectedVariable {
  Eigen::VectorXd psi;
  BackgroundField field;

  double second_moment() const { return field.alpha * psi.squaredNorm(); }
};

// n field draws as columns, reproducible from the seed.
inline Eigen::MatrixXd draw_field(const BackgroundField& field, std::uint64_t n,
                                  RngSeed seed) {
  if (n < 1) throw std::invalid_argument("need at least one draw");
  Eigen::MatrixXd out(field.dim, static_cast<Eigen::Index>(n));
  Rng rng(seed);
  const double scale = std::sqrt(field.alpha);
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (int i = 0; i < field.dim; ++i) out(i, j) = scale * rng.normal();
  }
  return out;
}

// Scalar samples xi_Psi(omega) = (Psi, xi(omega)) over shared field draws.
// Sharing the draw matrix across projections is what "same omega" means here.
inline Eigen::VectorXd project(const Eigen::VectorXd& psi,
                               const Eigen::MatrixXd& field_draws) {
  if (psi.size() != field_draws.rows()) {
    throw std::invalid_argument("projection dimension mismatch");
  }
  return field_draws.transpose() * psi;
}

// Pathwise linearity of Psi -> xi_Psi: on shared draws,
// xi_{l1 Psi1 + l2 Psi2}(omega) = l1 xi_{Psi1}(omega) + l2 xi_{Psi2}(omega)
// sample by sample, not just in distribution. Returns the max deviation.
inline double linearity_check(const BackgroundField& field,
                              const Eigen::VectorXd& psi1,
                              const Eigen::VectorXd& psi2, double lambda1,
                              double lambda2, std::uint64_t n, RngSeed seed) {
  const Eigen::MatrixXd draws = draw_field(field, n, seed);
  const Eigen::VectorXd combined = project(lambda1 * psi1 + lambda2 * psi2, draws);
  const Eigen::VectorXd split =
      lambda1 * project(psi1, draws) + lambda2 * project(psi2, draws);
  return (combined - split).cwiseAbs().maxCoeff();
}

struct CovEstimate {
  double estimate = 0.0;
  double se = 0.0;
};

// (1/alpha) * sample covariance of (xi_Psi1, xi_Psi2); converges to the
// scalar product (Psi1, Psi2). Symmetric in the pair by construction.
inline CovEstimate scalar_product_recovery(const BackgroundField& field,
                                           const Eigen::VectorXd& psi1,
                                           const Eigen::VectorXd& psi2,
                                           std::uint64_t n, RngSeed seed) {
  if (n < 2) throw std::invalid_argument("need at least two draws");
  if (psi1.size() != field.dim || psi2.size() != field.dim) {
    throw std::invalid_argument("projection dimension mismatch");
  }
  Rng rng(seed);
  Eigen::VectorXd xi(field.dim);
  const double scale = std::sqrt(field.alpha);
  KahanSum sx, sy, sxy, sxy2;
  for (std::uint64_t i = 0; i < n; ++i) {
    for (int t = 0; t < field.dim; ++t) xi[t] = scale * rng.normal();
    const double x = psi1.dot(xi);
    const double y = psi2.dot(xi);
    sx.add(x);
    sy.add(y);
    sxy.add(x * y);
    sxy2.add(x * y * x * y);
  }
  const double nn = static_cast<double>(n);
  const double mx = sx.value() / nn;
  const double my = sy.value() / nn;
  const double cov = (sxy.value() - nn * mx * my) / (nn - 1.0);
  double var_p = (sxy2.value() - sxy.value() * sxy.value() / nn) / (nn - 1.0);
  if (var_p < 0.0) var_p = 0.0;
  CovEstimate out;
  out.estimate = cov / field.alpha;
  out.se = std::sqrt(var_p / nn) / field.alpha;
  return out;
}

// Monte Carlo estimate of E f(xi_Psi(omega) Psi). For quadratic
// f = (1/2)(A psi, psi) and unit Psi the expectation is exactly
// (alpha/2)(A Psi, Psi); general |Psi| scales by |Psi|^2.
inline McEstimate projected_average(const BackgroundField& field,
                                    const Eigen::VectorXd& psi,
                                    const AnalyticFunctional& f, std::uint64_t n,
                                    RngSeed seed, int threads = 0) {
  if (psi.size() != field.dim || f.dim() != field.dim) {
    throw std::invalid_argument("dimension mismatch");
  }
  const CompiledFunctional cf(f);
  return mc_mean(
      field.sampler(),
      [&psi, &cf](const Eigen::VectorXd& xi) { return cf(psi.dot(xi) * psi); },
      n, seed, threads);
}

}  // namespace dequant

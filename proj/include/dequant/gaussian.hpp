#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

#include "dequant/mc.hpp"
#include "dequant/rng.hpp"
#include "dequant/symmetric.hpp"

namespace dequant {

// Zero-mean Gaussian measure on R^d, determined by its PSD covariance B.
// Dispersion (mean squared norm) equals Tr B. Sampling goes through the
// eigendecomposition x = sum_i sqrt(lambda_i) z_i v_i, which handles
// singular covariances (pure states, B = 0) without regularization.
class GaussianState {
 public:
  int dim() const { return cov_.dim(); }
  const SymmetricMatrix& covariance() const { return cov_; }
  double dispersion() const { return cov_.trace(); }

  // Clamped eigenvalues (ascending) and the factor S with B = S S^T.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Eigen::MatrixXd& transform() const { return transform_; }

  // Safe to call concurrently on one state as long as each caller owns its
  // Rng and output vector.
  void draw(Rng& rng, Eigen::VectorXd& out) const {
    const int d = dim();
    out.resize(d);
    for (int i = 0; i < d; ++i) out[i] = rng.normal();
    out = transform_ * out;  // aliasing resolved through Eigen's product temp
  }

  // n samples as columns.
  Eigen::MatrixXd sample(std::uint64_t n, RngSeed seed) const {
    Eigen::MatrixXd out(dim(), static_cast<Eigen::Index>(n));
    Rng rng(seed);
    Eigen::VectorXd col(dim());
    for (std::uint64_t i = 0; i < n; ++i) {
      draw(rng, col);
      out.col(static_cast<Eigen::Index>(i)) = col;
    }
    return out;
  }

  friend GaussianState make_state(const SymmetricMatrix& covariance);

 private:
  GaussianState(SymmetricMatrix cov, Eigen::VectorXd eigenvalues,
                Eigen::MatrixXd transform)
      : cov_(std::move(cov)),
        eigenvalues_(std::move(eigenvalues)),
        transform_(std::move(transform)) {}

  SymmetricMatrix cov_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd transform_;
};

inline GaussianState make_state(const SymmetricMatrix& covariance) {
  auto eig = eigen_sym(covariance);
  if (eig.values[0] < -kPsdTolerance) {
    throw std::invalid_argument("covariance is not PSD (min eigenvalue " +
                                std::to_string(eig.values[0]) + ")");
  }
  // Rank cutoff: eigenvalues at the solver's noise level (either sign) are
  // zero; without this, spurious values ~eps |B| get sqrt'ed into 1e-8 scale
  // noise along directions a degenerate covariance should never excite.
  const double lambda_max = std::max(eig.values[covariance.dim() - 1], 0.0);
  const double cutoff = lambda_max * 1e-14;
  Eigen::VectorXd clamped = (eig.values.array() <= cutoff).select(0.0, eig.values);
  Eigen::MatrixXd transform =
      eig.vectors * clamped.cwiseSqrt().asDiagonal();
  return GaussianState(covariance, std::move(clamped), std::move(transform));
}

// The scaling psi -> psi / sqrt(alpha) maps rho_B to the unit-trace measure
// with covariance B / alpha; that matrix is the density operator attached to
// the state. Requires Tr B = alpha up to relative 1e-9.
inline DensityOperator scale_to_density(const GaussianState& state, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  const double tr = state.dispersion();
  if (std::abs(tr - alpha) > 1e-9 * std::abs(alpha)) {
    throw std::invalid_argument("state dispersion " + std::to_string(tr) +
                                " does not match alpha " + std::to_string(alpha));
  }
  // Divide by the actual trace so the result has unit trace by construction.
  SymmetricMatrix d = state.covariance();
  d *= 1.0 / tr;
  return DensityOperator(std::move(d));
}

struct TailCheck {
  double bound = 0.0;      // alpha / c, the Chebyshov bound
  double empirical = 0.0;  // fraction of samples with |psi|^2 > c
  double se = 0.0;         // binomial standard error of the fraction
};

// P(|psi|^2 > c) <= E|psi|^2 / c = alpha / c under rho_B with Tr B = alpha.
inline TailCheck chebyshov_tail(const GaussianState& state, double c,
                                std::uint64_t n, RngSeed seed) {
  if (!(c > 0.0)) throw std::invalid_argument("threshold must be positive");
  if (n == 0) throw std::invalid_argument("need at least one sample");
  Rng rng(seed);
  Eigen::VectorXd psi(state.dim());
  std::uint64_t hits = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    state.draw(rng, psi);
    if (psi.squaredNorm() > c) ++hits;
  }
  TailCheck out;
  out.bound = state.dispersion() / c;
  out.empirical = static_cast<double>(hits) / static_cast<double>(n);
  out.se = std::sqrt(out.empirical * (1.0 - out.empirical) /
                     static_cast<double>(n));
  return out;
}

}  // namespace dequant

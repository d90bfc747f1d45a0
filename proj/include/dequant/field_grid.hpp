#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dequant/gaussian.hpp"
#include "dequant/symmetric.hpp"
#include "dequant/wick.hpp"

namespace dequant {

// Uniform grid on [-L, L] discretizing a field on an interval. A field psi is
// the vector of its values psi(x_i); the discrete inner product
// (psi, phi) = delta * sum_i psi_i phi_i makes grid sums converge to their
// continuum integrals. Operators below are matrices acting on value vectors,
// symmetric with respect to this weighted product.
class FieldGrid {
 public:
  FieldGrid(double half_length, int points)
      : half_length_(half_length), points_(points) {
    if (!(half_length > 0.0)) throw std::invalid_argument("half_length must be positive");
    if (points < 2) throw std::invalid_argument("grid needs at least 2 points");
    delta_ = 2.0 * half_length / (points - 1);
  }

  double half_length() const { return half_length_; }
  int points() const { return points_; }
  double delta() const { return delta_; }
  double point(int i) const { return -half_length_ + i * delta_; }

  Eigen::VectorXd points_vector() const {
    Eigen::VectorXd x(points_);
    for (int i = 0; i < points_; ++i) x[i] = point(i);
    return x;
  }

  int nearest_index(double x0) const {
    const double raw = (x0 + half_length_) / delta_;
    int i = static_cast<int>(std::lround(raw));
    if (i < 0) i = 0;
    if (i >= points_) i = points_ - 1;
    return i;
  }

  double inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return delta_ * a.dot(b);
  }
  double norm(const Eigen::VectorXd& a) const { return std::sqrt(inner(a, a)); }

  // Same interval, halved spacing; every old point stays on the grid.
  FieldGrid refined() const { return FieldGrid(half_length_, 2 * points_ - 1); }

 private:
  double half_length_;
  int points_;
  double delta_;
};

// The observable of f(psi) = (1/2) psi(x_0)^2: as an operator,
// (A psi, phi)_grid = (1/2) psi(x_0) phi(x_0), i.e. the single matrix entry
// 1/(2 delta) at (i0, i0). Its operator norm is 1/(2 delta), which blows up
// as delta -> 0: the continuum delta-function observable is unbounded.
inline SymmetricMatrix delta_observable(const FieldGrid& grid, int i0) {
  if (i0 < 0 || i0 >= grid.points()) throw std::out_of_range("grid index out of range");
  SymmetricMatrix a(grid.points());
  a.set(i0, i0, 1.0 / (2.0 * grid.delta()));
  return a;
}

// Multiplication by the coordinate: diag(x_i). Bounded on a fixed interval
// (norm max |x_i| = L), unlike the delta observable.
inline SymmetricMatrix position_observable(const FieldGrid& grid) {
  SymmetricMatrix a(grid.points());
  for (int i = 0; i < grid.points(); ++i) a.set(i, i, grid.point(i));
  return a;
}

// f(psi) = (1/2) psi(x_0)^2 on value vectors.
inline double delta_functional(const FieldGrid& grid, int i0,
                               const Eigen::VectorXd& psi) {
  if (psi.size() != grid.points()) throw std::invalid_argument("field size mismatch");
  return 0.5 * psi[i0] * psi[i0];
}

// Gaussian measure on grid fields whose covariance OPERATOR (with respect to
// the weighted product) is B. Value vectors then have Euclidean covariance
// B / delta, which is what the sampler needs.
inline GaussianState grid_state(const FieldGrid& grid, const SymmetricMatrix& b) {
  if (b.dim() != grid.points()) throw std::invalid_argument("operator size mismatch");
  SymmetricMatrix c = b;
  c *= 1.0 / grid.delta();
  return make_state(c);
}

// Standard white noise on the grid: unit covariance operator, so value
// vectors are N(0, I/delta).
inline GaussianState grid_white_noise(const FieldGrid& grid) {
  return grid_state(grid, SymmetricMatrix::identity(grid.points()));
}

// int (A psi, psi)_grid drho_B computed through the Wick engine (Euclidean
// covariance B/delta against the form of delta*A). Equals Tr BA; the matrix
// trace is the independent route.
inline double grid_average_quadratic(const FieldGrid& grid, const SymmetricMatrix& b,
                                     const SymmetricMatrix& a) {
  SymmetricMatrix c = b;
  c *= 1.0 / grid.delta();
  SymmetricMatrix a_weighted = a;
  a_weighted *= grid.delta();
  return average_form(c, SymmetricForm::from_matrix(a_weighted));
}

// Density operator profiles for grid experiments.
inline DensityOperator grid_uniform_density(const FieldGrid& grid) {
  return DensityOperator::maximally_mixed(grid.points());
}

// diag(w)/sum(w) with a Gaussian weight profile w(x) = exp(-x^2 / (2 sigma^2));
// a smooth density whose delta-observable trace stays finite as delta -> 0.
inline DensityOperator grid_gaussian_profile_density(const FieldGrid& grid,
                                                     double sigma = 0.0) {
  if (sigma <= 0.0) sigma = grid.half_length() / 4.0;
  const int d = grid.points();
  Eigen::VectorXd w(d);
  for (int i = 0; i < d; ++i) {
    const double x = grid.point(i);
    w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
  }
  const double total = w.sum();
  SymmetricMatrix m(d);
  for (int i = 0; i < d; ++i) m.set(i, i, w[i] / total);
  return DensityOperator(std::move(m));
}

inline DensityOperator grid_point_density(const FieldGrid& grid, int i0) {
  if (i0 < 0 || i0 >= grid.points()) throw std::out_of_range("grid index out of range");
  SymmetricMatrix m(grid.points());
  m.set(i0, i0, 1.0);
  return DensityOperator(std::move(m));
}

struct NormGrowthRow {
  double delta = 0.0;
  double norm = 0.0;
};

// Operator norms of builder(grid) across a refinement sequence. For the
// delta observable the norm scales like 1/delta (unbounded limit); for the
// position observable it converges to max |x_i|.
inline std::vector<NormGrowthRow> observable_norm_growth(
    std::span<const FieldGrid> grids,
    const std::function<SymmetricMatrix(const FieldGrid&)>& builder) {
  if (grids.size() < 3) {
    throw std::invalid_argument("need at least 3 grid resolutions");
  }
  std::vector<NormGrowthRow> rows;
  rows.reserve(grids.size());
  for (const FieldGrid& g : grids) {
    rows.push_back({g.delta(), operator_norm(builder(g))});
  }
  return rows;
}

}  // namespace dequant

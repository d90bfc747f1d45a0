#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dequant/multiindex.hpp"
#include "dequant/numeric.hpp"
#include "dequant/rng.hpp"

namespace dequant {

// Eigenvalues of a nominally PSD matrix may come out of the solver slightly
// negative; anything in (-kPsdTolerance, 0) is treated as zero, anything
// below is rejected.
inline constexpr double kPsdTolerance = 1e-10;
inline constexpr double kUnitNormTolerance = 1e-12;
inline constexpr double kDensityTraceTolerance = 1e-12;

// Symmetric d x d matrix with each entry stored once (packed upper
// triangle), so entries(i,j) == entries(j,i) holds structurally.
class SymmetricMatrix {
 public:
  explicit SymmetricMatrix(int dim)
      : dim_(dim), a_(packed_size(dim), 0.0) {
    if (dim < 1) throw std::invalid_argument("matrix dim must be >= 1");
  }

  static SymmetricMatrix identity(int dim) {
    SymmetricMatrix m(dim);
    for (int i = 0; i < dim; ++i) m.set(i, i, 1.0);
    return m;
  }

  // v (x) v
  static SymmetricMatrix outer(const Eigen::VectorXd& v) {
    SymmetricMatrix m(static_cast<int>(v.size()));
    for (int i = 0; i < m.dim_; ++i)
      for (int j = i; j < m.dim_; ++j) m.set(i, j, v[i] * v[j]);
    return m;
  }

  // Accepts a dense matrix that is symmetric up to `tol` and stores the
  // symmetrized entries.
  static SymmetricMatrix from_dense(const Eigen::MatrixXd& m, double tol = 1e-9) {
    if (m.rows() != m.cols()) throw std::invalid_argument("matrix must be square");
    SymmetricMatrix out(static_cast<int>(m.rows()));
    for (int i = 0; i < out.dim_; ++i) {
      for (int j = i; j < out.dim_; ++j) {
        if (std::abs(m(i, j) - m(j, i)) > tol * (1.0 + std::abs(m(i, j)))) {
          throw std::invalid_argument("matrix is not symmetric within tolerance");
        }
        out.set(i, j, i == j ? m(i, i) : 0.5 * (m(i, j) + m(j, i)));
      }
    }
    return out;
  }

  int dim() const { return dim_; }

  double operator()(int i, int j) const { return a_[offset(i, j)]; }
  void set(int i, int j, double v) { a_[offset(i, j)] = v; }
  void add(int i, int j, double v) { a_[offset(i, j)] += v; }

  // Sum of the diagonal, nothing else.
  double trace() const {
    double t = 0.0;
    for (int i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd m(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = i; j < dim_; ++j) m(i, j) = m(j, i) = (*this)(i, j);
    return m;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j) out[i] += (*this)(i, j) * v[j];
    return out;
  }

  SymmetricMatrix& operator*=(double c) {
    for (double& x : a_) x *= c;
    return *this;
  }
  SymmetricMatrix& operator+=(const SymmetricMatrix& o) {
    require_same_dim(o.dim_);
    for (std::size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
    return *this;
  }
  friend SymmetricMatrix operator*(SymmetricMatrix m, double c) { return m *= c; }
  friend SymmetricMatrix operator*(double c, SymmetricMatrix m) { return m *= c; }

  const std::vector<double>& packed() const { return a_; }

 private:
  static std::size_t packed_size(int dim) {
    return static_cast<std::size_t>(dim) * (dim + 1) / 2;
  }
  std::size_t offset(int i, int j) const {
    if (i > j) std::swap(i, j);
    if (i < 0 || j >= dim_) throw std::out_of_range("matrix index out of range");
    return static_cast<std::size_t>(i) * (2 * dim_ - i - 1) / 2 + j;
  }
  void require_same_dim(int d) const {
    if (d != dim_) throw std::invalid_argument("matrix dimension mismatch");
  }

  int dim_;
  std::vector<double> a_;
};

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

inline SymmetricEigen eigen_sym(const SymmetricMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m.dense());
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("symmetric eigensolve failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

// Spectral norm (largest |eigenvalue|).
inline double operator_norm(const SymmetricMatrix& m) {
  const auto eig = eigen_sym(m);
  return std::max(std::abs(eig.values[0]), std::abs(eig.values[m.dim() - 1]));
}

// Tr(AB) for symmetric A, B, straight off the packed entries.
inline double trace_product(const SymmetricMatrix& a, const SymmetricMatrix& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("matrix dimension mismatch");
  KahanSum s;
  for (int i = 0; i < a.dim(); ++i) {
    s.add(a(i, i) * b(i, i));
    for (int j = i + 1; j < a.dim(); ++j) s.add(2.0 * a(i, j) * b(i, j));
  }
  return s.value();
}

// Degree-k symmetric multilinear form on R^d in canonical storage: one fully
// symmetrized coefficient per non-decreasing multi-index, so permutation
// invariance of the evaluation is structural rather than numerical.
class SymmetricForm {
 public:
  SymmetricForm(int degree, int dim) : degree_(degree), dim_(dim) {
    check_degree(degree);
    if (dim < 1) throw std::invalid_argument("form dim must be >= 1");
    coeffs_.assign(num_canonical_indices(dim, degree), 0.0);
  }

  // Degree-2 forms and symmetric matrices carry identical data; the round
  // trip is exact on the stored entries.
  static SymmetricForm from_matrix(const SymmetricMatrix& m) {
    SymmetricForm f(2, m.dim());
    std::size_t off = 0;
    for (int i = 0; i < m.dim(); ++i)
      for (int j = i; j < m.dim(); ++j) f.coeffs_[off++] = m(i, j);
    return f;
  }

  SymmetricMatrix to_matrix() const {
    if (degree_ != 2) throw std::logic_error("to_matrix requires a degree-2 form");
    SymmetricMatrix m(dim_);
    std::size_t off = 0;
    for (int i = 0; i < dim_; ++i)
      for (int j = i; j < dim_; ++j) m.set(i, j, coeffs_[off++]);
    return m;
  }

  int degree() const { return degree_; }
  int dim() const { return dim_; }
  std::size_t size() const { return coeffs_.size(); }

  double coeff(std::span<const int> idx) const {
    return coeffs_[rank_of(idx)];
  }
  void set_coeff(std::span<const int> idx, double v) {
    coeffs_[rank_of(idx)] = v;
  }
  void add_coeff(std::span<const int> idx, double v) {
    coeffs_[rank_of(idx)] += v;
  }

  const std::vector<double>& raw() const { return coeffs_; }
  std::vector<double>& raw() { return coeffs_; }

  bool is_zero() const {
    for (double c : coeffs_)
      if (c != 0.0) return false;
    return true;
  }

  SymmetricForm& operator*=(double c) {
    for (double& x : coeffs_) x *= c;
    return *this;
  }
  friend SymmetricForm operator*(SymmetricForm f, double c) { return f *= c; }
  friend SymmetricForm operator*(double c, SymmetricForm f) { return f *= c; }
  SymmetricForm& operator+=(const SymmetricForm& o) {
    if (o.degree_ != degree_ || o.dim_ != dim_)
      throw std::invalid_argument("form shape mismatch");
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
    return *this;
  }

  // Multilinear evaluation: contracts one argument slot at a time. Each
  // contraction of a symmetric tensor with a vector is again symmetric, so
  // everything stays in canonical storage.
  double eval(std::span<const Eigen::VectorXd> args) const {
    if (static_cast<int>(args.size()) != degree_) {
      throw std::invalid_argument("eval needs exactly degree-many arguments");
    }
    for (const auto& v : args) {
      if (v.size() != dim_) throw std::invalid_argument("argument dimension mismatch");
    }
    std::vector<double> cur = coeffs_;
    for (int deg = degree_; deg >= 1; --deg) {
      cur = contract_once(cur, deg, args[degree_ - deg]);
    }
    return cur[0];
  }

  // Diagonal evaluation b(psi, ..., psi) via coefficient * multiplicity.
  double eval_same(const Eigen::VectorXd& psi) const {
    if (psi.size() != dim_) throw std::invalid_argument("argument dimension mismatch");
    std::vector<int> mi(degree_, 0);
    std::size_t off = 0;
    KahanSum s;
    do {
      const double c = coeffs_[off++];
      if (c != 0.0) {
        double term = c * index_multiplicity(mi);
        for (int t = 0; t < degree_; ++t) term *= psi[mi[t]];
        s.add(term);
      }
    } while (next_canonical(mi, dim_));
    return s.value();
  }

  // g_i = b(psi, ..., psi, e_i); the gradient of eval_same is degree * g.
  Eigen::VectorXd contracted_gradient(const Eigen::VectorXd& psi) const {
    std::vector<double> cur = coeffs_;
    for (int deg = degree_; deg >= 2; --deg) {
      cur = contract_once(cur, deg, psi);
    }
    Eigen::VectorXd g(dim_);
    for (int i = 0; i < dim_; ++i) g[i] = cur[i];
    return g;
  }

 private:
  std::size_t rank_of(std::span<const int> idx) const {
    if (static_cast<int>(idx.size()) != degree_) {
      throw std::invalid_argument("multi-index length must equal degree");
    }
    std::vector<int> sorted(idx.begin(), idx.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() < 0 || sorted.back() >= dim_) {
      throw std::out_of_range("multi-index entry out of range");
    }
    return canonical_rank(sorted, dim_);
  }

  std::vector<double> contract_once(const std::vector<double>& cur, int deg,
                                    const Eigen::VectorXd& v) const {
    const int out_deg = deg - 1;
    std::vector<double> next(num_canonical_indices(dim_, out_deg), 0.0);
    std::vector<int> mi(out_deg, 0);
    std::vector<int> full(deg);
    std::size_t off = 0;
    do {
      KahanSum s;
      for (int j = 0; j < dim_; ++j) {
        // sorted insert of j into mi
        int p = 0;
        while (p < out_deg && mi[p] <= j) {
          full[p] = mi[p];
          ++p;
        }
        full[p] = j;
        for (int q = p; q < out_deg; ++q) full[q + 1] = mi[q];
        s.add(cur[canonical_rank(full, dim_)] * v[j]);
      }
      next[off++] = s.value();
    } while (next_canonical(mi, dim_));
    return next;
  }

  int degree_;
  int dim_;
  std::vector<double> coeffs_;
};

// Canonicalizes a dense (row-major, length dim^degree) coefficient array:
// the result evaluates to the average of the raw tensor over all argument
// permutations.
inline SymmetricForm symmetrize(int degree, int dim, std::span<const double> dense) {
  check_degree(degree);
  std::size_t expected = 1;
  for (int t = 0; t < degree; ++t) {
    expected *= static_cast<std::size_t>(dim);
    if (expected > (std::size_t{1} << 27)) {
      throw std::invalid_argument("dense tensor too large to symmetrize");
    }
  }
  if (dense.size() != expected) {
    throw std::invalid_argument("dense tensor has wrong size");
  }

  SymmetricForm out(degree, dim);
  std::vector<double>& acc = out.raw();
  std::vector<int> idx(degree, 0);
  std::vector<int> sorted(degree);
  std::size_t flat = 0;
  while (true) {
    sorted.assign(idx.begin(), idx.end());
    std::sort(sorted.begin(), sorted.end());
    acc[canonical_rank(sorted, dim)] += dense[flat];
    // odometer over the full index box
    int t = degree - 1;
    while (t >= 0 && idx[t] == dim - 1) {
      idx[t] = 0;
      --t;
    }
    if (t < 0) break;
    ++idx[t];
    ++flat;
  }

  std::vector<int> mi(degree, 0);
  std::size_t off = 0;
  do {
    acc[off] /= index_multiplicity(mi);
    ++off;
  } while (next_canonical(mi, dim));
  return out;
}

// Symmetrized tensor product: the unique symmetric form with
// (a sym b)(psi,...,psi) = a(psi,...) * b(psi,...).
inline SymmetricForm sym_product(const SymmetricForm& a, const SymmetricForm& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("form dimension mismatch");
  const int ka = a.degree(), kb = b.degree(), k = ka + kb;
  check_degree(k);
  SymmetricForm out(k, a.dim());

  std::vector<int> mi(k, 0);
  std::vector<int> pick(ka), rest(kb);
  std::vector<int> comb(ka);
  const double splits = static_cast<double>(binomial(k, ka));
  std::size_t off = 0;
  do {
    KahanSum s;
    // all position subsets of size ka; positions ascend, so the picked and
    // remaining sub-indices stay sorted
    for (int t = 0; t < ka; ++t) comb[t] = t;
    while (true) {
      int pi = 0, ri = 0, ci = 0;
      for (int pos = 0; pos < k; ++pos) {
        if (ci < ka && comb[ci] == pos) {
          pick[pi++] = mi[pos];
          ++ci;
        } else {
          rest[ri++] = mi[pos];
        }
      }
      s.add(a.coeff(pick) * b.coeff(rest));
      // next combination
      int t = ka - 1;
      while (t >= 0 && comb[t] == k - ka + t) --t;
      if (t < 0) break;
      ++comb[t];
      for (int u = t + 1; u < ka; ++u) comb[u] = comb[u - 1] + 1;
    }
    out.raw()[off++] = s.value() / splits;
  } while (next_canonical(mi, a.dim()));
  return out;
}

struct FormNorm {
  double value = 0.0;   // guaranteed lower bound on sup over the unit ball
  int samples_used = 0; // 0 when the value is exact
  bool exact = false;
};

namespace detail {
// One |b(psi,...,psi)| ascent pass: symmetric higher-order power iteration
// with the best visited value kept (every iterate is feasible, so the max is
// a valid lower bound).
inline double hill_climb(const SymmetricForm& f, Eigen::VectorXd psi) {
  double best = std::abs(f.eval_same(psi));
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::VectorXd g = f.contracted_gradient(psi);
    if (f.eval_same(psi) < 0.0) g = -g;
    const double gn = g.norm();
    if (gn == 0.0) break;
    psi = g / gn;
    const double v = std::abs(f.eval_same(psi));
    if (v <= best * (1.0 + 1e-13)) {
      best = std::max(best, v);
      break;
    }
    best = v;
  }
  return best;
}
}  // namespace detail

// sup over the unit ball of |b(psi,...,psi)|. Exact for degrees 1 and 2
// (vector norm / extreme eigenvalue); for higher degrees the exact tensor
// spectral norm is NP-hard, so this samples unit vectors and refines the
// best candidates by power iteration.
inline FormNorm norm_form(const SymmetricForm& f, int samples = 4096,
                          RngSeed seed = {0x5eedf0b1u, 0}) {
  if (f.degree() == 1) {
    double s = 0.0;
    for (double c : f.raw()) s += c * c;
    return {std::sqrt(s), 0, true};
  }
  if (f.degree() == 2) {
    return {operator_norm(f.to_matrix()), 0, true};
  }

  Rng rng(seed);
  const int d = f.dim();
  Eigen::VectorXd psi(d);
  constexpr int kKeep = 8;
  std::vector<std::pair<double, Eigen::VectorXd>> top;
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < d; ++i) psi[i] = rng.normal();
    const double n = psi.norm();
    if (n == 0.0) continue;
    psi /= n;
    const double v = std::abs(f.eval_same(psi));
    if (top.size() < kKeep) {
      top.emplace_back(v, psi);
      std::sort(top.begin(), top.end(),
                [](const auto& a, const auto& b) { return a.first > b.first; });
    } else if (v > top.back().first) {
      top.back() = {v, psi};
      std::sort(top.begin(), top.end(),
                [](const auto& a, const auto& b) { return a.first > b.first; });
    }
  }
  double best = 0.0;
  for (const auto& [v, start] : top) {
    best = std::max(best, detail::hill_climb(f, start));
  }
  return {best, samples, false};
}

// Normalized vector labeling a pure state.
class PureState {
 public:
  explicit PureState(Eigen::VectorXd v) : v_(std::move(v)) {
    if (std::abs(v_.norm() - 1.0) > kUnitNormTolerance) {
      throw std::invalid_argument("pure state vector must have unit norm");
    }
  }
  const Eigen::VectorXd& vector() const { return v_; }
  int dim() const { return static_cast<int>(v_.size()); }

 private:
  Eigen::VectorXd v_;
};

// PSD symmetric matrix with unit trace.
class DensityOperator {
 public:
  explicit DensityOperator(SymmetricMatrix m) : m_(std::move(m)) {
    if (std::abs(m_.trace() - 1.0) > kDensityTraceTolerance) {
      throw std::invalid_argument("density operator trace must be 1, got " +
                                  std::to_string(m_.trace()));
    }
    const auto eig = eigen_sym(m_);
    if (eig.values[0] < -kPsdTolerance) {
      throw std::invalid_argument("density operator is not PSD (min eigenvalue " +
                                  std::to_string(eig.values[0]) + ")");
    }
  }

  static DensityOperator pure(const PureState& psi) {
    return DensityOperator(SymmetricMatrix::outer(psi.vector()));
  }

  static DensityOperator maximally_mixed(int dim) {
    SymmetricMatrix m(dim);
    for (int i = 0; i < dim; ++i) m.set(i, i, 1.0 / dim);
    return DensityOperator(std::move(m));
  }

  const SymmetricMatrix& matrix() const { return m_; }
  int dim() const { return m_.dim(); }

 private:
  SymmetricMatrix m_;
};

}  // namespace dequant

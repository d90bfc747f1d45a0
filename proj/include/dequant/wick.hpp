#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dequant/numeric.hpp"
#include "dequant/symmetric.hpp"

namespace dequant {

// Largest moment order the pairing enumerator accepts (2 * degree cap).
inline constexpr int kMaxMomentOrder = 2 * kMaxFormDegree;

// Visits every perfect matching of {0, ..., m-1} exactly once, always pairing
// the smallest unmatched element with each larger one in turn. The order is
// deterministic, and the visit count is (m-1)!! by construction.
//
// Visitor signature: void(std::span<const std::pair<int, int>>).
template <class Visitor>
void enumerate_pairings(int m, Visitor&& visit) {
  if (m < 0 || m > kMaxMomentOrder || m % 2 != 0) {
    throw std::invalid_argument("pairing enumeration needs an even order <= " +
                                std::to_string(kMaxMomentOrder));
  }
  if (m == 0) {
    std::array<std::pair<int, int>, 1> none{};
    visit(std::span<const std::pair<int, int>>(none.data(), 0));
    return;
  }
  std::array<bool, kMaxMomentOrder> used{};
  std::array<std::pair<int, int>, kMaxMomentOrder / 2> pairs;
  const int npairs = m / 2;

  auto rec = [&](auto&& self, int depth) -> void {
    if (depth == npairs) {
      visit(std::span<const std::pair<int, int>>(pairs.data(), npairs));
      return;
    }
    int a = 0;
    while (used[a]) ++a;
    used[a] = true;
    for (int b = a + 1; b < m; ++b) {
      if (used[b]) continue;
      used[b] = true;
      pairs[depth] = {a, b};
      self(self, depth + 1);
      used[b] = false;
    }
    used[a] = false;
  };
  rec(rec, 0);
}

namespace detail {
// Isserlis sum for a tuple of basis indices: sum over matchings of
// prod D(idx_a, idx_b).
inline double moment_of_indices(const SymmetricMatrix& d, std::span<const int> idx) {
  KahanSum sum;
  enumerate_pairings(static_cast<int>(idx.size()),
                     [&](std::span<const std::pair<int, int>> pairs) {
                       double p = 1.0;
                       for (const auto& [a, b] : pairs) p *= d(idx[a], idx[b]);
                       sum.add(p);
                     });
  return sum.value();
}
}  // namespace detail

// m-th Gaussian moment E[(phi_1, psi) ... (phi_m, psi)] under the zero-mean
// Gaussian with covariance D: zero for odd m, otherwise the sum over all
// perfect matchings of products of pairwise covariances (D phi_a, phi_b).
inline double gaussian_moment(const SymmetricMatrix& d,
                              std::span<const Eigen::VectorXd> args) {
  const int m = static_cast<int>(args.size());
  if (m > kMaxMomentOrder) {
    throw std::invalid_argument("moment order exceeds cap");
  }
  for (const auto& v : args) {
    if (v.size() != d.dim()) throw std::invalid_argument("argument dimension mismatch");
  }
  if (m % 2 != 0) return 0.0;  // zero-mean Gaussian
  if (m == 0) return 1.0;

  // Gram matrix of the arguments under D, then the pairing sum.
  const Eigen::MatrixXd dd = d.dense();
  Eigen::MatrixXd phi(d.dim(), m);
  for (int i = 0; i < m; ++i) phi.col(i) = args[i];
  const Eigen::MatrixXd gram = phi.transpose() * dd * phi;

  KahanSum sum;
  enumerate_pairings(m, [&](std::span<const std::pair<int, int>> pairs) {
    double p = 1.0;
    for (const auto& [a, b] : pairs) p *= gram(a, b);
    sum.add(p);
  });
  return sum.value();
}

// Exact Gaussian average of a degree-k form:
//
//   int A(psi, ..., psi) drho_D = Tr a^(k)_D A,
//
// contracted over the canonical coefficient set with multinomial
// multiplicities instead of the full d^k index box.
inline double average_form(const SymmetricMatrix& d, const SymmetricForm& a) {
  if (a.dim() != d.dim()) throw std::invalid_argument("dimension mismatch");
  if (a.degree() % 2 != 0) return 0.0;  // odd moments vanish

  std::vector<int> mi(a.degree(), 0);
  std::size_t off = 0;
  KahanSum sum;
  do {
    const double c = a.raw()[off++];
    if (c != 0.0) {
      sum.add(c * index_multiplicity(mi) * detail::moment_of_indices(d, mi));
    }
  } while (next_canonical(mi, a.dim()));
  return sum.value();
}

// The order-2k moment form e(2k, D), evaluated lazily on argument tuples.
struct WickMoment {
  int order;
  SymmetricMatrix density;

  WickMoment(int order_, SymmetricMatrix density_)
      : order(order_), density(std::move(density_)) {
    if (order < 2 || order % 2 != 0 || order > kMaxMomentOrder) {
      throw std::invalid_argument("Wick moment order must be even and <= " +
                                  std::to_string(kMaxMomentOrder));
    }
  }

  double operator()(std::span<const Eigen::VectorXd> args) const {
    if (static_cast<int>(args.size()) != order) {
      throw std::invalid_argument("moment expects exactly order-many arguments");
    }
    return gaussian_moment(density, args);
  }
};

// Observable of the generalized quantum model: a tuple (A_2, A_4, ..., A_2n)
// of even-degree symmetric forms. Absent degrees count as zero.
class ObservableMultiple {
 public:
  explicit ObservableMultiple(int dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  }

  void set_entry(SymmetricForm form) {
    if (form.dim() != dim_) throw std::invalid_argument("entry dimension mismatch");
    if (form.degree() % 2 != 0) {
      throw std::invalid_argument("observable multiple entries must have even degree");
    }
    entries_.insert_or_assign(form.degree(), std::move(form));
  }

  const SymmetricForm* entry(int degree) const {
    auto it = entries_.find(degree);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<int, SymmetricForm>& entries() const { return entries_; }
  int dim() const { return dim_; }
  // 2n: the highest stored degree.
  int order() const { return entries_.empty() ? 0 : entries_.rbegin()->first; }

 private:
  int dim_;
  std::map<int, SymmetricForm> entries_;
};

// <A>_D = sum_k Tr e(2k, D) A_2k, the n-th order trace formula.
inline double generalized_trace(const DensityOperator& d, const ObservableMultiple& a) {
  if (a.dim() != d.dim()) throw std::invalid_argument("dimension mismatch");
  KahanSum sum;
  for (const auto& [deg, form] : a.entries()) {
    sum.add(average_form(d.matrix(), form));
  }
  return sum.value();
}

}  // namespace dequant

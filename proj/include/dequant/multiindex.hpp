#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dequant/numeric.hpp"

namespace dequant {

// Hard cap on tensor degree. At degree 8 a Gaussian moment of order 16 sums
// (16-1)!! = 2,027,025 pairings, which is still cheap; beyond that the
// enumeration stops being a desk-scale tool.
inline constexpr int kMaxFormDegree = 8;

// Symmetric tensors are stored with one coefficient per canonical
// (non-decreasing) multi-index i_1 <= ... <= i_k, laid out in lexicographic
// order. The helpers below convert between indices and storage offsets.

inline std::uint64_t num_canonical_indices(int dim, int degree) {
  return binomial(static_cast<std::uint64_t>(dim + degree - 1),
                  static_cast<std::uint64_t>(degree));
}

// Lexicographic rank of a sorted multi-index via the combinadic
// c_t = idx[t] + t over dim + k - 1 symbols.
inline std::uint64_t canonical_rank(std::span<const int> sorted_idx, int dim) {
  const int k = static_cast<int>(sorted_idx.size());
  const int n = dim + k - 1;
  std::uint64_t rank = 0;
  int prev = -1;
  for (int t = 0; t < k; ++t) {
    const int c = sorted_idx[t] + t;
    for (int j = prev + 1; j < c; ++j) {
      rank += binomial(static_cast<std::uint64_t>(n - 1 - j),
                       static_cast<std::uint64_t>(k - 1 - t));
    }
    prev = c;
  }
  return rank;
}

// Advances a sorted multi-index to its lexicographic successor; visiting all
// indices this way matches the storage order (offset = running counter).
inline bool next_canonical(std::span<int> idx, int dim) {
  const int k = static_cast<int>(idx.size());
  for (int t = k - 1; t >= 0; --t) {
    if (idx[t] < dim - 1) {
      const int v = idx[t] + 1;
      for (int u = t; u < k; ++u) idx[u] = v;
      return true;
    }
  }
  return false;
}

// Number of distinct position arrangements of the multiset: k!/prod(rep_j!).
inline double index_multiplicity(std::span<const int> sorted_idx) {
  const int k = static_cast<int>(sorted_idx.size());
  double mult = factorial(k);
  int run = 1;
  for (int t = 1; t <= k; ++t) {
    if (t < k && sorted_idx[t] == sorted_idx[t - 1]) {
      ++run;
    } else {
      mult /= factorial(run);
      run = 1;
    }
  }
  return mult;
}

inline void check_degree(int degree) {
  if (degree < 1 || degree > kMaxFormDegree) {
    throw std::invalid_argument("tensor degree must be in [1, " +
                                std::to_string(kMaxFormDegree) + "], got " +
                                std::to_string(degree));
  }
}

}  // namespace dequant

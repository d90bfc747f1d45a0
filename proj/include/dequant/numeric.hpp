#pragma once

#include <cstdint>

namespace dequant {

// Compensated (Kahan) accumulator. Pairing sums mix signs; plain summation
// loses digits there.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

// Exact for every (n, k) this library produces: k <= 8, n <= a few hundred.
constexpr std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;  // running value is C(n-k+i, i), always integral
  }
  return r;
}

// n! as a double; exact through 18! (< 2^53).
constexpr double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

// (m-1)!! for even m: the number of perfect matchings of m items.
constexpr std::uint64_t pairing_count(int m) {
  std::uint64_t r = 1;
  for (int i = m - 1; i > 1; i -= 2) r *= static_cast<std::uint64_t>(i);
  return r;
}

}  // namespace dequant

#include <catch2/catch_amalgamated.hpp>

#include "dequant/multiindex.hpp"

using namespace dequant;

TEST_CASE("binomial matches Pascal recursion") {
  for (int n = 0; n <= 24; ++n) {
    for (int k = 0; k <= n; ++k) {
      const auto lhs = binomial(n, k);
      const auto rhs = (k == 0 || k == n) ? 1 : binomial(n - 1, k - 1) + binomial(n - 1, k);
      REQUIRE(lhs == rhs);
    }
  }
  REQUIRE(binomial(3, 5) == 0);
}

TEST_CASE("canonical iteration is lexicographic and rank-consistent") {
  for (int dim : {1, 2, 3, 5}) {
    for (int degree = 1; degree <= 4; ++degree) {
      std::vector<int> mi(degree, 0);
      std::uint64_t off = 0;
      std::vector<int> prev;
      do {
        REQUIRE(std::is_sorted(mi.begin(), mi.end()));
        REQUIRE(canonical_rank(mi, dim) == off);
        if (!prev.empty()) REQUIRE(std::lexicographical_compare(prev.begin(), prev.end(), mi.begin(), mi.end()));
        prev = mi;
        ++off;
      } while (next_canonical(mi, dim));
      REQUIRE(off == num_canonical_indices(dim, degree));
    }
  }
}

TEST_CASE("index multiplicity counts distinct arrangements") {
  const std::vector<int> aabb{0, 0, 1, 1};
  REQUIRE(index_multiplicity(aabb) == 6.0);  // 4!/(2!2!)
  const std::vector<int> distinct{0, 1, 2};
  REQUIRE(index_multiplicity(distinct) == 6.0);
  const std::vector<int> all_same{2, 2, 2, 2};
  REQUIRE(index_multiplicity(all_same) == 1.0);
  const std::vector<int> single{3};
  REQUIRE(index_multiplicity(single) == 1.0);
}

TEST_CASE("factorial and pairing counts") {
  REQUIRE(factorial(0) == 1.0);
  REQUIRE(factorial(5) == 120.0);
  REQUIRE(factorial(16) == 20922789888000.0);
  REQUIRE(pairing_count(2) == 1);
  REQUIRE(pairing_count(4) == 3);
  REQUIRE(pairing_count(6) == 15);
  REQUIRE(pairing_count(8) == 105);
  REQUIRE(pairing_count(16) == 2027025);
}

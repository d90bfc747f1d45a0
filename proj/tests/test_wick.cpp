#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <vector>

#include "dequant/gaussian.hpp"
#include "dequant/mc.hpp"
#include "dequant/wick.hpp"
#include "oracles.hpp"

using namespace dequant;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SymmetricMatrix random_psd(int dim, Rng& rng) {
  Eigen::MatrixXd g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = rng.normal();
  return SymmetricMatrix::from_dense(g * g.transpose() / dim);
}

std::vector<Eigen::VectorXd> random_args(int count, int dim, Rng& rng) {
  std::vector<Eigen::VectorXd> args;
  for (int i = 0; i < count; ++i) args.push_back(oracles::random_vector(dim, rng));
  return args;
}

}  // namespace

TEST_CASE("fourth moment of the standard Gaussian along a basis vector is 3") {
  const SymmetricMatrix d = SymmetricMatrix::identity(2);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(2);
  e1[0] = 1.0;
  const std::vector<Eigen::VectorXd> args(4, e1);
  REQUIRE_THAT(gaussian_moment(d, args), WithinAbs(3.0, 1e-14));
}

TEST_CASE("odd moments vanish exactly") {
  Rng rng({51, 0});
  const SymmetricMatrix d = random_psd(3, rng);
  for (int m : {1, 3, 5, 7}) {
    REQUIRE(gaussian_moment(d, random_args(m, 3, rng)) == 0.0);
  }
}

TEST_CASE("gaussian_moment rejects bad input") {
  Rng rng({51, 1});
  const SymmetricMatrix d = random_psd(2, rng);
  REQUIRE_THROWS_AS(gaussian_moment(d, random_args(18, 2, rng)), std::invalid_argument);
  REQUIRE_THROWS_AS(gaussian_moment(d, random_args(2, 3, rng)), std::invalid_argument);
}

TEST_CASE("scalar sixth moment is 15") {
  const SymmetricMatrix d = SymmetricMatrix::identity(1);
  Eigen::VectorXd one(1);
  one[0] = 1.0;
  const std::vector<Eigen::VectorXd> args(6, one);
  REQUIRE_THAT(gaussian_moment(d, args), WithinAbs(15.0, 1e-13));
}

TEST_CASE("standard scalar moments reproduce (2k-1)!! for k <= 4") {
  const SymmetricMatrix d = SymmetricMatrix::identity(1);
  Eigen::VectorXd one(1);
  one[0] = 1.0;
  const double expected[] = {1.0, 3.0, 15.0, 105.0};
  for (int k = 1; k <= 4; ++k) {
    const std::vector<Eigen::VectorXd> args(2 * k, one);
    REQUIRE_THAT(gaussian_moment(d, args), WithinAbs(expected[k - 1], 1e-12));
  }
}

TEST_CASE("pairing enumeration visits exactly (m-1)!! matchings") {
  for (int m = 2; m <= 16; m += 2) {
    std::uint64_t count = 0;
    enumerate_pairings(m, [&count](auto pairs) {
      ++count;
      // every matching covers each element exactly once
      std::vector<bool> seen(16, false);
      for (const auto& [a, b] : pairs) {
        REQUIRE(!seen[a]);
        REQUIRE(!seen[b]);
        seen[a] = seen[b] = true;
      }
    });
    REQUIRE(count == pairing_count(m));
  }
  REQUIRE_THROWS_AS(enumerate_pairings(18, [](auto) {}), std::invalid_argument);
}

TEST_CASE("e(4, D) equals the explicit three-pairing formula") {
  Rng rng({52, 0});
  for (int rep = 0; rep < 20; ++rep) {
    const SymmetricMatrix d = random_psd(3, rng);
    const auto args = random_args(4, 3, rng);
    auto dphi = [&](int i, int j) { return args[i].dot(d.apply(args[j])); };
    const double expected = dphi(0, 2) * dphi(1, 3) + dphi(1, 2) * dphi(0, 3) +
                            dphi(0, 1) * dphi(2, 3);
    REQUIRE_THAT(gaussian_moment(d, args), WithinAbs(expected, 1e-12));
  }
}

TEST_CASE("gaussian_moment is permutation invariant in its arguments") {
  Rng rng({53, 0});
  const SymmetricMatrix d = random_psd(2, rng);
  auto args = random_args(4, 2, rng);
  const double base = gaussian_moment(d, args);
  std::vector<int> perm{0, 1, 2, 3};
  do {
    std::vector<Eigen::VectorXd> shuffled;
    for (int i : perm) shuffled.push_back(args[i]);
    REQUIRE_THAT(gaussian_moment(d, shuffled), WithinAbs(base, 1e-12 * (1.0 + std::abs(base))));
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST_CASE("order-2k moments are homogeneous of degree k in the covariance") {
  Rng rng({54, 0});
  const SymmetricMatrix d = random_psd(3, rng);
  SymmetricMatrix d_scaled = d;
  const double c = 2.7;
  d_scaled *= c;
  for (int k : {1, 2, 3}) {
    const auto args = random_args(2 * k, 3, rng);
    REQUIRE_THAT(gaussian_moment(d_scaled, args),
                 WithinRel(std::pow(c, k) * gaussian_moment(d, args), 1e-12));
  }
}

TEST_CASE("WickMoment is the lazy moment form") {
  Rng rng({55, 0});
  const SymmetricMatrix d = random_psd(2, rng);
  const WickMoment e4(4, d);
  const auto args = random_args(4, 2, rng);
  REQUIRE(e4(args) == gaussian_moment(d, args));
  REQUIRE_THROWS_AS(WickMoment(3, d), std::invalid_argument);
}

TEST_CASE("average of a quadratic form is Tr DA") {
  Rng rng({56, 0});
  for (int dim : {2, 5, 9}) {
    const SymmetricMatrix d = random_psd(dim, rng);
    SymmetricMatrix a(dim);
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) a.set(i, j, rng.normal());
    REQUIRE_THAT(average_form(d, SymmetricForm::from_matrix(a)),
                 WithinRel(trace_product(d, a), 1e-12));
  }
}

TEST_CASE("average of any odd-degree form is exactly zero") {
  Rng rng({57, 0});
  const SymmetricMatrix d = random_psd(3, rng);
  const SymmetricForm f = symmetrize(3, 3, oracles::random_dense_tensor(3, 3, rng));
  REQUIRE(average_form(d, f) == 0.0);
}

TEST_CASE("E |psi|^4 = d^2 + 2d under the standard Gaussian") {
  const SymmetricForm q = SymmetricForm::from_matrix(SymmetricMatrix::identity(2));
  const SymmetricForm quartic = sym_product(q, q);
  const SymmetricMatrix d = SymmetricMatrix::identity(2);
  REQUIRE_THAT(average_form(d, quartic), WithinAbs(8.0, 1e-12));

  // Monte Carlo cross-check
  const GaussianState state = make_state(d);
  const McEstimate mc = mc_mean(
      state, [](const Eigen::VectorXd& psi) { return std::pow(psi.squaredNorm(), 2); },
      1000000, {58, 0});
  REQUIRE(std::abs(mc.mean - 8.0) <= 4.0 * mc.se);
}

TEST_CASE("average_form matches Monte Carlo on random (D, A) pairs") {
  Rng rng({59, 0});
  int checked = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const int dim = 2 + static_cast<int>(rng() % 2);  // d in {2, 3}
    const int degree = 2 + static_cast<int>(rng() % 2);  // k in {2, 3}
    const SymmetricMatrix d = random_psd(dim, rng);
    const SymmetricForm a = symmetrize(degree, dim, oracles::random_dense_tensor(degree, dim, rng));
    const double exact = average_form(d, a);

    const GaussianState state = make_state(d);
    const McEstimate mc = mc_mean(
        state, [&a](const Eigen::VectorXd& psi) { return a.eval_same(psi); }, 1000000,
        {60, static_cast<std::uint64_t>(rep) * kStreamStride});
    REQUIRE(std::abs(mc.mean - exact) <= 4.0 * mc.se + 1e-12);
    ++checked;
  }
  REQUIRE(checked == 50);
}

TEST_CASE("observable multiple bookkeeping") {
  ObservableMultiple a(2);
  REQUIRE(a.order() == 0);
  a.set_entry(SymmetricForm::from_matrix(SymmetricMatrix::identity(2)));
  const SymmetricForm q = SymmetricForm::from_matrix(SymmetricMatrix::identity(2));
  a.set_entry(sym_product(q, q));
  REQUIRE(a.order() == 4);
  REQUIRE(a.entry(2) != nullptr);
  REQUIRE(a.entry(6) == nullptr);
  REQUIRE_THROWS_AS(a.set_entry(SymmetricForm(3, 2)), std::invalid_argument);
}

TEST_CASE("generalized trace") {
  SECTION("a multiple with only A_2 reduces to Tr D A_2") {
    Rng rng({61, 0});
    SymmetricMatrix d0 = random_psd(3, rng);
    d0 *= 1.0 / d0.trace();
    const DensityOperator d(d0);
    SymmetricMatrix m(3);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) m.set(i, j, rng.normal());
    ObservableMultiple a(3);
    a.set_entry(SymmetricForm::from_matrix(m));
    REQUIRE_THAT(generalized_trace(d, a), WithinRel(trace_product(d0, m), 1e-12));
  }
  SECTION("quartic-only multiple against the scaled-covariance value") {
    // A_4 = (psi.psi)^2 form, D = I/2: homogeneity gives 8 * (1/2)^2 = 2
    SymmetricMatrix half = SymmetricMatrix::identity(2);
    half *= 0.5;
    const DensityOperator d(half);
    const SymmetricForm q = SymmetricForm::from_matrix(SymmetricMatrix::identity(2));
    ObservableMultiple a(2);
    a.set_entry(sym_product(q, q));
    REQUIRE_THAT(generalized_trace(d, a), WithinAbs(2.0, 1e-12));
  }
  SECTION("the all-zero multiple averages to zero") {
    const DensityOperator d = DensityOperator::maximally_mixed(2);
    ObservableMultiple a(2);
    a.set_entry(SymmetricForm(2, 2));
    a.set_entry(SymmetricForm(4, 2));
    REQUIRE(generalized_trace(d, a) == 0.0);
  }
}

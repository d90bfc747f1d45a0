#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <sstream>

#include "dequant/functional.hpp"
#include "dequant/wick.hpp"
#include "oracles.hpp"

using namespace dequant;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}
}  // namespace

TEST_CASE("quadratic functional evaluates (A psi, psi)") {
  const AnalyticFunctional f = AnalyticFunctional::quadratic(SymmetricMatrix::identity(2));
  REQUIRE_THAT(f.eval(vec2(1, 1)), WithinAbs(2.0, 1e-15));
  REQUIRE(f.eval(Eigen::VectorXd::Zero(2)) == 0.0);  // f(0) = 0 structurally
}

TEST_CASE("polynomial stack: sum of (A_n psi, psi)^n with N = 2") {
  // A_1 = A_2 = I in d = 2
  AnalyticFunctional f(2);
  const SymmetricForm q = SymmetricForm::from_matrix(SymmetricMatrix::identity(2));
  f.add_polynomial(q);
  f.add_polynomial(sym_product(q, q));
  REQUIRE_THAT(f.eval(vec2(1, 0)), WithinAbs(2.0, 1e-14));  // 1 + 1
  REQUIRE_THAT(f.eval(vec2(1, 1)), WithinAbs(6.0, 1e-14));  // 2 + 4
}

TEST_CASE("second_derivative extracts the degree-2 term") {
  SECTION("of a quadratic form it is 2A") {
    SymmetricMatrix a(2);
    a.set(0, 0, 1.5);
    a.set(0, 1, -0.25);
    a.set(1, 1, 0.5);
    const SymmetricMatrix h = AnalyticFunctional::quadratic(a).second_derivative();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) REQUIRE_THAT(h(i, j), WithinAbs(2.0 * a(i, j), 1e-15));
  }
  SECTION("of a pure quartic it is the zero matrix") {
    AnalyticFunctional f(2);
    const SymmetricForm q = SymmetricForm::from_matrix(SymmetricMatrix::identity(2));
    f.add_polynomial(sym_product(q, q));
    const SymmetricMatrix h = f.second_derivative();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) REQUIRE(h(i, j) == 0.0);
  }
  SECTION("matches the finite-difference Hessian at 0") {
    // f = (A psi, psi) + (A psi, psi)^2: the quartic contributes nothing at
    // second order, so f''(0) = 2A
    Rng rng({31, 0});
    SymmetricMatrix a(3);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) a.set(i, j, rng.normal());
    AnalyticFunctional f(3);
    const SymmetricForm q = SymmetricForm::from_matrix(a);
    f.add_polynomial(q);
    f.add_polynomial(sym_product(q, q));
    const Eigen::MatrixXd fd = oracles::finite_difference_hessian(
        [&f](const Eigen::VectorXd& psi) { return f.eval(psi); }, 3, 1e-4);
    const SymmetricMatrix h = f.second_derivative();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) REQUIRE_THAT(h(i, j), WithinAbs(fd(i, j), 1e-6));
  }
}

TEST_CASE("second directional derivative matches (f''(0) u, u) for random directions") {
  Rng rng({32, 0});
  const int dim = 4;
  AnalyticFunctional f(dim);
  f.add_polynomial(symmetrize(2, dim, oracles::random_dense_tensor(2, dim, rng)));
  f.add_polynomial(symmetrize(4, dim, oracles::random_dense_tensor(4, dim, rng)));
  const SymmetricMatrix h = f.second_derivative();
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd u = oracles::random_unit(dim, rng);
    const double expected = u.dot(h.apply(u));
    const double fd = oracles::second_directional_derivative(
        [&f](const Eigen::VectorXd& psi) { return f.eval(psi); }, u, 1e-4);
    REQUIRE_THAT(fd, WithinRel(expected, 1e-5));
  }
}

TEST_CASE("amplification divides the variable by alpha") {
  SymmetricMatrix a(2);
  a.set(0, 0, 2.0);
  a.set(1, 1, -1.0);
  const AnalyticFunctional f = AnalyticFunctional::quadratic(a);

  SECTION("alpha = 1 is the identity") {
    const AnalyticFunctional g = amplify(f, 1.0);
    REQUIRE(g.term(2)->raw() == f.term(2)->raw());
  }
  SECTION("alpha = 0.5 doubles coefficients") {
    const AnalyticFunctional g = amplify(f, 0.5);
    for (std::size_t i = 0; i < g.term(2)->raw().size(); ++i) {
      REQUIRE(g.term(2)->raw()[i] == 2.0 * f.term(2)->raw()[i]);
    }
  }
  SECTION("round trip is exact to 1e-15 relative") {
    const AnalyticFunctional g = amplify(amplify(f, 0.3), 1.0 / 0.3);
    for (std::size_t i = 0; i < g.term(2)->raw().size(); ++i) {
      const double orig = f.term(2)->raw()[i];
      if (orig == 0.0) {
        REQUIRE(g.term(2)->raw()[i] == 0.0);
      } else {
        REQUIRE_THAT(g.term(2)->raw()[i], WithinRel(orig, 1e-15));
      }
    }
  }
  SECTION("eval scales by 1/alpha for arbitrary stacks") {
    Rng rng({38, 0});
    AnalyticFunctional g(2);
    g.add_polynomial(symmetrize(3, 2, oracles::random_dense_tensor(3, 2, rng)));
    g.add_polynomial(symmetrize(4, 2, oracles::random_dense_tensor(4, 2, rng)));
    const AnalyticFunctional ga = amplify(g, 0.02);
    for (int rep = 0; rep < 10; ++rep) {
      const Eigen::VectorXd psi = oracles::random_vector(2, rng);
      REQUIRE_THAT(ga.eval(psi), WithinRel(g.eval(psi) / 0.02, 1e-13));
    }
  }
}

TEST_CASE("amplified quadratic average equals the quantum trace exactly") {
  Rng rng({34, 0});
  Eigen::MatrixXd g(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) g(i, j) = rng.normal();
  SymmetricMatrix d0 = SymmetricMatrix::from_dense(g * g.transpose() / 3);
  d0 *= 1.0 / d0.trace();
  SymmetricMatrix a(3);
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) a.set(i, j, rng.normal());
  const AnalyticFunctional f = AnalyticFunctional::quadratic(a);
  const double alpha = 0.0137;
  SymmetricMatrix b = d0;
  b *= alpha;
  // <f_alpha>_{rho_B} = (1/alpha) Tr BA = Tr DA = Tr D f''(0) / 2, no o(1) term
  const AnalyticFunctional fa = amplify(f, alpha);
  const double avg = average_form(b, *fa.term(2)) / factorial(2);
  const double quantum = 0.5 * trace_product(d0, f.second_derivative());
  REQUIRE_THAT(avg, WithinRel(quantum, 1e-12));
}

TEST_CASE("growth envelope") {
  SECTION("single quadratic of norm 4: r = 2, c = 1") {
    SymmetricMatrix a(2);
    a.set(0, 0, 4.0);
    a.set(1, 1, 1.0);
    AnalyticFunctional f(2);
    f.set_term(SymmetricForm::from_matrix(a));
    const GrowthEnvelope env = growth_envelope(f);
    REQUIRE_THAT(env.r, WithinAbs(2.0, 1e-12));
    REQUIRE_THAT(env.c, WithinAbs(1.0, 1e-12));
  }
  SECTION("zero functional: c = r = 0") {
    const GrowthEnvelope env = growth_envelope(AnalyticFunctional(3));
    REQUIRE(env.c == 0.0);
    REQUIRE(env.r == 0.0);
  }
  SECTION("norms {2: 1, 4: 16}: r = 2, c = 1, binding at the quartic term") {
    AnalyticFunctional f(2);
    f.set_term(SymmetricForm::from_matrix(SymmetricMatrix::identity(2)));  // norm 1
    const SymmetricForm q = SymmetricForm::from_matrix(SymmetricMatrix::identity(2));
    f.set_term(sym_product(q, q) * 16.0);  // 16 (|psi|^2)^2, norm 16
    const GrowthEnvelope env = growth_envelope(f);
    REQUIRE_THAT(env.r, WithinAbs(2.0, 1e-9));
    REQUIRE_THAT(env.c, WithinAbs(1.0, 1e-9));
    REQUIRE(1.0 <= env.c * env.r * env.r * (1.0 + 1e-12));
    REQUIRE(16.0 <= env.c * std::pow(env.r, 4) * (1.0 + 1e-9));
  }
  SECTION("the envelope bounds every stored term norm") {
    Rng rng({35, 0});
    AnalyticFunctional f(3);
    f.add_polynomial(symmetrize(1, 3, oracles::random_dense_tensor(1, 3, rng)));
    f.add_polynomial(symmetrize(2, 3, oracles::random_dense_tensor(2, 3, rng)));
    f.add_polynomial(symmetrize(3, 3, oracles::random_dense_tensor(3, 3, rng)));
    f.add_polynomial(symmetrize(4, 3, oracles::random_dense_tensor(4, 3, rng)));
    const GrowthEnvelope env = growth_envelope(f);
    for (const auto& [deg, form] : f.terms()) {
      const double norm = norm_form(form).value;
      REQUIRE(norm <= env.c * std::pow(env.r, deg) * (1.0 + 1e-9));
    }
  }
}

TEST_CASE("functional definition grammar") {
  SECTION("parses degrees, indices and values") {
    const AnalyticFunctional f = parse_functional(
        "# a quadratic plus quartic stack\n"
        "dim 2\n"
        "2 0 0 1.0\n"
        "2 1 1 1.0\n"
        "4 0 0 1 1 2.0\n");
    REQUIRE(f.dim() == 2);
    REQUIRE(f.term(2) != nullptr);
    REQUIRE(f.term(4) != nullptr);
    const std::vector<int> i0011{0, 0, 1, 1};
    REQUIRE(f.term(4)->coeff(i0011) == 2.0);
    REQUIRE_THAT(f.eval(vec2(1, 0)), WithinAbs(0.5, 1e-15));
  }
  SECTION("index order inside a line does not matter") {
    const AnalyticFunctional f = parse_functional("dim 3\n2 2 0 5.0\n");
    const std::vector<int> idx{0, 2};
    REQUIRE(f.term(2)->coeff(idx) == 5.0);
  }
  SECTION("rejects malformed input") {
    REQUIRE_THROWS_AS(parse_functional("2 0 0 1.0\n"), std::invalid_argument);  // no dim
    REQUIRE_THROWS_AS(parse_functional("dim 2\n9 0 0 0 0 0 0 0 0 1.0\n"),
                      std::invalid_argument);  // degree over cap
    REQUIRE_THROWS_AS(parse_functional("dim 2\n2 0 5 1.0\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_functional("dim 2\n2 0 1 1.0\n2 1 0 3.0\n"),
                      std::invalid_argument);  // same multi-index twice
    REQUIRE_THROWS_AS(parse_functional("dim 2\n2 0 1\n"), std::invalid_argument);
  }
  SECTION("write/parse round trip") {
    Rng rng({36, 0});
    AnalyticFunctional f(2);
    f.add_polynomial(symmetrize(2, 2, oracles::random_dense_tensor(2, 2, rng)));
    f.add_polynomial(symmetrize(3, 2, oracles::random_dense_tensor(3, 2, rng)));
    std::ostringstream os;
    write_functional(os, f);
    const AnalyticFunctional g = parse_functional(os.str());
    for (const auto& [deg, form] : f.terms()) {
      REQUIRE(g.term(deg) != nullptr);
      REQUIRE(g.term(deg)->raw() == form.raw());
    }
  }
}

TEST_CASE("compiled functional agrees with eval") {
  Rng rng({37, 0});
  AnalyticFunctional f(3);
  f.add_polynomial(symmetrize(1, 3, oracles::random_dense_tensor(1, 3, rng)));
  f.add_polynomial(symmetrize(3, 3, oracles::random_dense_tensor(3, 3, rng)));
  f.add_polynomial(symmetrize(4, 3, oracles::random_dense_tensor(4, 3, rng)));
  const CompiledFunctional cf(f);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd psi = oracles::random_vector(3, rng);
    REQUIRE_THAT(cf(psi), WithinAbs(f.eval(psi), 1e-12 * (1.0 + std::abs(f.eval(psi)))));
  }
}

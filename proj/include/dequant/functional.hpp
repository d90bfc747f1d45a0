#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dequant/symmetric.hpp"

namespace dequant {

// Classical variable as a finite Taylor stack:
//
//   f(psi) = sum_k (1/k!) * T_k(psi, ..., psi),
//
// where the stored degree-k form T_k is the k-th derivative of f at zero.
// There is no degree-0 slot, so f(0) = 0 structurally. Truly analytic
// variables enter only through finitely many derivatives plus a growth
// envelope, so the polynomial part is all the representation needs.
class AnalyticFunctional {
 public:
  explicit AnalyticFunctional(int dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("functional dim must be >= 1");
  }

  // f(psi) = (A psi, psi), i.e. second derivative 2A.
  static AnalyticFunctional quadratic(const SymmetricMatrix& a) {
    AnalyticFunctional f(a.dim());
    f.set_term(SymmetricForm::from_matrix(a) * 2.0);
    return f;
  }

  int dim() const { return dim_; }
  bool empty() const { return terms_.empty(); }
  int max_degree() const { return terms_.empty() ? 0 : terms_.rbegin()->first; }
  const std::map<int, SymmetricForm>& terms() const { return terms_; }

  // Installs `form` as the derivative of its own degree, replacing any
  // previous term of that degree.
  void set_term(SymmetricForm form) {
    if (form.dim() != dim_) throw std::invalid_argument("term dimension mismatch");
    const int deg = form.degree();
    terms_.insert_or_assign(deg, std::move(form));
  }

  void add_term(const SymmetricForm& form) {
    if (form.dim() != dim_) throw std::invalid_argument("term dimension mismatch");
    auto it = terms_.find(form.degree());
    if (it == terms_.end()) {
      terms_.emplace(form.degree(), form);
    } else {
      it->second += form;
    }
  }

  // Adds the homogeneous contribution p(psi, ..., psi) to f; the stored
  // degree-k derivative picks up k! * p.
  void add_polynomial(const SymmetricForm& p) {
    add_term(p * factorial(p.degree()));
  }

  const SymmetricForm* term(int degree) const {
    auto it = terms_.find(degree);
    return it == terms_.end() ? nullptr : &it->second;
  }

  double eval(const Eigen::VectorXd& psi) const {
    if (psi.size() != dim_) throw std::invalid_argument("argument dimension mismatch");
    KahanSum s;
    for (const auto& [deg, form] : terms_) {
      s.add(form.eval_same(psi) / factorial(deg));
    }
    return s.value();
  }

  // The degree-2 term as a symmetric operator; zero matrix if absent.
  SymmetricMatrix second_derivative() const {
    const SymmetricForm* t = term(2);
    return t ? t->to_matrix() : SymmetricMatrix(dim_);
  }

 private:
  int dim_;
  std::map<int, SymmetricForm> terms_;
};

// f_alpha = f / alpha: every coefficient divided by alpha.
inline AnalyticFunctional amplify(const AnalyticFunctional& f, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  AnalyticFunctional out(f.dim());
  for (const auto& [deg, form] : f.terms()) {
    out.set_term(form * (1.0 / alpha));
  }
  return out;
}

// Exponential-growth envelope: |f^(n)(0)| <= c * r^n for every stored n.
struct GrowthEnvelope {
  double c = 0.0;
  double r = 0.0;
};

// Minimal-c envelope over the stored derivatives: r is the largest n-th root
// of a term norm, c the largest norm / r^n ratio. Term norms come from
// norm_form (exact for degrees 1 and 2, sampled lower bounds above).
inline GrowthEnvelope growth_envelope(const AnalyticFunctional& f,
                                      int norm_samples = 4096) {
  std::vector<std::pair<int, double>> norms;
  for (const auto& [deg, form] : f.terms()) {
    norms.emplace_back(deg, norm_form(form, norm_samples).value);
  }
  GrowthEnvelope env;
  for (const auto& [deg, norm] : norms) {
    if (norm > 0.0) env.r = std::max(env.r, std::pow(norm, 1.0 / deg));
  }
  if (env.r > 0.0) {
    for (const auto& [deg, norm] : norms) {
      env.c = std::max(env.c, norm / std::pow(env.r, deg));
    }
  }
  return env;
}

// Flattened evaluation plan for Monte Carlo inner loops: one weighted
// monomial per stored coefficient, weight = coeff * multiplicity / degree!.
class CompiledFunctional {
 public:
  explicit CompiledFunctional(const AnalyticFunctional& f) : dim_(f.dim()) {
    for (const auto& [deg, form] : f.terms()) {
      const double inv_fact = 1.0 / factorial(deg);
      std::vector<int> mi(deg, 0);
      std::size_t off = 0;
      do {
        const double c = form.raw()[off++];
        if (c != 0.0) {
          Term t;
          t.weight = c * index_multiplicity(mi) * inv_fact;
          t.degree = deg;
          std::copy(mi.begin(), mi.end(), t.idx.begin());
          terms_.push_back(t);
        }
      } while (next_canonical(mi, dim_));
    }
  }

  template <class Derived>
  double operator()(const Eigen::MatrixBase<Derived>& psi) const {
    KahanSum s;
    for (const Term& t : terms_) {
      double p = t.weight;
      for (int u = 0; u < t.degree; ++u) p *= psi[t.idx[u]];
      s.add(p);
    }
    return s.value();
  }

 private:
  struct Term {
    double weight;
    int degree;
    std::array<int, kMaxFormDegree> idx;
  };
  int dim_;
  std::vector<Term> terms_;
};

// Text format for functional definitions. Grammar (one item per line):
//
//   dim <d>                     required, first non-comment line
//   <degree> <i_1> ... <i_k> <value>
//
// Each coefficient line sets the canonical (symmetrized) coefficient of the
// degree-k derivative at the multi-index {i_1, ..., i_k}; index order within
// a line does not matter. Listing the same multi-index twice is an error.
// '#' starts a comment.
inline AnalyticFunctional parse_functional(std::istream& in) {
  std::string line;
  int dim = 0;
  bool have_dim = false;
  AnalyticFunctional out(1);
  std::map<int, SymmetricForm> partial;
  std::map<int, std::vector<bool>> seen;
  int lineno = 0;

  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument("functional definition line " +
                                std::to_string(lineno) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;  // blank
    if (first == "dim") {
      if (have_dim) fail("duplicate dim line");
      if (!(ls >> dim) || dim < 1) fail("bad dim");
      have_dim = true;
      out = AnalyticFunctional(dim);
      continue;
    }
    if (!have_dim) fail("dim must come before coefficient lines");
    int degree = 0;
    try {
      degree = std::stoi(first);
    } catch (const std::exception&) {
      fail("expected a degree, got '" + first + "'");
    }
    if (degree < 1 || degree > kMaxFormDegree) fail("degree out of range");
    std::vector<int> idx(degree);
    for (int t = 0; t < degree; ++t) {
      if (!(ls >> idx[t])) fail("expected " + std::to_string(degree) + " indices");
      if (idx[t] < 0 || idx[t] >= dim) fail("index out of range");
    }
    double value = 0.0;
    if (!(ls >> value)) fail("expected a coefficient value");
    std::string rest;
    if (ls >> rest) fail("trailing tokens '" + rest + "'");

    auto [it, created] = partial.try_emplace(degree, SymmetricForm(degree, dim));
    std::sort(idx.begin(), idx.end());
    const std::size_t rank = canonical_rank(idx, dim);
    auto& marks = seen[degree];
    if (marks.empty()) marks.assign(it->second.size(), false);
    if (marks[rank]) fail("multi-index listed twice");
    marks[rank] = true;
    it->second.set_coeff(idx, value);
  }
  if (!have_dim) throw std::invalid_argument("functional definition has no dim line");
  for (auto& [deg, form] : partial) out.set_term(std::move(form));
  return out;
}

inline AnalyticFunctional parse_functional(const std::string& text) {
  std::istringstream in(text);
  return parse_functional(in);
}

inline void write_functional(std::ostream& os, const AnalyticFunctional& f) {
  os << "dim " << f.dim() << "\n";
  char buf[64];
  for (const auto& [deg, form] : f.terms()) {
    std::vector<int> mi(deg, 0);
    std::size_t off = 0;
    do {
      const double c = form.raw()[off++];
      if (c != 0.0) {
        os << deg;
        for (int t = 0; t < deg; ++t) os << ' ' << mi[t];
        std::snprintf(buf, sizeof buf, "%.17g", c);
        os << ' ' << buf << "\n";
      }
    } while (next_canonical(mi, f.dim()));
  }
}

}  // namespace dequant

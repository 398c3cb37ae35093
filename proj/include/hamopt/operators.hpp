#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "hamopt/errors.hpp"
#include "hamopt/hilbert.hpp"
#include "hamopt/sparse.hpp"

namespace hamopt {

using SiteMatrix = Eigen::MatrixXcd;

/// Single-site spin matrices in the local basis used by SpinBasis:
/// state s in [0, d) carries magnetization m = S - s, S = (d-1)/2,
/// so state 0 is maximally polarized up.
inline SiteMatrix site_identity(int d) { return SiteMatrix::Identity(d, d); }

inline SiteMatrix spin_z(int d) {
  double s = 0.5 * (d - 1);
  SiteMatrix m = SiteMatrix::Zero(d, d);
  for (int i = 0; i < d; ++i) m(i, i) = Complex(s - i, 0.0);
  return m;
}

inline SiteMatrix spin_plus(int d) {
  double s = 0.5 * (d - 1);
  SiteMatrix m = SiteMatrix::Zero(d, d);
  for (int i = 1; i < d; ++i) {
    double mag = s - i;
    m(i - 1, i) = Complex(std::sqrt(s * (s + 1) - mag * (mag + 1)), 0.0);
  }
  return m;
}

inline SiteMatrix spin_minus(int d) { return spin_plus(d).adjoint(); }

inline SiteMatrix spin_x(int d) { return 0.5 * (spin_plus(d) + spin_minus(d)); }

inline SiteMatrix spin_y(int d) {
  return Complex(0.0, -0.5) * (spin_plus(d) - spin_minus(d));
}

/// Product of single-site operators with a scalar coefficient.
/// An empty factor list is the identity times the coefficient.
struct OperatorTerm {
  struct Factor {
    std::size_t site;
    SiteMatrix matrix;
  };

  std::vector<Factor> factors;
  Complex coefficient{1.0, 0.0};

  OperatorTerm() = default;
  OperatorTerm(std::vector<Factor> fs, Complex coeff)
      : factors(std::move(fs)), coefficient(coeff) {
    std::sort(factors.begin(), factors.end(),
              [](const Factor& a, const Factor& b) { return a.site < b.site; });
    for (std::size_t i = 1; i < factors.size(); ++i)
      if (factors[i].site == factors[i - 1].site)
        throw ValidationError("OperatorTerm: duplicate factor on site " +
                              std::to_string(factors[i].site));
    for (const auto& f : factors)
      if (f.matrix.rows() != f.matrix.cols() || f.matrix.rows() < 2)
        throw ValidationError("OperatorTerm: factor matrix must be square, dim >= 2");
  }

  std::size_t max_site() const {
    return factors.empty() ? 0 : factors.back().site;
  }

  std::string describe() const {
    std::string s = "sites [";
    for (std::size_t i = 0; i < factors.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(factors[i].site);
    }
    s += "]";
    return s;
  }
};

struct OperatorSum {
  std::vector<OperatorTerm> terms;
  std::string name;
  bool hermitian = true;  // verified at assembly, not assumed

  OperatorSum() = default;
  explicit OperatorSum(std::string n) : name(std::move(n)) {}

  OperatorSum& add(OperatorTerm t) {
    terms.push_back(std::move(t));
    return *this;
  }
  OperatorSum& add(std::vector<OperatorTerm::Factor> fs, Complex coeff) {
    terms.emplace_back(std::move(fs), coeff);
    return *this;
  }

  OperatorSum& operator+=(const OperatorSum& other) {
    terms.insert(terms.end(), other.terms.begin(), other.terms.end());
    return *this;
  }

  OperatorSum scaled(Complex c) const {
    OperatorSum out = *this;
    for (auto& t : out.terms) t.coefficient *= c;
    return out;
  }
};

namespace detail {

/// Emits (target_code, amplitude) for one term applied to one input
/// configuration. Distinct branch choices reach distinct targets, so no
/// cancellation can hide a genuine sector violation.
template <typename Emit>
void apply_term_to_config(const OperatorTerm& term, const SpinBasis& basis,
                          std::uint64_t code, Emit&& emit) {
  const std::size_t nf = term.factors.size();
  std::vector<int> old_state(nf);
  for (std::size_t f = 0; f < nf; ++f)
    old_state[f] = basis.site_state(code, int(term.factors[f].site));

  std::vector<int> choice(nf, 0);
  const int d = basis.local_dim();
  while (true) {
    Complex amp = term.coefficient;
    std::uint64_t target = code;
    bool zero = false;
    for (std::size_t f = 0; f < nf; ++f) {
      Complex entry = term.factors[f].matrix(choice[f], old_state[f]);
      if (std::abs(entry) < 1e-15) {
        zero = true;
        break;
      }
      amp *= entry;
      target = basis.with_site_state(target, int(term.factors[f].site), choice[f]);
    }
    if (!zero && std::abs(amp) > 1e-15) emit(target, amp);
    if (nf == 0) break;
    std::size_t f = 0;
    while (f < nf && ++choice[f] == d) choice[f++] = 0;
    if (f == nf) break;
  }
}

}  // namespace detail

/// Assembles an operator sum into a sparse matrix over the basis,
/// H[r][c] = <r|O|c>. Sector bases reject operators whose action leaves
/// the magnetization sector.
inline SparseMatrix assemble_sparse(const OperatorSum& op, const SpinBasis& basis) {
  for (const auto& t : op.terms)
    if (!t.factors.empty() && t.max_site() >= std::size_t(basis.n_sites()))
      throw DimensionError("assemble_sparse: operator '" + op.name + "' term " +
                           t.describe() + " exceeds chain length " +
                           std::to_string(basis.n_sites()));
  for (const auto& t : op.terms)
    for (const auto& f : t.factors)
      if (f.matrix.rows() != basis.local_dim())
        throw DimensionError("assemble_sparse: factor dimension " +
                             std::to_string(f.matrix.rows()) +
                             " does not match local dimension " +
                             std::to_string(basis.local_dim()));

  // Out-of-sector amplitudes are judged per input configuration after all
  // terms ran: sums like sx.sx + sy.sy leave the sector term by term but
  // cancel exactly in the sum.
  std::vector<Triplet> trips;
  std::map<std::uint64_t, Complex> leaked;
  std::map<std::uint64_t, std::size_t> leaked_term;
  for (std::size_t col = 0; col < basis.dim(); ++col) {
    const std::uint64_t code = basis.config_code(col);
    leaked.clear();
    leaked_term.clear();
    for (std::size_t ti = 0; ti < op.terms.size(); ++ti) {
      detail::apply_term_to_config(
          op.terms[ti], basis, code, [&](std::uint64_t target, Complex amp) {
            auto row = basis.find_code(target);
            if (row) {
              trips.push_back({*row, col, amp});
            } else {
              leaked[target] += amp;
              leaked_term.emplace(target, ti);
            }
          });
    }
    for (const auto& [target, amp] : leaked)
      if (std::abs(amp) > 1e-12) {
        std::size_t ti = leaked_term[target];
        throw ValidationError(
            "assemble_sparse: operator '" + op.name + "' term #" +
            std::to_string(ti) + " " + op.terms[ti].describe() +
            " maps configuration " + std::to_string(code) +
            " out of the magnetization sector");
      }
  }
  SparseMatrix m = SparseMatrix::from_triplets(basis.dim(), basis.dim(),
                                               std::move(trips), 1e-15);
  if (op.hermitian && m.hermitian_defect() >= 1e-12)
    throw ValidationError("assemble_sparse: operator '" + op.name +
                          "' flagged hermitian but defect is " +
                          std::to_string(m.hermitian_defect()));
  return m;
}

struct OperatorBasis {
  std::vector<OperatorSum> operators;
  std::vector<std::string> labels;

  OperatorBasis() = default;
  explicit OperatorBasis(std::vector<OperatorSum> ops) : operators(std::move(ops)) {
    if (operators.empty())
      throw ValidationError("OperatorBasis: at least one operator required");
    labels.reserve(operators.size());
    for (const auto& o : operators) labels.push_back(o.name);
    auto sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ValidationError("OperatorBasis: duplicate operator label");
  }

  std::size_t size() const { return operators.size(); }

  std::size_t index_of(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end())
      throw ValidationError("OperatorBasis: no operator labeled '" + label + "'");
    return std::size_t(it - labels.begin());
  }
};

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Box() = default;
  Box(Eigen::VectorXd l, Eigen::VectorXd h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size())
      throw ValidationError("Box: bound length mismatch");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (!(lo[i] < hi[i]))
        throw ValidationError("Box: requires lo < hi per coordinate");
  }

  static Box cube(std::size_t dim, double lo_v, double hi_v) {
    return Box(Eigen::VectorXd::Constant(Eigen::Index(dim), lo_v),
               Eigen::VectorXd::Constant(Eigen::Index(dim), hi_v));
  }

  std::size_t dim() const { return std::size_t(lo.size()); }

  bool contains(const Eigen::VectorXd& p) const {
    if (p.size() != lo.size()) throw DimensionError("Box: point length mismatch");
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }
};

/// Maps the optimization parameters p (length P) to the M operator-basis
/// coefficients. The linear kind is the identity with P = M; the polynomial
/// kind evaluates a fixed monomial table per coefficient.
class ParametrizationMap {
 public:
  enum class Kind { linear, polynomial };

  struct Monomial {
    double coeff;
    std::vector<unsigned> exponents;  // length P
  };

  static ParametrizationMap linear(std::size_t m, Box box) {
    if (box.dim() != m)
      throw ValidationError("ParametrizationMap: box dimension must equal M");
    ParametrizationMap pm;
    pm.kind_ = Kind::linear;
    pm.n_params_ = m;
    pm.n_coeffs_ = m;
    pm.box_ = std::move(box);
    return pm;
  }

  static ParametrizationMap polynomial(std::size_t p, std::size_t m,
                                       std::vector<std::vector<Monomial>> table,
                                       Box box) {
    if (table.size() != m)
      throw ValidationError("ParametrizationMap: table must have M rows");
    if (box.dim() != p)
      throw ValidationError("ParametrizationMap: box dimension must equal P");
    for (const auto& row : table)
      for (const auto& mono : row)
        if (mono.exponents.size() != p)
          throw ValidationError("ParametrizationMap: exponent length must equal P");
    ParametrizationMap pm;
    pm.kind_ = Kind::polynomial;
    pm.n_params_ = p;
    pm.n_coeffs_ = m;
    pm.table_ = std::move(table);
    pm.box_ = std::move(box);
    return pm;
  }

  Kind kind() const { return kind_; }
  std::size_t n_params() const { return n_params_; }
  std::size_t n_coeffs() const { return n_coeffs_; }
  const Box& box() const { return box_; }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& p) const {
    if (std::size_t(p.size()) != n_params_)
      throw DimensionError("ParametrizationMap: expected " +
                           std::to_string(n_params_) + " parameters, got " +
                           std::to_string(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (!std::isfinite(p[i]))
        throw ValidationError("ParametrizationMap: non-finite parameter " +
                              std::to_string(i));
    if (kind_ == Kind::linear) return p;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(Eigen::Index(n_coeffs_));
    for (std::size_t m = 0; m < n_coeffs_; ++m) {
      double acc = 0.0;
      for (const auto& mono : table_[m]) {
        double v = mono.coeff;
        for (std::size_t j = 0; j < n_params_; ++j)
          for (unsigned e = 0; e < mono.exponents[j]; ++e) v *= p[Eigen::Index(j)];
        acc += v;
      }
      if (!std::isfinite(acc))
        throw ValidationError("ParametrizationMap: non-finite coefficient " +
                              std::to_string(m));
      c[Eigen::Index(m)] = acc;
    }
    return c;
  }

 private:
  Kind kind_ = Kind::linear;
  std::size_t n_params_ = 0;
  std::size_t n_coeffs_ = 0;
  std::vector<std::vector<Monomial>> table_;
  Box box_;
};

/// The M operator matrices over one basis, expanded onto a shared union
/// sparsity pattern so that H(gamma) reduces to an AXPY over values.
struct AssembledOperators {
  std::shared_ptr<const SparseMatrix::Pattern> pattern;
  std::vector<std::vector<Complex>> value_sets;  // M arrays, union-aligned
  std::size_t dim = 0;

  static AssembledOperators build(const OperatorBasis& ops, const SpinBasis& basis) {
    std::vector<SparseMatrix> mats;
    mats.reserve(ops.size());
    for (const auto& o : ops.operators) mats.push_back(assemble_sparse(o, basis));

    std::vector<Triplet> union_trips;
    for (const auto& m : mats) {
      const auto& pat = *m.pattern();
      for (std::size_t r = 0; r < pat.rows; ++r)
        for (std::size_t k = pat.row_ptr[r]; k < pat.row_ptr[r + 1]; ++k)
          union_trips.push_back({r, pat.col_idx[k], Complex(1.0, 0.0)});
    }
    SparseMatrix shape = SparseMatrix::from_triplets(basis.dim(), basis.dim(),
                                                     std::move(union_trips));
    AssembledOperators out;
    out.pattern = shape.pattern();
    out.dim = basis.dim();
    out.value_sets.reserve(mats.size());
    for (const auto& m : mats) {
      std::vector<Complex> vals(out.pattern->col_idx.size(), Complex(0.0, 0.0));
      const auto& pat = *m.pattern();
      for (std::size_t r = 0; r < pat.rows; ++r) {
        auto ub = out.pattern->col_idx.begin() + long(out.pattern->row_ptr[r]);
        auto ue = out.pattern->col_idx.begin() + long(out.pattern->row_ptr[r + 1]);
        for (std::size_t k = pat.row_ptr[r]; k < pat.row_ptr[r + 1]; ++k) {
          auto it = std::lower_bound(ub, ue, pat.col_idx[k]);
          vals[std::size_t(it - out.pattern->col_idx.begin())] = m.values()[k];
        }
      }
      out.value_sets.push_back(std::move(vals));
    }
    return out;
  }

  SparseMatrix combine(const Eigen::VectorXd& coeffs) const {
    return SparseMatrix::weighted_sum(pattern, value_sets, coeffs);
  }

  SparseMatrix single(std::size_t m) const {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(Eigen::Index(value_sets.size()));
    w[Eigen::Index(m)] = 1.0;
    return combine(w);
  }
};

/// Operator basis plus parametrization; assembled matrices are cached per
/// SpinBasis so the optimizer pays assembly once per system size.
class HamiltonianAnsatz {
 public:
  HamiltonianAnsatz(OperatorBasis ops, ParametrizationMap map)
      : ops_(std::move(ops)), map_(std::move(map)) {
    if (map_.n_coeffs() != ops_.size())
      throw ValidationError("HamiltonianAnsatz: map emits " +
                            std::to_string(map_.n_coeffs()) +
                            " coefficients for " + std::to_string(ops_.size()) +
                            " operators");
  }

  const OperatorBasis& operator_basis() const { return ops_; }
  const ParametrizationMap& map() const { return map_; }
  std::size_t n_params() const { return map_.n_params(); }
  std::size_t n_operators() const { return ops_.size(); }

  const AssembledOperators& assembled(const std::shared_ptr<const SpinBasis>& basis) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(basis.get());
    if (it != cache_.end()) return it->second.second;
    auto [pos, inserted] = cache_.emplace(
        basis.get(),
        std::make_pair(basis, AssembledOperators::build(ops_, *basis)));
    (void)inserted;
    return pos->second.second;
  }

  SparseMatrix at(const Eigen::VectorXd& gamma,
                  const std::shared_ptr<const SpinBasis>& basis) const {
    Eigen::VectorXd c = map_.evaluate(gamma);
    return assembled(basis).combine(c);
  }

 private:
  OperatorBasis ops_;
  ParametrizationMap map_;
  mutable std::mutex mutex_;
  mutable std::map<const SpinBasis*,
                   std::pair<std::shared_ptr<const SpinBasis>, AssembledOperators>>
      cache_;
};

inline SparseMatrix hamiltonian_at(const HamiltonianAnsatz& ansatz,
                                   const Eigen::VectorXd& gamma,
                                   const std::shared_ptr<const SpinBasis>& basis) {
  return ansatz.at(gamma, basis);
}

}  // namespace hamopt

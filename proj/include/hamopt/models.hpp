#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hamopt/errors.hpp"
#include "hamopt/hilbert.hpp"
#include "hamopt/operators.hpp"

namespace hamopt {

/// S_i . S_j
inline OperatorSum bond_heisenberg(std::size_t i, std::size_t j, int d,
                                   std::string name = "") {
  OperatorSum op(name.empty() ? "ss_" + std::to_string(i) + "_" + std::to_string(j)
                              : std::move(name));
  op.add({{i, spin_x(d)}, {j, spin_x(d)}}, Complex(1, 0));
  op.add({{i, spin_y(d)}, {j, spin_y(d)}}, Complex(1, 0));
  op.add({{i, spin_z(d)}, {j, spin_z(d)}}, Complex(1, 0));
  return op;
}

/// (S_i . S_j)^2 = sum_ab (S^a S^b)_i (S^a S^b)_j
inline OperatorSum bond_biquadratic(std::size_t i, std::size_t j, int d,
                                    std::string name = "") {
  OperatorSum op(name.empty() ? "ssq_" + std::to_string(i) + "_" + std::to_string(j)
                              : std::move(name));
  std::vector<SiteMatrix> s{spin_x(d), spin_y(d), spin_z(d)};
  for (const auto& a : s)
    for (const auto& b : s)
      op.add({{i, SiteMatrix(a * b)}, {j, SiteMatrix(a * b)}}, Complex(1, 0));
  return op;
}

/// (sum_i S^z_i)^2
inline OperatorSum symmetry_total_sz_squared(std::size_t n, int d) {
  OperatorSum op("total_sz_squared");
  SiteMatrix sz = spin_z(d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j)
        op.add({{i, SiteMatrix(sz * sz)}}, Complex(1, 0));
      else
        op.add({{i, sz}, {j, sz}}, Complex(1, 0));
    }
  return op;
}

/// S_tot^2 = sum_ab (sum_i S^a_i)(sum_j S^b_j), the total-spin Casimir.
inline OperatorSum symmetry_total_spin_casimir(std::size_t n, int d) {
  OperatorSum op("total_spin_casimir");
  std::vector<SiteMatrix> comps{spin_x(d), spin_y(d), spin_z(d)};
  for (const auto& s : comps)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j)
          op.add({{i, SiteMatrix(s * s)}}, Complex(1, 0));
        else
          op.add({{i, s}, {j, s}}, Complex(1, 0));
      }
  return op;
}

inline OperatorSum named_symmetry_operator(const std::string& name, std::size_t n,
                                           int d) {
  if (name == "total_sz_squared") return symmetry_total_sz_squared(n, d);
  if (name == "total_spin_casimir") return symmetry_total_spin_casimir(n, d);
  throw ConfigError("unknown symmetry operator '" + name + "'");
}

namespace detail {

/// Translation sum of a site-character pattern over the chain. Characters:
/// 'z' -> S^z, '+' -> S^+, '-' -> S^-, '.' -> identity (interior only).
/// Non-self-adjoint patterns get their hermitian conjugate appended.
inline OperatorSum pattern_sum(const std::string& pattern, std::size_t n_sites,
                               Boundary boundary, const std::string& label) {
  const std::size_t span = pattern.size();
  if (span > n_sites)
    throw ValidationError("pattern '" + pattern + "' longer than the chain");
  auto site_matrix = [](char c) -> SiteMatrix {
    switch (c) {
      case 'z': return spin_z(2);
      case '+': return spin_plus(2);
      case '-': return spin_minus(2);
      default: throw ValidationError("pattern: unknown character");
    }
  };
  bool self_adjoint = pattern.find('+') == std::string::npos &&
                      pattern.find('-') == std::string::npos;

  OperatorSum op(label);
  const std::size_t anchors =
      boundary == Boundary::periodic ? n_sites : n_sites - span + 1;
  for (std::size_t a = 0; a < anchors; ++a) {
    std::vector<OperatorTerm::Factor> fs, fs_hc;
    for (std::size_t k = 0; k < span; ++k) {
      if (pattern[k] == '.') continue;
      std::size_t site = (a + k) % n_sites;
      fs.push_back({site, site_matrix(pattern[k])});
      char hc = pattern[k] == '+' ? '-' : (pattern[k] == '-' ? '+' : 'z');
      fs_hc.push_back({site, site_matrix(hc)});
    }
    op.add(fs, Complex(1, 0));
    if (!self_adjoint) op.add(std::move(fs_hc), Complex(1, 0));
  }
  return op;
}

}  // namespace detail

struct PauliStringFamilyOptions {
  int max_weight = 4;       // non-identity sites per string
  int max_range = 4;        // span of two-site strings
  int max_range_multi = 3;  // span of weight >= 3 strings (contiguous)
  bool include_z_field = false;
};

/// Magnetization-conserving string family on a spin-1/2 chain: z-strings
/// plus strings with balanced '+'/'-' counts, each closed under hermitian
/// conjugation. Canonical form puts '+' before '-' within each string, so
/// the conjugate partner never appears twice.
inline OperatorBasis model_pauli_strings_k_local(std::size_t n_sites,
                                                 Boundary boundary,
                                                 const PauliStringFamilyOptions& o = {}) {
  if (o.max_weight < 2 || o.max_range < 1 || o.max_range_multi < 2)
    throw ConfigError("pauli_strings_k_local: max_weight >= 2, max_range >= 1, "
                      "max_range_multi >= 2 required");
  if (boundary == Boundary::periodic && std::size_t(2 * o.max_range) > n_sites)
    throw ConfigError("pauli_strings_k_local: periodic range exceeds n/2, "
                      "operators would coincide");

  std::vector<OperatorSum> ops;
  if (o.include_z_field)
    ops.push_back(detail::pattern_sum("z", n_sites, boundary, "z"));

  for (int r = 1; r <= o.max_range; ++r) {
    std::string gap(std::size_t(r - 1), '.');
    ops.push_back(detail::pattern_sum("z" + gap + "z", n_sites, boundary,
                                      "zz_" + std::to_string(r)));
    ops.push_back(detail::pattern_sum("+" + gap + "-", n_sites, boundary,
                                      "hop_" + std::to_string(r)));
  }

  // contiguous strings of weight w in [3, max_weight], span = weight,
  // built from {z} and balanced {+,-} pairs, '+' preceding '-'
  for (int w = 3; w <= o.max_weight; ++w) {
    if (w > o.max_range_multi + 1) break;
    std::vector<std::string> patterns;
    std::string cur(std::size_t(w), 'z');
    // enumerate by choosing ordered position pairs for each hop
    for (int hops = 0; 2 * hops <= w; ++hops) {
      if (hops == 0) {
        patterns.push_back(cur);
        continue;
      }
      // place `hops` '+' and `hops` '-' among w slots, '+' first overall
      std::vector<int> slots(std::size_t(w));
      std::function<void(std::string&, int, int)> place =
          [&](std::string& s, int plus_left, int minus_left) {
            int idx = int(s.size());
            if (idx == w) {
              if (plus_left == 0 && minus_left == 0 &&
                  s.find('+') < s.find('-'))
                patterns.push_back(s);
              return;
            }
            if (plus_left > 0) {
              s.push_back('+');
              place(s, plus_left - 1, minus_left);
              s.pop_back();
            }
            if (minus_left > 0) {
              s.push_back('-');
              place(s, plus_left, minus_left - 1);
              s.pop_back();
            }
            s.push_back('z');
            place(s, plus_left, minus_left);
            s.pop_back();
          };
      std::string s;
      place(s, hops, hops);
    }
    for (const auto& p : patterns)
      ops.push_back(detail::pattern_sum(p, n_sites, boundary, p));
  }
  return OperatorBasis(std::move(ops));
}

/// {sum_i S_i.S_{i+1}, sum_i (S_i.S_{i+1})^2} on a spin-1 chain.
inline OperatorBasis model_heisenberg_bilinear_biquadratic(std::size_t n_sites,
                                                           Boundary boundary,
                                                           bool include_biquadratic = true) {
  const std::size_t bonds = boundary == Boundary::periodic ? n_sites : n_sites - 1;
  OperatorSum bl("bilinear"), bq("biquadratic");
  for (std::size_t i = 0; i < bonds; ++i) {
    bl += bond_heisenberg(i, (i + 1) % n_sites, 3);
    bq += bond_biquadratic(i, (i + 1) % n_sites, 3);
  }
  bl.name = "bilinear";
  bq.name = "biquadratic";
  std::vector<OperatorSum> ops{bl};
  if (include_biquadratic) ops.push_back(bq);
  return OperatorBasis(std::move(ops));
}

/// {J1 bond sum, J2 bond sum} on a spin-1/2 chain.
inline OperatorBasis model_j1_j2(std::size_t n_sites, Boundary boundary) {
  OperatorSum j1("j1"), j2("j2");
  const std::size_t b1 = boundary == Boundary::periodic ? n_sites : n_sites - 1;
  const std::size_t b2 = boundary == Boundary::periodic ? n_sites : n_sites - 2;
  for (std::size_t i = 0; i < b1; ++i) j1 += bond_heisenberg(i, (i + 1) % n_sites, 2);
  for (std::size_t i = 0; i < b2; ++i) j2 += bond_heisenberg(i, (i + 2) % n_sites, 2);
  j1.name = "j1";
  j2.name = "j2";
  return OperatorBasis({j1, j2});
}

/// {sum_i sigma^z_i sigma^z_{i+1}, sum_i sigma^x_i} in Pauli convention.
inline OperatorBasis model_transverse_field_ising(std::size_t n_sites,
                                                  Boundary boundary) {
  SiteMatrix pz = 2.0 * spin_z(2), px = 2.0 * spin_x(2);
  OperatorSum zz("zz"), x("x");
  const std::size_t bonds = boundary == Boundary::periodic ? n_sites : n_sites - 1;
  for (std::size_t i = 0; i < bonds; ++i)
    zz.add({{i, pz}, {(i + 1) % n_sites, pz}}, Complex(1, 0));
  for (std::size_t i = 0; i < n_sites; ++i) x.add({{i, px}}, Complex(1, 0));
  return OperatorBasis({zz, x});
}

// ---------------------------------------------------------------------------
// reference states

/// (|0...0> + |1...1>)/sqrt(2) on a spin-1/2 chain.
inline WaveFunction make_ghz(const std::shared_ptr<const SpinBasis>& basis) {
  if (basis->local_dim() != 2)
    throw ConfigError("ghz: requires local dimension 2");
  if (basis->has_sector())
    throw ConfigError("ghz: not supported on a magnetization sector");
  Vector v = Vector::Zero(Eigen::Index(basis->dim()));
  v[0] = Complex(1, 0);
  v[Eigen::Index(basis->dim() - 1)] = Complex(1, 0);
  return WaveFunction(basis, std::move(v));
}

/// Product of nearest-neighbor singlets (|01> - |10>)/sqrt(2) on pairs
/// (0,1)(2,3)...; one of the two degenerate dimer coverings.
inline WaveFunction make_majumdar_ghosh_dimer(const std::shared_ptr<const SpinBasis>& basis) {
  if (basis->local_dim() != 2)
    throw ConfigError("majumdar_ghosh_dimer: requires local dimension 2");
  if (basis->n_sites() % 2 != 0)
    throw ConfigError("majumdar_ghosh_dimer: requires an even chain");
  Vector v = Vector::Zero(Eigen::Index(basis->dim()));
  bool any = false;
  for (std::size_t i = 0; i < basis->dim(); ++i) {
    std::uint64_t code = basis->config_code(i);
    double amp = 1.0;
    for (int p = 0; p + 1 < basis->n_sites(); p += 2) {
      int a = basis->site_state(code, p), b = basis->site_state(code, p + 1);
      if (a == 0 && b == 1)
        amp *= 1.0;
      else if (a == 1 && b == 0)
        amp *= -1.0;
      else {
        amp = 0.0;
        break;
      }
    }
    if (amp != 0.0) {
      v[Eigen::Index(i)] = Complex(amp, 0.0);
      any = true;
    }
  }
  if (!any)
    throw ConfigError("majumdar_ghosh_dimer: state vanishes on this basis");
  return WaveFunction(basis, std::move(v));
}

/// Valence-bond solid on a spin-1 ring, built by tracing the standard
/// 2x2 matrix product tensors around the chain.
inline WaveFunction make_aklt_periodic(const std::shared_ptr<const SpinBasis>& basis) {
  if (basis->local_dim() != 3)
    throw ConfigError("aklt_periodic: requires local dimension 3");
  using M2 = Eigen::Matrix2cd;
  M2 a_up, a_zero, a_down;
  a_up << 0, std::sqrt(2.0 / 3.0), 0, 0;                    // sigma+ scaled
  a_zero << -std::sqrt(1.0 / 3.0), 0, 0, std::sqrt(1.0 / 3.0);
  a_down << 0, 0, -std::sqrt(2.0 / 3.0), 0;                 // -sigma- scaled
  std::vector<M2> tensor{a_up, a_zero, a_down};             // site state 0,1,2

  Vector v = Vector::Zero(Eigen::Index(basis->dim()));
  bool any = false;
  for (std::size_t i = 0; i < basis->dim(); ++i) {
    std::uint64_t code = basis->config_code(i);
    M2 prod = M2::Identity();
    for (int s = 0; s < basis->n_sites(); ++s)
      prod *= tensor[std::size_t(basis->site_state(code, s))];
    Complex amp = prod.trace();
    if (std::abs(amp) > 1e-15) {
      v[Eigen::Index(i)] = amp;
      any = true;
    }
  }
  if (!any)
    throw ConfigError("aklt_periodic: state vanishes on this basis");
  return WaveFunction(basis, std::move(v));
}

inline WaveFunction make_reference_state(const std::string& name,
                                         const std::shared_ptr<const SpinBasis>& basis) {
  if (name == "ghz") return make_ghz(basis);
  if (name == "majumdar_ghosh_dimer") return make_majumdar_ghosh_dimer(basis);
  if (name == "aklt_periodic") return make_aklt_periodic(basis);
  throw ConfigError("unknown reference state '" + name + "'");
}

}  // namespace hamopt

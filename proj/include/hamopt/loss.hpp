#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hamopt/errors.hpp"
#include "hamopt/hilbert.hpp"
#include "hamopt/operators.hpp"
#include "hamopt/spectra.hpp"

namespace hamopt {

enum class LossKind {
  overlap,
  kl,
  energy_variance,
  ground_energy,
  gap,
  extrapolated_gap,
  symmetry_penalty,
  target_value,
  regularization_l1,
  box_penalty,
};

inline std::string kind_name(LossKind k) {
  switch (k) {
    case LossKind::overlap: return "overlap";
    case LossKind::kl: return "kl";
    case LossKind::energy_variance: return "energy_variance";
    case LossKind::ground_energy: return "ground_energy";
    case LossKind::gap: return "gap";
    case LossKind::extrapolated_gap: return "extrapolated_gap";
    case LossKind::symmetry_penalty: return "symmetry_penalty";
    case LossKind::target_value: return "target_value";
    case LossKind::regularization_l1: return "regularization_l1";
    case LossKind::box_penalty: return "box_penalty";
  }
  return "?";
}

enum class TargetKind { ground_energy, gap, symmetry, extrapolated_gap };

/// sum_m |gamma_m - gamma_ref_m|; gamma_ref defaults to zero.
inline double regularization_l1(const Eigen::VectorXd& gamma,
                                const Eigen::VectorXd& gamma_ref) {
  if (gamma.size() != gamma_ref.size())
    throw DimensionError("regularization_l1: length mismatch");
  return (gamma - gamma_ref).lpNorm<1>();
}

/// (T - T_ref)^2
inline double target_value_term(double value, double target) {
  if (!std::isfinite(value) || !std::isfinite(target))
    throw ValidationError("target_value_term: non-finite input");
  return (value - target) * (value - target);
}

/// 0 inside the box, kappa * squared distance outside; smooth and steep.
inline double box_penalty(const Eigen::VectorXd& p, const Box& box,
                          double kappa = 1e4) {
  if (std::size_t(p.size()) != box.dim())
    throw DimensionError("box_penalty: dimension mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    double d = 0.0;
    if (p[i] < box.lo[i]) d = box.lo[i] - p[i];
    if (p[i] > box.hi[i]) d = p[i] - box.hi[i];
    acc += kappa * d * d;
  }
  return acc;
}

struct GapExtrapolation {
  double intercept = 0.0;
  double slope = 0.0;
  double residual = 0.0;  // rms of the fit
};

/// Least-squares intercept of gap versus 1/N.
inline GapExtrapolation extrapolate_gap(const std::map<std::size_t, double>& gaps) {
  if (gaps.size() < 2)
    throw ValidationError("extrapolate_gap: at least two sizes required");
  const double n = double(gaps.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [size, gap] : gaps) {
    double x = 1.0 / double(size);
    sx += x;
    sy += gap;
    sxx += x * x;
    sxy += x * gap;
  }
  double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-300)
    throw NumericalError("extrapolate_gap: degenerate sizes");
  GapExtrapolation fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss = 0.0;
  for (const auto& [size, gap] : gaps) {
    double r = gap - (fit.intercept + fit.slope / double(size));
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

// ---------------------------------------------------------------------------
// gauge fixing

struct GaugeNone {};
struct GaugeFreezeOne {
  std::size_t index = 0;
  double value = 1.0;
};
struct GaugeL1Sum {
  double total = 1.0;
};
using Gauge = std::variant<GaugeNone, GaugeFreezeOne, GaugeL1Sum>;

/// Bijection between the full parameter vector and the optimizer's reduced
/// domain. freeze_one drops one coordinate; l1_sum keeps the dimension and
/// rescales accepted iterates to a fixed absolute-value sum.
class GaugeMap {
 public:
  GaugeMap() : GaugeMap(GaugeNone{}, 0) {}
  GaugeMap(Gauge g, std::size_t full_dim) : gauge_(g), full_dim_(full_dim) {
    if (auto* f = std::get_if<GaugeFreezeOne>(&gauge_)) {
      if (f->index >= full_dim_)
        throw ValidationError("gauge freeze_one: index out of range");
    }
    if (auto* l = std::get_if<GaugeL1Sum>(&gauge_)) {
      if (!(l->total > 0.0))
        throw ValidationError("gauge l1_sum: total must be positive");
    }
  }

  std::size_t full_dim() const { return full_dim_; }
  std::size_t reduced_dim() const {
    return std::holds_alternative<GaugeFreezeOne>(gauge_) ? full_dim_ - 1
                                                          : full_dim_;
  }
  bool has_projection() const { return std::holds_alternative<GaugeL1Sum>(gauge_); }
  const Gauge& gauge() const { return gauge_; }

  Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const {
    if (std::size_t(reduced.size()) != reduced_dim())
      throw DimensionError("gauge expand: wrong reduced length");
    if (auto* f = std::get_if<GaugeFreezeOne>(&gauge_)) {
      const Eigen::Index nf = Eigen::Index(full_dim_);
      Eigen::VectorXd full(nf);
      Eigen::Index r = 0;
      for (std::size_t m = 0; m < full_dim_; ++m) {
        if (m == f->index)
          full[Eigen::Index(m)] = f->value;
        else
          full[Eigen::Index(m)] = reduced[r++];
      }
      return full;
    }
    return reduced;
  }

  Eigen::VectorXd reduce(const Eigen::VectorXd& full) const {
    if (std::size_t(full.size()) != full_dim_)
      throw DimensionError("gauge reduce: wrong full length");
    if (auto* f = std::get_if<GaugeFreezeOne>(&gauge_)) {
      const Eigen::Index nr = Eigen::Index(full_dim_ - 1);
      Eigen::VectorXd reduced(nr);
      Eigen::Index r = 0;
      for (std::size_t m = 0; m < full_dim_; ++m)
        if (m != f->index) reduced[r++] = full[Eigen::Index(m)];
      return reduced;
    }
    return full;
  }

  /// l1_sum rescaling applied to accepted iterates; identity otherwise.
  Eigen::VectorXd project(const Eigen::VectorXd& reduced) const {
    if (auto* l = std::get_if<GaugeL1Sum>(&gauge_)) {
      double s = reduced.lpNorm<1>();
      if (s < 1e-14)
        throw NumericalError("gauge l1_sum: parameter sum degenerate at zero");
      return reduced * (l->total / s);
    }
    return reduced;
  }

 private:
  Gauge gauge_;
  std::size_t full_dim_;
};

// ---------------------------------------------------------------------------
// loss specification

struct LossTerm {
  LossKind kind;
  double weight = 1.0;
  bool raw_overlap = false;  // contribute the overlap itself, not 1-overlap
  std::map<std::size_t, double> size_weight_override;  // G_N replacement
  std::map<std::size_t, WaveFunction> references;
  std::map<std::size_t, SparseMatrix> symmetry_ops;
  TargetKind target_kind = TargetKind::gap;
  double target = 0.0;
  Eigen::VectorXd gamma_ref;  // empty means zero vector
  Box box;

  static LossTerm overlap_term(double w, std::map<std::size_t, WaveFunction> refs,
                               bool raw = false) {
    LossTerm t{LossKind::overlap, w};
    t.references = std::move(refs);
    t.raw_overlap = raw;
    return t;
  }
  static LossTerm kl_term(double w, std::map<std::size_t, WaveFunction> refs) {
    LossTerm t{LossKind::kl, w};
    t.references = std::move(refs);
    return t;
  }
  static LossTerm variance_term(double w, std::map<std::size_t, WaveFunction> refs) {
    LossTerm t{LossKind::energy_variance, w};
    t.references = std::move(refs);
    return t;
  }
  static LossTerm ground_energy_term(double w) {
    return LossTerm{LossKind::ground_energy, w};
  }
  static LossTerm gap_term(double w) { return LossTerm{LossKind::gap, w}; }
  static LossTerm extrapolated_gap_term(double w) {
    return LossTerm{LossKind::extrapolated_gap, w};
  }
  static LossTerm symmetry_term(double w, std::map<std::size_t, SparseMatrix> ops) {
    LossTerm t{LossKind::symmetry_penalty, w};
    t.symmetry_ops = std::move(ops);
    return t;
  }
  static LossTerm target_term(double w, TargetKind tk, double t_ref) {
    LossTerm t{LossKind::target_value, w};
    t.target_kind = tk;
    t.target = t_ref;
    return t;
  }
  static LossTerm regularization_term(double w, Eigen::VectorXd ref = {}) {
    LossTerm t{LossKind::regularization_l1, w};
    t.gamma_ref = std::move(ref);
    return t;
  }
  static LossTerm box_term(double w, Box box) {
    LossTerm t{LossKind::box_penalty, w};
    t.box = std::move(box);
    return t;
  }
};

struct SizeEntry {
  std::size_t n = 0;
  std::shared_ptr<const SpinBasis> basis;
  std::shared_ptr<const HamiltonianAnsatz> ansatz;
};

struct LossSpec {
  std::vector<SizeEntry> sizes;  // ascending n
  std::vector<LossTerm> terms;
  Gauge gauge = GaugeNone{};
  std::map<std::size_t, double> importance;  // extra per-size multiplier
  bool uniform_size_weights = false;         // skip the Hilbert-dimension factor
  std::size_t eigs_k = 1;
  EigsOptions eigs;

  std::size_t full_dim() const {
    return sizes.empty() ? 0 : sizes.front().ansatz->n_params();
  }
  GaugeMap gauge_map() const { return GaugeMap(gauge, full_dim()); }

  /// G_N: Hilbert dimension normalized by the largest size, times the
  /// per-size importance multiplier; terms may override per size.
  double size_weight(const LossTerm& term, std::size_t n) const {
    auto o = term.size_weight_override.find(n);
    if (o != term.size_weight_override.end()) return o->second;
    double g = 1.0;
    if (!uniform_size_weights) {
      double largest = 0.0;
      for (const auto& s : sizes)
        largest = std::max(largest, double(s.basis->dim()));
      for (const auto& s : sizes)
        if (s.n == n) g = double(s.basis->dim()) / largest;
    }
    auto imp = importance.find(n);
    if (imp != importance.end()) g *= imp->second;
    return g;
  }
};

inline GaugeMap apply_gauge(const LossSpec& spec) { return spec.gauge_map(); }

// ---------------------------------------------------------------------------
// evaluation

struct Contribution {
  std::size_t term_index = 0;
  LossKind kind{};
  std::optional<std::size_t> size;  // absent for cross-size terms
  double raw = 0.0;                 // observable before weights
  double value = 0.0;               // weighted contribution to the total
};

struct SizeObservables {
  double e0 = 0.0;
  double gap = 0.0;
  bool gap_resolved = false;
  std::size_t ground_degeneracy = 1;
  std::optional<double> subspace_ov;
  std::optional<double> kl;
  std::optional<double> variance;
  std::optional<double> rel_variance;
  std::optional<double> symmetry;
};

struct LossBreakdown {
  double total = 0.0;
  std::vector<Contribution> contributions;
  std::map<std::size_t, SizeObservables> observables;
  bool degenerate_convention_used = false;
  std::optional<GapExtrapolation> extrapolation;
};

namespace detail {

inline bool term_needs_spectrum(const LossTerm& t) {
  switch (t.kind) {
    case LossKind::overlap:
    case LossKind::kl:
    case LossKind::ground_energy:
    case LossKind::gap:
    case LossKind::extrapolated_gap:
    case LossKind::symmetry_penalty:
      return true;
    case LossKind::target_value:
      return true;
    default:
      return false;
  }
}

inline void validate_spec(const LossSpec& spec) {
  if (spec.terms.empty()) throw ValidationError("loss: at least one term required");
  if (spec.sizes.empty()) throw ValidationError("loss: at least one size required");
  const std::size_t p = spec.sizes.front().ansatz->n_params();
  for (const auto& s : spec.sizes) {
    if (!s.basis || !s.ansatz) throw ValidationError("loss: size entry incomplete");
    if (s.ansatz->n_params() != p)
      throw ValidationError("loss: parameter dimension differs across sizes");
  }
  for (std::size_t k = 0; k < spec.terms.size(); ++k) {
    const auto& t = spec.terms[k];
    const std::string where = "loss term #" + std::to_string(k) + " (" +
                              kind_name(t.kind) + ")";
    if (t.kind == LossKind::overlap || t.kind == LossKind::kl ||
        t.kind == LossKind::energy_variance) {
      for (const auto& s : spec.sizes)
        if (!t.references.count(s.n))
          throw ValidationError(where + ": missing reference for size " +
                                std::to_string(s.n));
    }
    if (t.kind == LossKind::symmetry_penalty ||
        (t.kind == LossKind::target_value && t.target_kind == TargetKind::symmetry)) {
      for (const auto& s : spec.sizes)
        if (!t.symmetry_ops.count(s.n))
          throw ValidationError(where + ": missing symmetry operator for size " +
                                std::to_string(s.n));
    }
    if ((t.kind == LossKind::extrapolated_gap ||
         (t.kind == LossKind::target_value &&
          t.target_kind == TargetKind::extrapolated_gap)) &&
        spec.sizes.size() < 2)
      throw ValidationError(where + ": needs at least two sizes");
    if (t.kind == LossKind::box_penalty && t.box.dim() != p)
      throw ValidationError(where + ": box dimension must match parameter count");
    if (t.kind == LossKind::regularization_l1 && t.gamma_ref.size() != 0 &&
        std::size_t(t.gamma_ref.size()) != p)
      throw ValidationError(where + ": gamma_ref length must match parameter count");
  }
}

struct SizeData {
  SparseMatrix h;
  std::optional<EvaluationReport> spectrum;
};

}  // namespace detail

/// Evaluates the full loss at a reduced-domain parameter vector. Every
/// size is diagonalized at most once; contributions are summed in term
/// order then size order, so totals are deterministic.
inline LossBreakdown evaluate_loss(const LossSpec& spec,
                                   const Eigen::VectorXd& gamma_reduced) {
  detail::validate_spec(spec);
  const GaugeMap gm = spec.gauge_map();
  const Eigen::VectorXd gamma = gm.expand(gamma_reduced);

  bool need_spectrum = false;
  for (const auto& t : spec.terms) need_spectrum |= detail::term_needs_spectrum(t);

  std::map<std::size_t, detail::SizeData> data;
  for (const auto& s : spec.sizes) {
    detail::SizeData d{s.ansatz->at(gamma, s.basis), std::nullopt};
    if (need_spectrum) {
      try {
        d.spectrum = eigs_low(d.h, spec.eigs_k, s.basis, spec.eigs);
      } catch (const Error& e) {
        throw NumericalError("loss: diagonalization failed at size " +
                             std::to_string(s.n) + ": " + e.what());
      }
    }
    data.emplace(s.n, std::move(d));
  }

  LossBreakdown out;
  for (const auto& s : spec.sizes) {
    auto& obs = out.observables[s.n];
    const auto& d = data.at(s.n);
    if (d.spectrum) {
      obs.e0 = d.spectrum->e0;
      obs.gap = d.spectrum->gap;
      obs.gap_resolved = d.spectrum->gap_resolved;
      obs.ground_degeneracy = d.spectrum->ground_degeneracy;
      if (d.spectrum->ground_degeneracy > 1) out.degenerate_convention_used = true;
    }
  }

  std::optional<GapExtrapolation> fit;
  auto ensure_fit = [&]() -> const GapExtrapolation& {
    if (!fit) {
      std::map<std::size_t, double> gaps;
      for (const auto& s : spec.sizes)
        gaps[s.n] = data.at(s.n).spectrum->gap;
      fit = extrapolate_gap(gaps);
    }
    return *fit;
  };

  auto push = [&](std::size_t term_index, LossKind kind,
                  std::optional<std::size_t> size, double raw, double value) {
    if (!std::isfinite(value))
      throw NumericalError("loss term #" + std::to_string(term_index) + " (" +
                           kind_name(kind) + ") produced a non-finite value" +
                           (size ? " at size " + std::to_string(*size) : ""));
    out.contributions.push_back({term_index, kind, size, raw, value});
    out.total += value;
  };

  for (std::size_t k = 0; k < spec.terms.size(); ++k) {
    const auto& t = spec.terms[k];
    switch (t.kind) {
      case LossKind::overlap: {
        for (const auto& s : spec.sizes) {
          const auto& rpt = *data.at(s.n).spectrum;
          double ov = subspace_overlap(t.references.at(s.n), rpt.ground_space());
          out.observables[s.n].subspace_ov = ov;
          double raw = t.raw_overlap ? ov : 1.0 - ov;
          push(k, t.kind, s.n, ov, t.weight * spec.size_weight(t, s.n) * raw);
        }
        break;
      }
      case LossKind::kl: {
        for (const auto& s : spec.sizes) {
          const auto& rpt = *data.at(s.n).spectrum;
          const auto& ref = t.references.at(s.n);
          auto ground = rpt.ground_space();
          WaveFunction best = maximal_overlap_vector(ref, ground);
          double kl = kl_divergence(ref, best);
          out.observables[s.n].kl = kl;
          push(k, t.kind, s.n, kl, t.weight * spec.size_weight(t, s.n) * kl);
        }
        break;
      }
      case LossKind::energy_variance: {
        for (const auto& s : spec.sizes) {
          const auto& ref = t.references.at(s.n);
          double var = energy_variance(data.at(s.n).h, ref);
          out.observables[s.n].variance = var;
          out.observables[s.n].rel_variance =
              relative_energy_variance(data.at(s.n).h, ref);
          push(k, t.kind, s.n, var, t.weight * spec.size_weight(t, s.n) * var);
        }
        break;
      }
      case LossKind::ground_energy: {
        for (const auto& s : spec.sizes) {
          double e0 = data.at(s.n).spectrum->e0;
          push(k, t.kind, s.n, e0, t.weight * spec.size_weight(t, s.n) * e0);
        }
        break;
      }
      case LossKind::gap: {
        for (const auto& s : spec.sizes) {
          double gap = data.at(s.n).spectrum->gap;
          push(k, t.kind, s.n, gap, t.weight * spec.size_weight(t, s.n) * gap);
        }
        break;
      }
      case LossKind::extrapolated_gap: {
        const auto& f = ensure_fit();
        push(k, t.kind, std::nullopt, f.intercept, t.weight * f.intercept);
        break;
      }
      case LossKind::symmetry_penalty: {
        for (const auto& s : spec.sizes) {
          const auto& rpt = *data.at(s.n).spectrum;
          double acc = 0.0;
          for (std::size_t g = 0; g < rpt.ground_degeneracy; ++g)
            acc += symmetry_expectation(t.symmetry_ops.at(s.n),
                                        rpt.eigenvectors[g]);
          acc /= double(rpt.ground_degeneracy);
          out.observables[s.n].symmetry = acc;
          push(k, t.kind, s.n, acc, t.weight * spec.size_weight(t, s.n) * acc);
        }
        break;
      }
      case LossKind::target_value: {
        if (t.target_kind == TargetKind::extrapolated_gap) {
          const auto& f = ensure_fit();
          double raw = target_value_term(f.intercept, t.target);
          push(k, t.kind, std::nullopt, raw, t.weight * raw);
          break;
        }
        for (const auto& s : spec.sizes) {
          const auto& rpt = *data.at(s.n).spectrum;
          double value = 0.0;
          if (t.target_kind == TargetKind::ground_energy)
            value = rpt.e0;
          else if (t.target_kind == TargetKind::gap)
            value = rpt.gap;
          else {
            double acc = 0.0;
            for (std::size_t g = 0; g < rpt.ground_degeneracy; ++g)
              acc += symmetry_expectation(t.symmetry_ops.at(s.n),
                                          rpt.eigenvectors[g]);
            value = acc / double(rpt.ground_degeneracy);
          }
          double raw = target_value_term(value, t.target);
          push(k, t.kind, s.n, raw, t.weight * spec.size_weight(t, s.n) * raw);
        }
        break;
      }
      case LossKind::regularization_l1: {
        Eigen::VectorXd ref = t.gamma_ref.size() == 0
                                  ? Eigen::VectorXd::Zero(gamma.size())
                                  : t.gamma_ref;
        double raw = regularization_l1(gamma, ref);
        push(k, t.kind, std::nullopt, raw, t.weight * raw);
        break;
      }
      case LossKind::box_penalty: {
        double raw = box_penalty(gamma, t.box);
        push(k, t.kind, std::nullopt, raw, t.weight * raw);
        break;
      }
    }
  }
  out.extrapolation = fit;
  return out;
}

/// Weighted contribution of each term, summed over sizes; the trace's
/// per-term columns.
inline Eigen::VectorXd breakdown_by_term(const LossBreakdown& b,
                                         std::size_t n_terms) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(Eigen::Index(n_terms));
  for (const auto& c : b.contributions) v[Eigen::Index(c.term_index)] += c.value;
  return v;
}

}  // namespace hamopt

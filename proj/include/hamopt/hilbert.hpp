#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hamopt/errors.hpp"

namespace hamopt {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXcd;

enum class Boundary { open, periodic };

inline std::string to_string(Boundary b) {
  return b == Boundary::open ? "open" : "periodic";
}

/// Enumerated many-body basis for a chain of `n_sites` d-level sites,
/// optionally restricted to a total-magnetization sector. Configurations
/// are base-d strings (site 0 is the most significant digit), enumerated
/// in lexicographic order. Immutable after construction.
class SpinBasis {
 public:
  static SpinBasis enumerate(int n_sites, int local_dim,
                             std::optional<double> sector,
                             Boundary boundary) {
    if (n_sites < 1) throw ValidationError("SpinBasis: n_sites must be >= 1");
    if (local_dim < 2) throw ValidationError("SpinBasis: local_dim must be >= 2");
    double bits = n_sites * std::log2(double(local_dim));
    if (bits > 26.0)
      throw ValidationError("SpinBasis: Hilbert dimension exceeds the 2^26 desk-scale cap");

    SpinBasis b;
    b.n_sites_ = n_sites;
    b.local_dim_ = local_dim;
    b.boundary_ = boundary;

    std::uint64_t full_dim = 1;
    for (int i = 0; i < n_sites; ++i) full_dim *= std::uint64_t(local_dim);

    if (!sector) {
      b.dim_ = full_dim;
      return b;
    }

    // Local state s carries magnetization (d-1-2s)/2; the sector value is
    // the conserved total, stored doubled to stay integral.
    double doubled = 2.0 * (*sector);
    long long target = std::llround(doubled);
    if (std::abs(doubled - double(target)) > 1e-9)
      throw ValidationError("SpinBasis: sector must be a multiple of 1/2");
    b.twice_sector_ = target;

    b.codes_.reserve(64);
    for (std::uint64_t code = 0; code < full_dim; ++code) {
      if (twice_magnetization(code, n_sites, local_dim) == target)
        b.codes_.push_back(code);
    }
    if (b.codes_.empty())
      throw ValidationError("SpinBasis: empty sector (total Sz = " +
                            std::to_string(*sector) + " unreachable for " +
                            std::to_string(n_sites) + " sites of dimension " +
                            std::to_string(local_dim) + ")");
    b.dim_ = b.codes_.size();
    return b;
  }

  int n_sites() const { return n_sites_; }
  int local_dim() const { return local_dim_; }
  Boundary boundary() const { return boundary_; }
  bool has_sector() const { return twice_sector_.has_value(); }
  std::optional<double> sector() const {
    if (!twice_sector_) return std::nullopt;
    return 0.5 * double(*twice_sector_);
  }
  std::size_t dim() const { return dim_; }

  /// Configuration code of basis index i (base-local_dim integer).
  std::uint64_t config_code(std::size_t index) const {
    if (index >= dim_) throw DimensionError("SpinBasis: index out of range");
    return twice_sector_ ? codes_[index] : std::uint64_t(index);
  }

  /// Index of a configuration code, or nullopt when the code lies outside
  /// the enumerated sector.
  std::optional<std::size_t> find_code(std::uint64_t code) const {
    if (!twice_sector_) {
      std::uint64_t full = dim_;
      if (code >= full) return std::nullopt;
      return std::size_t(code);
    }
    auto it = std::lower_bound(codes_.begin(), codes_.end(), code);
    if (it == codes_.end() || *it != code) return std::nullopt;
    return std::size_t(it - codes_.begin());
  }

  std::size_t index_of_code(std::uint64_t code) const {
    auto idx = find_code(code);
    if (!idx) throw DimensionError("SpinBasis: configuration not in basis");
    return *idx;
  }

  int site_state(std::uint64_t code, int site) const {
    // site 0 is the most significant digit
    int shift = n_sites_ - 1 - site;
    std::uint64_t p = 1;
    for (int i = 0; i < shift; ++i) p *= std::uint64_t(local_dim_);
    return int((code / p) % std::uint64_t(local_dim_));
  }

  std::uint64_t with_site_state(std::uint64_t code, int site, int state) const {
    int shift = n_sites_ - 1 - site;
    std::uint64_t p = 1;
    for (int i = 0; i < shift; ++i) p *= std::uint64_t(local_dim_);
    int old = int((code / p) % std::uint64_t(local_dim_));
    return code + (std::uint64_t(state) - std::uint64_t(old)) * p;
  }

  bool same_basis(const SpinBasis& o) const {
    return n_sites_ == o.n_sites_ && local_dim_ == o.local_dim_ &&
           boundary_ == o.boundary_ && twice_sector_ == o.twice_sector_;
  }

  static long long twice_magnetization(std::uint64_t code, int n_sites,
                                       int local_dim) {
    long long t = 0;
    for (int i = 0; i < n_sites; ++i) {
      t += (local_dim - 1) - 2 * (long long)(code % std::uint64_t(local_dim));
      code /= std::uint64_t(local_dim);
    }
    return t;
  }

 private:
  int n_sites_ = 0;
  int local_dim_ = 0;
  Boundary boundary_ = Boundary::open;
  std::optional<long long> twice_sector_;
  std::size_t dim_ = 0;
  std::vector<std::uint64_t> codes_;  // sector enumeration only
};

/// Canonical shared handle used by everything downstream: wavefunctions,
/// assembly caches, and reports all alias one enumeration per size.
inline std::shared_ptr<const SpinBasis> enumerate_basis(
    int n_sites, int local_dim, std::optional<double> sector = std::nullopt,
    Boundary boundary = Boundary::open) {
  return std::make_shared<const SpinBasis>(
      SpinBasis::enumerate(n_sites, local_dim, sector, boundary));
}

/// Normalized amplitude vector over a SpinBasis. Amplitude i belongs to
/// configuration i of the owning basis.
class WaveFunction {
 public:
  WaveFunction(std::shared_ptr<const SpinBasis> basis, Vector amplitudes,
               bool normalize = true)
      : basis_(std::move(basis)), amps_(std::move(amplitudes)) {
    if (!basis_) throw ValidationError("WaveFunction: null basis");
    if (std::size_t(amps_.size()) != basis_->dim())
      throw DimensionError("WaveFunction: amplitude count " +
                           std::to_string(amps_.size()) +
                           " != basis dimension " +
                           std::to_string(basis_->dim()));
    if (normalize) {
      double n = amps_.norm();
      if (!(n > 0.0) || !std::isfinite(n))
        throw ValidationError("WaveFunction: cannot normalize zero or non-finite vector");
      amps_ /= n;
    }
  }

  const SpinBasis& basis() const { return *basis_; }
  const std::shared_ptr<const SpinBasis>& basis_ptr() const { return basis_; }
  const Vector& amplitudes() const { return amps_; }
  std::size_t dim() const { return std::size_t(amps_.size()); }
  double norm() const { return amps_.norm(); }

 private:
  std::shared_ptr<const SpinBasis> basis_;
  Vector amps_;
};

namespace detail {
inline void require_same_basis(const WaveFunction& a, const WaveFunction& b) {
  if (!a.basis().same_basis(b.basis()) || a.dim() != b.dim())
    throw DimensionError("wavefunctions live on different bases");
}
}  // namespace detail

/// |<a|b>| for normalized states on the same basis.
inline double overlap(const WaveFunction& a, const WaveFunction& b) {
  detail::require_same_basis(a, b);
  return std::abs(a.amplitudes().dot(b.amplitudes()));
}

/// Relative entropy sum_i a_i^2 log(a_i^2 / b_i^2) of the configuration
/// probability distributions. Terms with a_i^2 below 1e-30 contribute 0;
/// b_i^2 is clamped at 1e-30 so disjoint supports stay finite.
inline double kl_divergence(const WaveFunction& reference,
                            const WaveFunction& candidate) {
  detail::require_same_basis(reference, candidate);
  constexpr double kFloor = 1e-30;
  double sum = 0.0;
  for (std::size_t i = 0; i < reference.dim(); ++i) {
    double p = std::norm(reference.amplitudes()[Eigen::Index(i)]);
    if (p < kFloor) continue;
    double q = std::norm(candidate.amplitudes()[Eigen::Index(i)]);
    sum += p * std::log(p / std::max(q, kFloor));
  }
  return sum;
}

/// Norm of the projection of `reference` onto the span of an orthonormal
/// set; equals overlap() for a single vector.
inline double subspace_overlap(const WaveFunction& reference,
                               std::span<const WaveFunction> span) {
  if (span.empty()) throw ValidationError("subspace_overlap: empty span");
  constexpr double kOrthoTol = 1e-10;
  for (std::size_t i = 0; i < span.size(); ++i) {
    detail::require_same_basis(reference, span[i]);
    for (std::size_t j = i; j < span.size(); ++j) {
      Complex g = span[i].amplitudes().dot(span[j].amplitudes());
      double expect = (i == j) ? 1.0 : 0.0;
      if (std::abs(g - expect) > kOrthoTol)
        throw ValidationError("subspace_overlap: span is not orthonormal (Gram defect " +
                              std::to_string(std::abs(g - expect)) + " at pair " +
                              std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }
  double s = 0.0;
  for (const auto& v : span) {
    double o = std::abs(v.amplitudes().dot(reference.amplitudes()));
    s += o * o;
  }
  return std::min(std::sqrt(s), 1.0);
}

/// Normalized projection of `reference` onto an orthonormal span — the
/// span vector of maximal overlap with the reference. Falls back to the
/// first span vector when the projection vanishes.
inline WaveFunction maximal_overlap_vector(const WaveFunction& reference,
                                           std::span<const WaveFunction> span) {
  if (span.empty()) throw ValidationError("maximal_overlap_vector: empty span");
  Vector proj = Vector::Zero(Eigen::Index(reference.dim()));
  for (const auto& v : span)
    proj += v.amplitudes().dot(reference.amplitudes()) * v.amplitudes();
  if (proj.norm() < 1e-14) return span[0];
  return WaveFunction(span[0].basis_ptr(), std::move(proj), true);
}

}  // namespace hamopt

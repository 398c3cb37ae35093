#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hamopt/errors.hpp"
#include "hamopt/hilbert.hpp"
#include "hamopt/sparse.hpp"

namespace hamopt {

struct EigsOptions {
  std::size_t dense_threshold = 2048;
  double residual_tol = 1e-9;    // ||Hv - lv|| < tol * max(1, |l|)
  double degeneracy_tol = 1e-9;  // multiplet width, * max(1, |e0|)
  std::size_t max_restarts = 50;
  std::size_t krylov_dim = 200;
  std::uint64_t seed = 7;
};

/// Low spectrum of one Hamiltonian. The returned set always contains the
/// full ground multiplet, and its upper boundary never splits a multiplet.
struct EvaluationReport {
  std::vector<double> eigenvalues;  // ascending
  std::vector<WaveFunction> eigenvectors;
  std::size_t ground_degeneracy = 1;
  double e0 = 0.0;
  double gap = 0.0;
  bool gap_resolved = false;  // false when no returned eigenvalue leaves the multiplet

  std::vector<WaveFunction> ground_space() const {
    return {eigenvectors.begin(),
            eigenvectors.begin() + long(ground_degeneracy)};
  }
};

namespace detail {

/// One deflated Lanczos solve: lowest eigenpair of H restricted to the
/// orthogonal complement of `deflate`. Full reorthogonalization each step.
inline std::pair<double, Vector> lanczos_lowest(const SparseMatrix& h,
                                                const std::vector<Vector>& deflate,
                                                const EigsOptions& opts,
                                                std::mt19937_64& rng) {
  const Eigen::Index dim = Eigen::Index(h.rows());
  const std::size_t m_max =
      std::min<std::size_t>(opts.krylov_dim, h.rows() - deflate.size());

  auto project_out = [&](Vector& w) {
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& d : deflate) w -= d.dot(w) * d;
  };

  std::normal_distribution<double> g(0.0, 1.0);
  auto random_start = [&]() {
    Vector q(dim);
    for (Eigen::Index i = 0; i < dim; ++i) q[i] = Complex(g(rng), g(rng));
    project_out(q);
    double n = q.norm();
    if (n < 1e-12) throw NumericalError("lanczos: start vector vanished after deflation");
    return Vector(q / n);
  };

  Vector start = random_start();
  double best_residual = std::numeric_limits<double>::infinity();

  auto ritz_bottom = [](const std::vector<double>& alpha,
                        const std::vector<double>& beta) {
    const Eigen::Index m = Eigen::Index(alpha.size());
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      t(j, j) = alpha[std::size_t(j)];
      if (j + 1 < m) {
        t(j, j + 1) = beta[std::size_t(j)];
        t(j + 1, j) = beta[std::size_t(j)];
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    return std::make_pair(es.eigenvalues()(0), Eigen::VectorXd(es.eigenvectors().col(0)));
  };

  for (std::size_t restart = 0; restart <= opts.max_restarts; ++restart) {
    std::vector<Vector> basis;
    std::vector<double> alpha, beta;
    basis.push_back(start);

    for (std::size_t j = 0; j < m_max; ++j) {
      Vector w = h.apply(basis[j]);
      double a = basis[j].dot(w).real();
      alpha.push_back(a);
      w -= a * basis[j];
      if (j > 0) w -= beta[j - 1] * basis[j - 1];
      project_out(w);
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& q : basis) w -= q.dot(w) * q;
      double b = w.norm();
      if (b < 1e-13 || j + 1 == m_max) break;
      // cheap residual estimate beta_j |y_j| on the current Ritz bottom
      if (j >= 8 && j % 8 == 0) {
        auto [theta, y] = ritz_bottom(alpha, beta);
        if (b * std::abs(y(Eigen::Index(alpha.size() - 1))) <
            0.1 * opts.residual_tol * std::max(1.0, std::abs(theta)))
          break;
      }
      beta.push_back(b);
      basis.push_back(Vector(w / b));
    }

    const std::size_t m = alpha.size();
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(Eigen::Index(m), Eigen::Index(m));
    for (std::size_t j = 0; j < m; ++j) {
      t(Eigen::Index(j), Eigen::Index(j)) = alpha[j];
      if (j + 1 < m) {
        t(Eigen::Index(j), Eigen::Index(j + 1)) = beta[j];
        t(Eigen::Index(j + 1), Eigen::Index(j)) = beta[j];
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    double theta = es.eigenvalues()(0);
    Vector v = Vector::Zero(dim);
    for (std::size_t j = 0; j < m; ++j)
      v += Complex(es.eigenvectors()(Eigen::Index(j), 0), 0.0) * basis[j];
    project_out(v);
    v.normalize();

    double residual = (h.apply(v) - theta * v).norm();
    best_residual = std::min(best_residual, residual);
    if (residual < opts.residual_tol * std::max(1.0, std::abs(theta)))
      return {theta, std::move(v)};
    start = std::move(v);
  }
  throw NumericalError("lanczos: no convergence after " +
                       std::to_string(opts.max_restarts) +
                       " restarts (best residual " +
                       std::to_string(best_residual) + ")");
}

inline void verify_residual(const SparseMatrix& h, double lambda, const Vector& v,
                            const EigsOptions& opts) {
  double r = (h.apply(v) - lambda * v).norm();
  if (r >= opts.residual_tol * std::max(1.0, std::abs(lambda)))
    throw NumericalError("eigenpair residual " + std::to_string(r) +
                         " exceeds tolerance at eigenvalue " +
                         std::to_string(lambda));
}

}  // namespace detail

/// Lowest-k eigenpairs: dense solver up to opts.dense_threshold, Lanczos
/// with full reorthogonalization and sequential deflation above. k is
/// enlarged internally whenever the set boundary would split a multiplet.
inline EvaluationReport eigs_low(const SparseMatrix& h, std::size_t k,
                                 const std::shared_ptr<const SpinBasis>& basis,
                                 const EigsOptions& opts = {}) {
  if (h.rows() != h.cols()) throw DimensionError("eigs_low: matrix not square");
  if (!basis || basis->dim() != h.rows())
    throw DimensionError("eigs_low: basis dimension does not match matrix");
  const std::size_t dim = h.rows();
  k = std::clamp<std::size_t>(k, 1, dim);

  std::vector<double> evals;
  std::vector<Vector> evecs;

  // Selection rule, both paths: the returned set never ends inside a
  // multiplet, and it includes at least one eigenvalue above the ground
  // multiplet whenever the spectrum has one.
  if (dim <= opts.dense_threshold) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esr;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> esc;
    const bool real = h.is_real();
    if (real)
      esr.compute(h.dense_real());
    else
      esc.compute(h.dense());
    if ((real ? esr.info() : esc.info()) != Eigen::Success)
      throw NumericalError("eigs_low: dense solver failed");
    const Eigen::VectorXd& dvals = real ? esr.eigenvalues() : esc.eigenvalues();
    const double tol = opts.degeneracy_tol * std::max(1.0, std::abs(dvals(0)));
    std::size_t c = k;
    while (c < dim) {
      if (dvals(Eigen::Index(c)) - dvals(Eigen::Index(c - 1)) <= tol ||
          dvals(Eigen::Index(c - 1)) - dvals(0) <= tol) {
        ++c;
        continue;
      }
      break;
    }
    for (std::size_t i = 0; i < c; ++i) {
      evals.push_back(dvals(Eigen::Index(i)));
      evecs.push_back(real
                          ? Vector(esr.eigenvectors().col(Eigen::Index(i)).cast<Complex>())
                          : Vector(esc.eigenvectors().col(Eigen::Index(i))));
    }
  } else {
    std::mt19937_64 rng(opts.seed);
    while (true) {
      auto [lambda, v] = detail::lanczos_lowest(h, evecs, opts, rng);
      evals.push_back(lambda);
      evecs.push_back(std::move(v));
      const std::size_t c = evals.size();
      if (c == dim) break;
      const double tol = opts.degeneracy_tol * std::max(1.0, std::abs(evals[0]));
      if (c >= 2 && c - 1 >= k && evals[c - 1] - evals[c - 2] > tol &&
          evals[c - 2] - evals[0] > tol) {
        // the last pair only certifies the set boundary; drop it
        evals.pop_back();
        evecs.pop_back();
        break;
      }
    }
  }

  for (std::size_t i = 0; i < evals.size(); ++i)
    detail::verify_residual(h, evals[i], evecs[i], opts);

  EvaluationReport report;
  report.e0 = evals[0];
  const double tol = opts.degeneracy_tol * std::max(1.0, std::abs(report.e0));
  report.ground_degeneracy = 1;
  while (report.ground_degeneracy < evals.size() &&
         evals[report.ground_degeneracy] - report.e0 <= tol)
    ++report.ground_degeneracy;
  report.gap = 0.0;
  report.gap_resolved = false;
  for (double ev : evals)
    if (ev - report.e0 > tol) {
      report.gap = ev - report.e0;
      report.gap_resolved = true;
      break;
    }
  report.eigenvalues = std::move(evals);
  report.eigenvectors.reserve(evecs.size());
  for (auto& v : evecs)
    report.eigenvectors.emplace_back(basis, std::move(v), true);
  return report;
}

/// Re(<psi|A|psi>); the imaginary part must be numerical noise.
inline double expectation(const SparseMatrix& a, const WaveFunction& psi) {
  if (a.cols() != psi.dim())
    throw DimensionError("expectation: dimension mismatch");
  Complex val = psi.amplitudes().dot(a.apply(psi.amplitudes()));
  if (std::abs(val.imag()) >= 1e-10)
    throw NumericalError("expectation: imaginary part " +
                         std::to_string(val.imag()) + " exceeds 1e-10");
  return val.real();
}

/// Unnormalized variance <H^2> - <H>^2 via ||H psi||^2, clamped at zero.
inline double energy_variance(const SparseMatrix& h, const WaveFunction& psi) {
  if (h.cols() != psi.dim())
    throw DimensionError("energy_variance: dimension mismatch");
  Vector hpsi = h.apply(psi.amplitudes());
  double h2 = hpsi.squaredNorm();
  double h1 = psi.amplitudes().dot(hpsi).real();
  double var = h2 - h1 * h1;
  if (var < 0.0) {
    if (var < -1e-12)
      throw NumericalError("energy_variance: negative beyond tolerance (" +
                           std::to_string(var) + ")");
    var = 0.0;
  }
  return var;
}

/// sigma^2_E / <H>^2, reported only; nullopt when <H> is numerically zero.
inline std::optional<double> relative_energy_variance(const SparseMatrix& h,
                                                      const WaveFunction& psi) {
  Vector hpsi = h.apply(psi.amplitudes());
  double h1 = psi.amplitudes().dot(hpsi).real();
  if (std::abs(h1) < 1e-14) return std::nullopt;
  double var = std::max(0.0, hpsi.squaredNorm() - h1 * h1);
  return var / (h1 * h1);
}

/// <psi|G|psi> for a hermitian symmetry generator (or its square).
inline double symmetry_expectation(const SparseMatrix& g, const WaveFunction& psi) {
  return expectation(g, psi);
}

}  // namespace hamopt

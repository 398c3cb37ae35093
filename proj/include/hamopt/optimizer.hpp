#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hamopt/errors.hpp"
#include "hamopt/loss.hpp"

namespace hamopt {

/// Callable bundle the optimizer drives. `value` is mandatory; `breakdown`
/// feeds per-term trace columns and `project` applies the gauge's rescaling
/// to accepted iterates.
struct Objective {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<LossBreakdown(const Eigen::VectorXd&)> breakdown;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> project;
  std::size_t n_terms = 0;
};

inline Objective make_objective(std::shared_ptr<const LossSpec> spec) {
  Objective o;
  o.n_terms = spec->terms.size();
  o.value = [spec](const Eigen::VectorXd& x) {
    return evaluate_loss(*spec, x).total;
  };
  o.breakdown = [spec](const Eigen::VectorXd& x) {
    return evaluate_loss(*spec, x);
  };
  GaugeMap gm = spec->gauge_map();
  if (gm.has_projection())
    o.project = [gm](const Eigen::VectorXd& x) { return gm.project(x); };
  return o;
}

inline Objective make_objective(const LossSpec& spec) {
  return make_objective(std::make_shared<const LossSpec>(spec));
}

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  Eigen::VectorXd term_values;  // weighted per-term contributions
  double grad_norm = 0.0;
  double step_length = 0.0;
  double beta = 0.0;
  int reset = 0;  // 0 none, 1 restart, 2 perturbation escape
  double seconds = 0.0;
  Eigen::VectorXd gamma;
};

struct CgdConfig {
  std::size_t max_iters = 200;
  double grad_tol = 1e-8;   // infinity norm
  double loss_tol = 1e-10;  // relative change over one restart period
  std::size_t restart_period = 0;  // 0 means the domain dimension
  enum class Beta { hestenes_stiefel, polak_ribiere };
  Beta beta = Beta::hestenes_stiefel;
  double fd_step = 1e-5;
  double line_initial = 1e-3;
  double line_growth = 2.0;
  double line_rel_tol = 1e-6;
  std::size_t line_max_evals = 100;
  std::size_t escape_patience = 10;
  double escape_scale = 0.1;
  std::size_t max_escapes = 3;
  std::uint64_t seed = 12345;
  bool steepest_only = false;
  std::function<void(const TraceRow&)> on_row;
};

struct OptimizationTrace {
  std::vector<TraceRow> rows;
  Eigen::VectorXd best_gamma;
  double best_loss = std::numeric_limits<double>::infinity();
  std::string termination;
  std::size_t n_evaluations = 0;
  std::size_t n_gradient_evaluations = 0;
  std::size_t escapes_used = 0;
  std::size_t restarts = 0;
};

/// Central finite differences with per-coordinate step scaling. A non-finite
/// probe shrinks the step once by 10x; a second failure is an error.
inline Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double rel_step = 1e-5,
    std::size_t* evals = nullptr) {
  if (!(rel_step > 0)) throw ValidationError("fd_gradient: step must be positive");
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n);
  Eigen::VectorXd probe = x;
  for (Eigen::Index m = 0; m < n; ++m) {
    double h = rel_step * std::max(1.0, std::abs(x[m]));
    for (int attempt = 0;; ++attempt) {
      probe[m] = x[m] + h;
      const double up = f(probe);
      probe[m] = x[m] - h;
      const double dn = f(probe);
      probe[m] = x[m];
      if (evals) *evals += 2;
      if (std::isfinite(up) && std::isfinite(dn)) {
        g[m] = (up - dn) / (2.0 * h);
        break;
      }
      if (attempt >= 1)
        throw NumericalError("fd_gradient: non-finite loss near coordinate " +
                             std::to_string(m));
      h /= 10.0;
    }
  }
  return g;
}

struct LineSearchResult {
  double t = 0.0;
  double f = 0.0;
  std::size_t evals = 0;
  bool descent = false;     // false means no sampled point beat f(0)
  bool budget_hit = false;  // stopped by the evaluation cap
};

/// Bracket by geometric expansion (shrinking first if the initial probe
/// already rises), then golden-section. Returns the best sampled point.
inline LineSearchResult golden_section(const std::function<double(double)>& f1d,
                                       double f0, double initial_step,
                                       double rel_tol = 1e-6,
                                       std::size_t max_evals = 100,
                                       double growth = 2.0) {
  if (!(initial_step > 0))
    throw ValidationError("golden_section: initial step must be positive");
  LineSearchResult r;
  double best_t = 0.0, best_f = f0;
  auto eval = [&](double t) {
    ++r.evals;
    double v = f1d(t);
    if (std::isfinite(v) && v < best_f) {
      best_f = v;
      best_t = t;
    }
    return v;
  };

  double t1 = initial_step;
  double f1 = eval(t1);
  while (!(f1 < f0) && r.evals < max_evals && t1 > initial_step * 1e-18) {
    t1 /= growth;
    f1 = eval(t1);
  }
  if (!(f1 < f0)) {
    r.t = 0.0;
    r.f = f0;
    r.descent = false;
    r.budget_hit = r.evals >= max_evals;
    return r;
  }

  double a = 0.0, b = t1, fb = f1;
  double c = b * growth;
  double fc = eval(c);
  while (fc < fb && r.evals < max_evals) {
    a = b;
    b = c;
    fb = fc;
    c *= growth;
    fc = eval(c);
  }

  const double phi = 0.618033988749894848;
  double lo = a, hi = c;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double fx1 = eval(x1);
  double fx2 = eval(x2);
  while ((hi - lo) > rel_tol * (1.0 + std::abs(best_t)) && r.evals < max_evals) {
    if (fx1 <= fx2) {
      hi = x2;
      x2 = x1;
      fx2 = fx1;
      x1 = hi - phi * (hi - lo);
      fx1 = eval(x1);
    } else {
      lo = x1;
      x1 = x2;
      fx1 = fx2;
      x2 = lo + phi * (hi - lo);
      fx2 = eval(x2);
    }
  }
  r.t = best_t;
  r.f = best_f;
  r.descent = best_f < f0;
  r.budget_hit = r.evals >= max_evals;
  return r;
}

/// Uniform draw in the ball of the given radius around zero, added to x.
inline Eigen::VectorXd perturb_escape(const Eigen::VectorXd& x, double scale,
                                      std::mt19937_64& rng) {
  const Eigen::Index n = x.size();
  if (n == 0) return x;
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd u(n);
  do {
    for (Eigen::Index i = 0; i < n; ++i) u[i] = gauss(rng);
  } while (u.norm() < 1e-12);
  u /= u.norm();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double radius = std::pow(unif(rng), 1.0 / double(n));
  return x + (scale * radius) * u;
}

/// Nonlinear conjugate gradient descent with finite-difference gradients,
/// golden-section line searches, periodic restarts, and bounded random
/// escapes from stalls. The first step is always steepest descent and
/// accepted rows never raise the loss except rows flagged as escapes.
inline OptimizationTrace cgd_minimize(const Objective& obj, Eigen::VectorXd x,
                                      CgdConfig cfg = {}) {
  if (!obj.value) throw ValidationError("cgd_minimize: objective has no value");
  const auto t_start = std::chrono::steady_clock::now();
  auto seconds = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t_start)
        .count();
  };

  OptimizationTrace res;
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = std::size_t(x.size());
  const std::size_t period =
      cfg.restart_period ? cfg.restart_period : std::max<std::size_t>(1, n);

  std::size_t evals = 0;
  const std::function<double(const Eigen::VectorXd&)> value =
      [&](const Eigen::VectorXd& p) {
        ++evals;
        return obj.value(p);
      };

  if (obj.project) x = obj.project(x);
  double f = value(x);
  if (!std::isfinite(f))
    throw NumericalError("cgd_minimize: non-finite loss at the initial point");

  auto terms_at = [&](const Eigen::VectorXd& p) {
    return obj.breakdown ? breakdown_by_term(obj.breakdown(p), obj.n_terms)
                         : Eigen::VectorXd();
  };
  auto push_row = [&](std::size_t step, double loss, const Eigen::VectorXd& p,
                      double gn, double sl, double beta, int reset) {
    res.rows.push_back(
        {step, loss, terms_at(p), gn, sl, beta, reset, seconds(), p});
    if (cfg.on_row) cfg.on_row(res.rows.back());
    if (loss < res.best_loss) {
      res.best_loss = loss;
      res.best_gamma = p;
    }
  };

  if (n == 0) {
    push_row(0, f, x, 0.0, 0.0, 0.0, 0);
    res.termination = "gradient_tolerance";
    res.n_evaluations = evals;
    return res;
  }

  Eigen::VectorXd g = fd_gradient(value, x, cfg.fd_step);
  ++res.n_gradient_evaluations;
  double gnorm = g.lpNorm<Eigen::Infinity>();
  push_row(0, f, x, gnorm, 0.0, 0.0, 0);

  // beta/reset describe the direction that produces a row's step.
  Eigen::VectorXd d = -g;
  bool dir_is_steepest = true;
  double dir_beta = 0.0;
  int dir_reset = 0;
  std::size_t since_restart = 0;
  std::size_t stall = 0;
  std::deque<double> window{f};
  std::string reason;

  auto do_escape = [&](std::size_t it) -> bool {
    if (res.escapes_used >= cfg.max_escapes) return false;
    ++res.escapes_used;
    double scale = cfg.escape_scale * x.norm();
    if (scale < 1e-12) scale = cfg.escape_scale;
    Eigen::VectorXd xe = perturb_escape(x, scale, rng);
    if (obj.project) xe = obj.project(xe);
    double fe = value(xe);
    if (!std::isfinite(fe)) return false;  // stay put, budget spent
    x = xe;
    f = fe;
    g = fd_gradient(value, x, cfg.fd_step);
    ++res.n_gradient_evaluations;
    gnorm = g.lpNorm<Eigen::Infinity>();
    d = -g;
    dir_is_steepest = true;
    dir_beta = 0.0;
    dir_reset = 0;
    since_restart = 0;
    stall = 0;
    window.clear();
    window.push_back(f);
    push_row(it, f, x, gnorm, 0.0, 0.0, 2);
    return true;
  };

  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    if (gnorm <= cfg.grad_tol) {
      reason = "gradient_tolerance";
      break;
    }
    const double dnorm = d.norm();
    if (!(dnorm > 0.0)) {
      reason = "gradient_tolerance";
      break;
    }

    const double t0 = cfg.line_initial * (1.0 + x.norm()) / dnorm;
    const Eigen::VectorXd x_base = x;
    const Eigen::VectorXd d_base = d;
    auto f1d = [&](double t) {
      return value(x_base + t * d_base);
    };
    LineSearchResult ls =
        golden_section(f1d, f, t0, cfg.line_rel_tol, cfg.line_max_evals,
                       cfg.line_growth);

    bool rejected = !ls.descent;
    Eigen::VectorXd xn;
    double fn = 0.0;
    if (!rejected) {
      xn = x + ls.t * d;
      fn = ls.f;
      if (obj.project) {
        xn = obj.project(xn);
        fn = value(xn);
        if (!(fn <= f + 1e-12)) rejected = true;  // projection undid the gain
      }
    }

    if (rejected) {
      if (!dir_is_steepest) {
        // failed conjugate direction: restart; the next accepted row
        // carries the reset flag
        d = -g;
        dir_is_steepest = true;
        dir_beta = 0.0;
        dir_reset = 1;
        since_restart = 0;
        ++res.restarts;
        continue;
      }
      if (do_escape(it)) continue;
      reason = "line_search_failure";
      break;
    }

    Eigen::VectorXd gn = fd_gradient(value, xn, cfg.fd_step);
    ++res.n_gradient_evaluations;
    const double improvement = f - fn;

    double beta = 0.0;
    int reset = 0;
    if (!cfg.steepest_only) {
      if (since_restart + 1 >= period) {
        reset = 1;
      } else {
        const Eigen::VectorXd y = gn - g;
        const double denom = cfg.beta == CgdConfig::Beta::hestenes_stiefel
                                 ? d.dot(y)
                                 : g.squaredNorm();
        if (std::abs(denom) < 1e-300)
          reset = 1;
        else
          beta = std::max(0.0, gn.dot(y) / denom);
      }
    }
    Eigen::VectorXd dn =
        (cfg.steepest_only || reset) ? Eigen::VectorXd(-gn)
                                     : Eigen::VectorXd(-gn + beta * d);
    if (!cfg.steepest_only && dn.dot(gn) >= 0.0) {
      dn = -gn;
      beta = 0.0;
      reset = 1;
    }

    x = xn;
    f = fn;
    g = gn;
    gnorm = g.lpNorm<Eigen::Infinity>();
    push_row(it, f, x, gnorm, ls.t, dir_beta, dir_reset);

    d = dn;
    dir_beta = beta;
    dir_reset = reset;
    dir_is_steepest = cfg.steepest_only || reset == 1 || beta == 0.0;
    if (reset) {
      since_restart = 0;
      ++res.restarts;
    } else {
      ++since_restart;
    }

    window.push_back(f);
    if (window.size() > period + 1) window.pop_front();
    if (improvement < 1e-16 * std::max(1.0, std::abs(f)))
      ++stall;
    else
      stall = 0;

    if (window.size() == period + 1) {
      const double change = window.front() - window.back();
      if (change <= cfg.loss_tol * std::max(1.0, std::abs(window.back()))) {
        reason = "loss_change_tolerance";
        break;
      }
    }
    if (stall >= cfg.escape_patience) {
      if (!do_escape(it)) {
        // out of escapes; let the tolerances terminate normally
        stall = 0;
      }
    }
  }

  if (reason.empty()) reason = "max_iterations";
  res.termination = reason;
  res.n_evaluations = evals;
  return res;
}

/// Same driver with conjugacy disabled: every direction is -gradient.
inline OptimizationTrace steepest_descent_minimize(const Objective& obj,
                                                   Eigen::VectorXd x,
                                                   CgdConfig cfg = {}) {
  cfg.steepest_only = true;
  return cgd_minimize(obj, std::move(x), std::move(cfg));
}

struct MultistartResult {
  OptimizationTrace best;
  std::vector<OptimizationTrace> runs;
  double dispersion = 0.0;  // largest distance from a run's best to the winner
};

/// Independent restarts from uniform draws inside the box; the draws are
/// fixed up front so per-run randomness cannot shift them.
inline MultistartResult multistart_minimize(const Objective& obj,
                                            const Box& box,
                                            std::size_t n_starts,
                                            const CgdConfig& cfg = {}) {
  if (n_starts == 0)
    throw ValidationError("multistart_minimize: need at least one start");
  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::VectorXd> starts;
  starts.reserve(n_starts);
  for (std::size_t s = 0; s < n_starts; ++s) {
    Eigen::VectorXd x0(Eigen::Index(box.dim()));
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      std::uniform_real_distribution<double> unif(box.lo[i], box.hi[i]);
      x0[i] = unif(rng);
    }
    starts.push_back(std::move(x0));
  }

  MultistartResult out;
  std::size_t winner = 0;
  for (std::size_t s = 0; s < n_starts; ++s) {
    CgdConfig c = cfg;
    c.seed = cfg.seed + 0x9E3779B97F4A7C15ull * (s + 1);
    out.runs.push_back(cgd_minimize(obj, starts[s], c));
    if (out.runs[s].best_loss < out.runs[winner].best_loss) winner = s;
  }
  out.best = out.runs[winner];
  for (const auto& run : out.runs)
    out.dispersion = std::max(
        out.dispersion, (run.best_gamma - out.best.best_gamma).norm());
  return out;
}

}  // namespace hamopt

#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hamopt/config.hpp"
#include "hamopt/io.hpp"
#include "hamopt/loss.hpp"
#include "hamopt/models.hpp"
#include "hamopt/optimizer.hpp"
#include "hamopt/spectra.hpp"

namespace hamopt {

// ---------------------------------------------------------------------------
// model zoo dispatch

inline int family_local_dim(const std::string& family) {
  return family == "heisenberg_bilinear_biquadratic" ? 3 : 2;
}

inline OperatorBasis build_model_operators(const ModelConfig& mc,
                                           std::size_t n_sites) {
  if (mc.family == "pauli_strings_k_local")
    return model_pauli_strings_k_local(n_sites, mc.boundary, mc.pauli);
  if (mc.family == "heisenberg_bilinear_biquadratic")
    return model_heisenberg_bilinear_biquadratic(n_sites, mc.boundary,
                                                 mc.include_biquadratic);
  if (mc.family == "j1_j2") return model_j1_j2(n_sites, mc.boundary);
  if (mc.family == "transverse_field_ising")
    return model_transverse_field_ising(n_sites, mc.boundary);
  throw ConfigError("unknown model family '" + mc.family + "'");
}

inline Eigen::VectorXd broadcast_bound(const std::vector<double>& v,
                                       std::size_t dim, const char* which) {
  const Eigen::Index d = Eigen::Index(dim);
  if (v.size() == 1) return Eigen::VectorXd::Constant(d, v[0]);
  if (v.size() != dim)
    throw ConfigError("config: parametrization " + std::string(which) +
                      " has " + std::to_string(v.size()) +
                      " entries for a " + std::to_string(dim) +
                      "-parameter domain");
  Eigen::VectorXd out(d);
  for (Eigen::Index i = 0; i < d; ++i) out[i] = v[std::size_t(i)];
  return out;
}

inline Box build_box(const ParametrizationConfig& pc, std::size_t n_params) {
  return Box(broadcast_bound(pc.box_lo, n_params, "box_lo"),
             broadcast_bound(pc.box_hi, n_params, "box_hi"));
}

inline ParametrizationMap build_parametrization(const ParametrizationConfig& pc,
                                                std::size_t n_coeffs) {
  if (pc.kind == "linear")
    return ParametrizationMap::linear(n_coeffs, build_box(pc, n_coeffs));
  if (pc.table.size() != n_coeffs)
    throw ConfigError("config: polynomial table has " +
                      std::to_string(pc.table.size()) + " rows but the model " +
                      "emits " + std::to_string(n_coeffs) + " coefficients");
  return ParametrizationMap::polynomial(pc.n_params, n_coeffs, pc.table,
                                        build_box(pc, pc.n_params));
}

/// Total magnetization sum_i S^z_i on the basis, the built-in symmetry
/// operator available to loss terms from config files.
inline SparseMatrix make_total_sz_operator(
    const std::shared_ptr<const SpinBasis>& basis) {
  OperatorSum op("total_sz");
  const SiteMatrix sz = spin_z(basis->local_dim());
  for (int i = 0; i < basis->n_sites(); ++i)
    op.add({{std::size_t(i), sz}}, Complex(1, 0));
  return assemble_sparse(op, *basis);
}

// ---------------------------------------------------------------------------
// planted problems

struct PlantedProblem {
  Eigen::VectorXd gamma_star;  // full parameter space
  std::map<std::size_t, WaveFunction> references;
};

/// Draw support coefficients uniform [0.5, 1.5] until H(gamma*) has a unique,
/// gapped ground state at every listed size; the ED ground states become the
/// reference wavefunctions. At most 20 draws.
inline PlantedProblem generate_planted_problem(
    const std::vector<SizeEntry>& entries,
    const std::vector<std::size_t>& support, std::uint64_t seed,
    const EigsOptions& eigs = {}) {
  if (entries.empty())
    throw ValidationError("planted problem: need at least one size");
  const std::size_t p = entries.front().ansatz->n_params();
  if (support.empty())
    throw ValidationError("planted problem: support must not be empty");
  for (std::size_t m : support)
    if (m >= p)
      throw ValidationError("planted problem: support index " +
                            std::to_string(m) + " outside the " +
                            std::to_string(p) + "-parameter domain");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  constexpr int kMaxDraws = 20;
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    const Eigen::Index pi = Eigen::Index(p);
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(pi);
    for (std::size_t m : support) gamma[Eigen::Index(m)] = unif(rng);

    PlantedProblem out;
    out.gamma_star = gamma;
    bool ok = true;
    for (const auto& e : entries) {
      SparseMatrix h = e.ansatz->at(gamma, e.basis);
      const std::size_t k = std::min<std::size_t>(2, e.basis->dim());
      EvaluationReport rpt = eigs_low(h, k, e.basis, eigs);
      if (rpt.ground_degeneracy != 1 || !rpt.gap_resolved ||
          !(rpt.gap > 1e-8)) {
        ok = false;
        break;
      }
      out.references.emplace(e.n, rpt.eigenvectors.front());
    }
    if (ok) return out;
  }
  throw ConfigError(
      "planted problem: no draw produced a unique gapped ground state at "
      "every size after " +
      std::to_string(kMaxDraws) + " attempts; try a different support set");
}

// ---------------------------------------------------------------------------
// problem assembly

struct BuiltProblem {
  std::vector<SizeEntry> train;  // ascending n
  std::vector<SizeEntry> test;   // ascending n
  std::vector<std::string> labels;           // operator labels, all sizes
  std::vector<std::size_t> support;          // planted support indices
  Eigen::VectorXd gamma_star;                // planted truth; empty otherwise
  std::map<std::size_t, WaveFunction> references;  // by size, where available
  Box box;        // full parameter box
  Box start_box;  // box in gauge-reduced coordinates (multistart draws)
  std::shared_ptr<const LossSpec> spec;      // loss over the training sizes
  std::vector<std::string> term_labels;      // trace/grid CSV columns
};

inline std::vector<LossTermConfig> default_recovery_terms() {
  // Overlap and energy variance carry the largest weights; KL sharpens the
  // configuration distribution; a small L1 pull toward zero suppresses
  // off-support coefficients.
  LossTermConfig ov{.kind = "overlap", .weight = 1.0};
  LossTermConfig kl{.kind = "kl", .weight = 0.2};
  LossTermConfig var{.kind = "energy_variance", .weight = 1.0};
  LossTermConfig reg{.kind = "regularization_l1", .weight = 1e-3};
  return {ov, kl, var, reg};
}

namespace detail {

inline TargetKind parse_target_kind(const std::string& s) {
  if (s == "ground_energy") return TargetKind::ground_energy;
  if (s == "gap") return TargetKind::gap;
  if (s == "symmetry") return TargetKind::symmetry;
  if (s == "extrapolated_gap") return TargetKind::extrapolated_gap;
  throw ConfigError("config: unknown target_kind '" + s + "'");
}

inline std::string joined_labels(const std::vector<std::string>& labels) {
  std::string s;
  for (const auto& l : labels) {
    if (!s.empty()) s += ", ";
    s += l;
  }
  return s;
}

inline std::size_t label_index(const std::string& label,
                               const std::vector<std::string>& labels,
                               const std::string& what) {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end())
    throw ConfigError("config: " + what + " names unknown operator '" + label +
                      "'; available: " + joined_labels(labels));
  return std::size_t(it - labels.begin());
}

}  // namespace detail

inline Gauge build_gauge(const GaugeConfig& gc,
                         const std::vector<std::string>& labels,
                         std::size_t n_params, bool linear_map) {
  if (gc.kind == "none") return GaugeNone{};
  if (gc.kind == "l1_sum") return GaugeL1Sum{gc.total};
  // freeze_one
  std::size_t index = 0;
  if (!gc.label.empty()) {
    if (!linear_map)
      throw ConfigError(
          "config: freeze_one by label requires the linear parametrization; "
          "use a numeric index instead");
    index = detail::label_index(gc.label, labels, "gauge.label");
  } else {
    index = std::size_t(gc.index);
  }
  if (index >= n_params)
    throw ConfigError("config: gauge index " + std::to_string(index) +
                      " outside the " + std::to_string(n_params) +
                      "-parameter domain");
  return GaugeFreezeOne{index, gc.value};
}

inline BuiltProblem build_problem(const ExperimentConfig& cfg) {
  BuiltProblem out;
  const int d = family_local_dim(cfg.model.family);
  std::optional<double> sector;
  if (cfg.sector.enabled) sector = cfg.sector.total_sz;

  auto build_entry = [&](std::size_t n) {
    OperatorBasis ops = build_model_operators(cfg.model, n);
    ParametrizationMap map = build_parametrization(cfg.parametrization,
                                                   ops.size());
    SizeEntry e;
    e.n = n;
    e.basis = enumerate_basis(int(n), d, sector, cfg.model.boundary);
    e.ansatz = std::make_shared<const HamiltonianAnsatz>(std::move(ops),
                                                         std::move(map));
    return e;
  };

  std::vector<std::size_t> train = cfg.train_sizes;
  std::vector<std::size_t> test = cfg.test_sizes;
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  for (std::size_t n : train) out.train.push_back(build_entry(n));
  for (std::size_t n : test) out.test.push_back(build_entry(n));

  out.labels = out.train.front().ansatz->operator_basis().labels;
  auto check_labels = [&](const SizeEntry& e) {
    if (e.ansatz->operator_basis().labels != out.labels)
      throw ConfigError("config: operator labels at size " +
                        std::to_string(e.n) +
                        " differ from the smallest training size; the model "
                        "family is not size-consistent here");
  };
  for (const auto& e : out.train) check_labels(e);
  for (const auto& e : out.test) check_labels(e);

  const std::size_t n_params = out.train.front().ansatz->n_params();
  const bool linear_map =
      out.train.front().ansatz->map().kind() == ParametrizationMap::Kind::linear;
  out.box = out.train.front().ansatz->map().box();

  // references
  if (cfg.reference.source == "planted") {
    if (!linear_map)
      throw ConfigError(
          "config: planted references require the linear parametrization "
          "(support is a set of operator labels)");
    for (const auto& s : cfg.reference.support)
      out.support.push_back(
          detail::label_index(s, out.labels, "reference.support"));
    std::vector<SizeEntry> all = out.train;
    all.insert(all.end(), out.test.begin(), out.test.end());
    PlantedProblem planted =
        generate_planted_problem(all, out.support, cfg.seed);
    out.gamma_star = planted.gamma_star;
    out.references = std::move(planted.references);
  } else if (cfg.reference.source == "named") {
    for (const auto& e : out.train)
      out.references.emplace(e.n,
                             make_reference_state(cfg.reference.name, e.basis));
    for (const auto& e : out.test)
      out.references.emplace(e.n,
                             make_reference_state(cfg.reference.name, e.basis));
  } else if (cfg.reference.source == "amplitude_file") {
    auto find_entry = [&](std::size_t n) -> const SizeEntry* {
      for (const auto& e : out.train)
        if (e.n == n) return &e;
      for (const auto& e : out.test)
        if (e.n == n) return &e;
      return nullptr;
    };
    for (const auto& [n, path] : cfg.reference.files) {
      const SizeEntry* e = find_entry(n);
      if (!e)
        throw ConfigError("config: reference.files lists size " +
                          std::to_string(n) +
                          " which is neither a training nor a test size");
      out.references.emplace(n, io::read_amplitudes(path, e->basis));
    }
  }  // "none": leave empty

  // loss terms
  std::vector<LossTermConfig> term_cfgs =
      cfg.loss.terms.empty() ? default_recovery_terms() : cfg.loss.terms;

  auto train_refs = [&]() {
    std::map<std::size_t, WaveFunction> refs;
    for (const auto& e : out.train) {
      auto it = out.references.find(e.n);
      if (it != out.references.end()) refs.emplace(e.n, it->second);
    }
    return refs;
  };
  auto train_sz_ops = [&]() {
    std::map<std::size_t, SparseMatrix> ops;
    for (const auto& e : out.train)
      ops.emplace(e.n, make_total_sz_operator(e.basis));
    return ops;
  };

  LossSpec spec;
  spec.sizes = out.train;
  spec.importance = cfg.loss.importance;
  spec.uniform_size_weights = cfg.loss.uniform_size_weights;
  spec.eigs_k = cfg.loss.eigs_k;
  spec.gauge = build_gauge(cfg.gauge, out.labels, n_params, linear_map);

  for (const auto& tc : term_cfgs) {
    LossTerm t{LossKind::overlap, tc.weight};
    if (tc.kind == "overlap") {
      t = LossTerm::overlap_term(tc.weight, train_refs(), tc.raw);
    } else if (tc.kind == "kl") {
      t = LossTerm::kl_term(tc.weight, train_refs());
    } else if (tc.kind == "energy_variance") {
      t = LossTerm::variance_term(tc.weight, train_refs());
    } else if (tc.kind == "ground_energy") {
      t = LossTerm::ground_energy_term(tc.weight);
    } else if (tc.kind == "gap") {
      t = LossTerm::gap_term(tc.weight);
    } else if (tc.kind == "extrapolated_gap") {
      t = LossTerm::extrapolated_gap_term(tc.weight);
    } else if (tc.kind == "symmetry_penalty") {
      t = LossTerm::symmetry_term(tc.weight, train_sz_ops());
    } else if (tc.kind == "target_value") {
      t = LossTerm::target_term(tc.weight, detail::parse_target_kind(tc.target_kind),
                                tc.target);
      if (t.target_kind == TargetKind::symmetry) t.symmetry_ops = train_sz_ops();
    } else if (tc.kind == "regularization_l1") {
      Eigen::VectorXd ref;
      if (!tc.gamma_ref.empty()) {
        if (tc.gamma_ref.size() != n_params)
          throw ConfigError("config: gamma_ref has " +
                            std::to_string(tc.gamma_ref.size()) +
                            " entries for a " + std::to_string(n_params) +
                            "-parameter domain");
        const Eigen::Index pi = Eigen::Index(n_params);
        ref.resize(pi);
        for (Eigen::Index i = 0; i < pi; ++i) ref[i] = tc.gamma_ref[std::size_t(i)];
      }
      t = LossTerm::regularization_term(tc.weight, std::move(ref));
    } else if (tc.kind == "box_penalty") {
      t = LossTerm::box_term(tc.weight, out.box);
    } else {
      throw ConfigError("config: unknown loss term kind '" + tc.kind + "'");
    }
    t.size_weight_override = tc.size_weights;
    spec.terms.push_back(std::move(t));
  }

  out.spec = std::make_shared<const LossSpec>(std::move(spec));
  for (std::size_t k = 0; k < term_cfgs.size(); ++k)
    out.term_labels.push_back("t" + std::to_string(k) + "_" + term_cfgs[k].kind);

  const GaugeMap gm = out.spec->gauge_map();
  out.start_box = Box(gm.reduce(out.box.lo), gm.reduce(out.box.hi));
  return out;
}

// ---------------------------------------------------------------------------
// reports

struct SizeRow {
  std::size_t n = 0;
  bool is_test = false;
  double e0 = 0.0;
  double gap = 0.0;
  bool gap_resolved = false;
  std::size_t ground_degeneracy = 1;
  std::optional<double> overlap;       // subspace overlap with the reference
  std::optional<double> kl;
  std::optional<double> variance;      // unnormalized sigma^2_E
  std::optional<double> rel_variance;  // (sigma^rel_E)^2
};

struct RecoveryReport {
  std::string command = "recover";
  std::uint64_t seed = 0;
  std::string termination;
  double final_loss = 0.0;
  std::size_t steps = 0;
  std::size_t n_evaluations = 0;
  std::size_t n_gradient_evaluations = 0;
  std::size_t restarts = 0;
  std::size_t escapes = 0;
  std::size_t multistart_runs = 1;
  std::size_t winner = 0;
  double dispersion = 0.0;
  std::vector<std::string> labels;
  Eigen::VectorXd gamma_full;
  Eigen::VectorXd term_totals;  // weighted per-term at the winner
  std::vector<std::size_t> support;
  std::optional<double> off_support_abs_sum;
  bool underspanned = false;
  std::optional<double> min_overlap;
  std::vector<SizeRow> rows;  // train rows first, then test rows
  std::optional<GapExtrapolation> extrapolation;
  std::vector<std::string> trace_files;
  std::vector<std::string> term_labels;
};

inline nlohmann::json report_to_json(const RecoveryReport& r) {
  using nlohmann::json;
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["command"] = r.command;
  j["seed"] = r.seed;
  j["termination"] = r.termination;
  j["final_loss"] = r.final_loss;
  j["steps"] = r.steps;
  j["n_evaluations"] = r.n_evaluations;
  j["n_gradient_evaluations"] = r.n_gradient_evaluations;
  j["restarts"] = r.restarts;
  j["escapes"] = r.escapes;
  j["multistart"] = {{"runs", r.multistart_runs},
                     {"winner", r.winner},
                     {"dispersion", r.dispersion}};
  j["labels"] = r.labels;
  std::vector<double> gamma(r.gamma_full.data(),
                            r.gamma_full.data() + r.gamma_full.size());
  j["gamma"] = gamma;
  json terms = json::object();
  for (std::size_t k = 0; k < r.term_labels.size(); ++k)
    terms[r.term_labels[k]] = r.term_totals[Eigen::Index(k)];
  j["term_totals"] = std::move(terms);
  if (!r.support.empty()) {
    json sup = json::object();
    std::vector<std::string> names;
    for (std::size_t m : r.support) names.push_back(r.labels[m]);
    sup["labels"] = names;
    sup["indices"] = r.support;
    if (r.off_support_abs_sum)
      sup["off_support_abs_sum"] = *r.off_support_abs_sum;
    j["support"] = std::move(sup);
  }
  j["underspanned"] = r.underspanned;
  if (r.min_overlap) j["min_overlap"] = *r.min_overlap;
  json rows = json::array();
  for (const auto& row : r.rows) {
    json o;
    o["n"] = row.n;
    o["role"] = row.is_test ? "test" : "train";
    o["e0"] = row.e0;
    o["gap"] = row.gap;
    o["gap_resolved"] = row.gap_resolved;
    o["ground_degeneracy"] = row.ground_degeneracy;
    if (row.overlap) o["overlap"] = *row.overlap;
    if (row.kl) o["kl"] = *row.kl;
    if (row.variance) o["energy_variance"] = *row.variance;
    if (row.rel_variance) o["relative_energy_variance"] = *row.rel_variance;
    rows.push_back(std::move(o));
  }
  j["rows"] = std::move(rows);
  if (r.extrapolation)
    j["extrapolated_gap"] = {{"intercept", r.extrapolation->intercept},
                             {"slope", r.extrapolation->slope},
                             {"residual", r.extrapolation->residual}};
  j["trace_files"] = r.trace_files;
  return j;
}

// ---------------------------------------------------------------------------
// drivers

namespace detail {

constexpr std::uint64_t kSeedStride = 0x9E3779B97F4A7C15ull;

inline CgdConfig make_cgd_config(const OptimizerConfig& oc) {
  CgdConfig c;
  c.max_iters = oc.max_iters;
  c.grad_tol = oc.grad_tol;
  c.loss_tol = oc.loss_tol;
  c.restart_period = oc.restart_period;
  c.beta = oc.beta == "polak_ribiere" ? CgdConfig::Beta::polak_ribiere
                                      : CgdConfig::Beta::hestenes_stiefel;
  c.fd_step = oc.fd_step;
  c.line_initial = oc.line_initial;
  c.line_growth = oc.line_growth;
  c.line_rel_tol = oc.line_rel_tol;
  c.line_max_evals = oc.line_max_evals;
  c.escape_patience = oc.escape_patience;
  c.escape_scale = oc.escape_scale;
  c.max_escapes = oc.max_escapes;
  return c;
}

struct BudgetClock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double budget_seconds = 0.0;
  std::string command;

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
  void check(const std::string& phase) const {
    if (budget_seconds > 0 && elapsed() > budget_seconds)
      throw BudgetError(command + ": wall-clock budget of " +
                        std::to_string(budget_seconds) +
                        " s exhausted during " + phase +
                        "; partial outputs remain in the output directory");
  }
};

/// Uniform multistart draws, identical to multistart_minimize: one generator
/// seeded by the config seed, all starts drawn up front.
inline std::vector<Eigen::VectorXd> draw_starts(const Box& box,
                                                std::size_t n_starts,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> starts;
  starts.reserve(n_starts);
  for (std::size_t s = 0; s < n_starts; ++s) {
    const Eigen::Index d = Eigen::Index(box.dim());
    Eigen::VectorXd x0(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      std::uniform_real_distribution<double> unif(box.lo[i], box.hi[i]);
      x0[i] = unif(rng);
    }
    starts.push_back(std::move(x0));
  }
  return starts;
}

inline void write_reference_files(const BuiltProblem& prob,
                                  const std::string& out_dir) {
  for (const auto& [n, psi] : prob.references)
    io::write_amplitudes(out_dir + "/reference_N" + std::to_string(n) + ".txt",
                         psi);
}

}  // namespace detail

inline RecoveryReport run_recovery_core(const ExperimentConfig& cfg,
                                        const std::string& command) {
  namespace fs = std::filesystem;
  detail::BudgetClock clock{std::chrono::steady_clock::now(),
                            cfg.budget_seconds, command};

  BuiltProblem prob = build_problem(cfg);
  fs::create_directories(cfg.output_dir);
  save_config(cfg, cfg.output_dir + "/config_used.json");
  detail::write_reference_files(prob, cfg.output_dir);
  clock.check("problem setup");

  Objective obj = make_objective(prob.spec);
  const std::size_t n_starts = std::max<std::size_t>(1, cfg.optimizer.multistart);
  std::vector<Eigen::VectorXd> starts =
      detail::draw_starts(prob.start_box, n_starts, cfg.seed);

  RecoveryReport rep;
  rep.command = command;
  rep.seed = cfg.seed;
  rep.labels = prob.labels;
  rep.term_labels = prob.term_labels;
  rep.multistart_runs = n_starts;

  std::vector<OptimizationTrace> runs;
  std::size_t winner = 0;
  for (std::size_t s = 0; s < n_starts; ++s) {
    CgdConfig c = detail::make_cgd_config(cfg.optimizer);
    c.seed = cfg.seed + detail::kSeedStride * (s + 1);
    const std::string trace_path =
        cfg.output_dir + "/trace_run" + std::to_string(s) + ".csv";
    io::TraceCsvWriter writer(trace_path, prob.term_labels);
    c.on_row = [&writer](const TraceRow& r) { writer.write_row(r); };
    runs.push_back(cgd_minimize(obj, starts[s], c));
    rep.trace_files.push_back(trace_path);
    if (runs[s].best_loss < runs[winner].best_loss) winner = s;
    clock.check("optimization start " + std::to_string(s + 1) + " of " +
                std::to_string(n_starts));
  }

  const OptimizationTrace& best = runs[winner];
  rep.winner = winner;
  rep.termination = best.termination;
  rep.final_loss = best.best_loss;
  rep.steps = best.rows.empty() ? 0 : best.rows.back().step;
  for (const auto& run : runs) {
    rep.n_evaluations += run.n_evaluations;
    rep.n_gradient_evaluations += run.n_gradient_evaluations;
    rep.restarts += run.restarts;
    rep.escapes += run.escapes_used;
    rep.dispersion = std::max(
        rep.dispersion, (run.best_gamma - best.best_gamma).norm());
  }

  const GaugeMap gm = prob.spec->gauge_map();
  rep.gamma_full = gm.expand(best.best_gamma);

  LossBreakdown bd = evaluate_loss(*prob.spec, best.best_gamma);
  rep.term_totals = breakdown_by_term(bd, prob.spec->terms.size());
  rep.extrapolation = bd.extrapolation;

  for (const auto& e : prob.train) {
    const auto& obs = bd.observables.at(e.n);
    SizeRow row;
    row.n = e.n;
    row.is_test = false;
    row.e0 = obs.e0;
    row.gap = obs.gap;
    row.gap_resolved = obs.gap_resolved;
    row.ground_degeneracy = obs.ground_degeneracy;
    row.overlap = obs.subspace_ov;
    row.kl = obs.kl;
    row.variance = obs.variance;
    row.rel_variance = obs.rel_variance;
    rep.rows.push_back(std::move(row));
  }

  clock.check("training-size evaluation");

  for (const auto& e : prob.test) {
    SparseMatrix h;
    std::optional<EvaluationReport> rpt;
    try {
      h = e.ansatz->at(rep.gamma_full, e.basis);
      const std::size_t k = std::min<std::size_t>(
          std::max<std::size_t>(2, cfg.loss.eigs_k), e.basis->dim());
      rpt = eigs_low(h, k, e.basis, prob.spec->eigs);
    } catch (const Error& err) {
      throw NumericalError("evaluation failed at test size " +
                           std::to_string(e.n) + ": " + err.what());
    }
    SizeRow row;
    row.n = e.n;
    row.is_test = true;
    row.e0 = rpt->e0;
    row.gap = rpt->gap;
    row.gap_resolved = rpt->gap_resolved;
    row.ground_degeneracy = rpt->ground_degeneracy;
    auto it = prob.references.find(e.n);
    if (it != prob.references.end()) {
      const WaveFunction& ref = it->second;
      auto ground = rpt->ground_space();
      row.overlap = subspace_overlap(ref, ground);
      row.kl = kl_divergence(ref, maximal_overlap_vector(ref, ground));
      row.variance = energy_variance(h, ref);
      row.rel_variance = relative_energy_variance(h, ref);
    }
    rep.rows.push_back(std::move(row));
    clock.check("evaluation at test size " + std::to_string(e.n));
  }

  if (!prob.support.empty()) {
    rep.support = prob.support;
    double off = 0.0;
    for (Eigen::Index m = 0; m < rep.gamma_full.size(); ++m) {
      bool in_support = false;
      for (std::size_t s : prob.support)
        if (Eigen::Index(s) == m) in_support = true;
      if (!in_support) off += std::abs(rep.gamma_full[m]);
    }
    rep.off_support_abs_sum = off;
  }

  for (const auto& row : rep.rows)
    if (row.overlap)
      rep.min_overlap = rep.min_overlap
                            ? std::min(*rep.min_overlap, *row.overlap)
                            : *row.overlap;
  rep.underspanned = rep.min_overlap && *rep.min_overlap < 0.999;

  io::write_json_file(cfg.output_dir + "/report.json", report_to_json(rep));
  return rep;
}

inline RecoveryReport run_recover(const ExperimentConfig& cfg) {
  return run_recovery_core(cfg, "recover");
}

/// Train as run_recover but demand strictly larger test sizes and default to
/// a large importance multiplier on the largest training size.
inline RecoveryReport run_extrapolate(const ExperimentConfig& cfg) {
  if (cfg.test_sizes.empty())
    throw ConfigError("extrapolate: sizes.test must not be empty");
  std::size_t max_train = 0;
  for (std::size_t n : cfg.train_sizes) max_train = std::max(max_train, n);
  for (std::size_t n : cfg.test_sizes)
    if (n <= max_train)
      throw ConfigError("extrapolate: test size " + std::to_string(n) +
                        " does not exceed the largest training size " +
                        std::to_string(max_train));
  ExperimentConfig c = cfg;
  if (c.loss.importance.empty()) c.loss.importance[max_train] = 1000.0;
  return run_recovery_core(c, "extrapolate");
}

/// Dense loss landscape over the 2-parameter reduced domain, then CGD and
/// steepest descent from the same start for comparison.
inline nlohmann::json run_scan(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  detail::BudgetClock clock{std::chrono::steady_clock::now(),
                            cfg.budget_seconds, "scan"};

  BuiltProblem prob = build_problem(cfg);
  const GaugeMap gm = prob.spec->gauge_map();
  if (gm.reduced_dim() != 2)
    throw ConfigError("scan: requires a 2-parameter domain after gauge "
                      "reduction, got " +
                      std::to_string(gm.reduced_dim()));
  fs::create_directories(cfg.output_dir);
  save_config(cfg, cfg.output_dir + "/config_used.json");
  detail::write_reference_files(prob, cfg.output_dir);

  const std::size_t rows = cfg.scan.grid_rows, cols = cfg.scan.grid_cols;
  const Box& box = prob.start_box;
  Objective obj = make_objective(prob.spec);

  io::GridCsvWriter grid(cfg.output_dir + "/grid.csv", prob.term_labels);
  double min_total = std::numeric_limits<double>::infinity();
  double min_p1 = box.lo[0], min_p2 = box.lo[1];
  std::size_t grid_evals = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double p1 =
        box.lo[0] + (box.hi[0] - box.lo[0]) * double(i) / double(rows - 1);
    for (std::size_t j = 0; j < cols; ++j) {
      const double p2 =
          box.lo[1] + (box.hi[1] - box.lo[1]) * double(j) / double(cols - 1);
      Eigen::VectorXd x(2);
      x << p1, p2;
      LossBreakdown b = evaluate_loss(*prob.spec, x);
      ++grid_evals;
      grid.write_point(p1, p2, b.total,
                       breakdown_by_term(b, prob.spec->terms.size()));
      if (b.total < min_total) {
        min_total = b.total;
        min_p1 = p1;
        min_p2 = p2;
      }
    }
    grid.flush();
    clock.check("grid row " + std::to_string(i + 1) + " of " +
                std::to_string(rows));
  }

  Eigen::VectorXd start(2);
  if (cfg.scan.start.size() == 2)
    start << cfg.scan.start[0], cfg.scan.start[1];
  else
    start << 0.5 * (box.lo[0] + box.hi[0]), 0.5 * (box.lo[1] + box.hi[1]);

  auto run_path = [&](bool steepest, std::size_t iters,
                      const std::string& trace_name) {
    CgdConfig c = detail::make_cgd_config(cfg.optimizer);
    c.max_iters = iters;
    c.seed = cfg.seed + detail::kSeedStride;
    io::TraceCsvWriter writer(cfg.output_dir + "/" + trace_name,
                              prob.term_labels);
    c.on_row = [&writer](const TraceRow& r) { writer.write_row(r); };
    return steepest ? steepest_descent_minimize(obj, start, c)
                    : cgd_minimize(obj, start, c);
  };
  OptimizationTrace cgd = run_path(false, cfg.scan.cgd_max_iters, "trace_cgd.csv");
  clock.check("conjugate-gradient descent");
  OptimizationTrace sd =
      run_path(true, cfg.scan.steepest_max_iters, "trace_steepest.csv");
  clock.check("steepest descent");

  auto path_json = [](const OptimizationTrace& t) {
    std::vector<double> endpoint(t.best_gamma.data(),
                                 t.best_gamma.data() + t.best_gamma.size());
    return nlohmann::json{{"loss", t.best_loss},
                          {"endpoint", endpoint},
                          {"termination", t.termination},
                          {"steps", t.rows.empty() ? 0 : t.rows.back().step},
                          {"n_evaluations", t.n_evaluations},
                          {"n_gradient_evaluations", t.n_gradient_evaluations}};
  };

  nlohmann::json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["command"] = "scan";
  j["seed"] = cfg.seed;
  j["grid"] = {{"rows", rows},
               {"cols", cols},
               {"points", grid_evals},
               {"min", {{"p1", min_p1}, {"p2", min_p2}, {"total", min_total}}}};
  std::vector<double> start_v(start.data(), start.data() + start.size());
  j["start"] = start_v;
  j["cgd"] = path_json(cgd);
  j["steepest"] = path_json(sd);
  j["cgd_beats_grid"] = cgd.best_loss <= min_total + 1e-9;
  io::write_json_file(cfg.output_dir + "/scan_report.json", j);
  return j;
}

/// Wall-clock timings of the pipeline stages per training size.
inline nlohmann::json run_bench(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  detail::BudgetClock clock{std::chrono::steady_clock::now(),
                            cfg.budget_seconds, "bench"};

  BuiltProblem prob = build_problem(cfg);
  fs::create_directories(cfg.output_dir);
  save_config(cfg, cfg.output_dir + "/config_used.json");

  auto timed = [](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  const int d = family_local_dim(cfg.model.family);
  std::optional<double> sector;
  if (cfg.sector.enabled) sector = cfg.sector.total_sz;

  nlohmann::json sizes = nlohmann::json::array();
  for (const auto& e : prob.train) {
    nlohmann::json row;
    row["n"] = e.n;
    row["dim"] = e.basis->dim();

    std::shared_ptr<const SpinBasis> fresh;
    row["seconds_enumerate"] = timed([&] {
      fresh = enumerate_basis(int(e.n), d, sector, cfg.model.boundary);
    });
    row["seconds_assemble"] = timed([&] { e.ansatz->assembled(e.basis); });

    const Eigen::VectorXd gamma0 = 0.5 * (prob.box.lo + prob.box.hi);
    SparseMatrix h;
    row["seconds_combine"] = timed([&] { h = e.ansatz->at(gamma0, e.basis); });
    row["nnz"] = h.nnz();
    row["seconds_eigs"] = timed([&] {
      eigs_low(h, std::min<std::size_t>(cfg.loss.eigs_k, e.basis->dim()),
               e.basis, prob.spec->eigs);
    });
    sizes.push_back(std::move(row));
    clock.check("bench at size " + std::to_string(e.n));
  }

  nlohmann::json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["command"] = "bench";
  j["sizes"] = std::move(sizes);

  // full-spec loss evaluation, when the reference setup permits one
  try {
    const GaugeMap gm = prob.spec->gauge_map();
    const Eigen::VectorXd x0 =
        gm.reduce(0.5 * (prob.box.lo + prob.box.hi));
    double t = timed([&] { evaluate_loss(*prob.spec, x0); });
    j["seconds_loss_eval"] = t;
  } catch (const Error&) {
    // spec not evaluable (e.g. no references); timings above still stand
  }

  io::write_json_file(cfg.output_dir + "/bench.json", j);
  return j;
}

/// Structural validation without enumerating bases or diagonalizing: model
/// labels, parametrization dimensions, gauge/support resolution, reference
/// coverage, and file existence.
inline void validate_config_semantics(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  std::vector<std::size_t> all = cfg.train_sizes;
  all.insert(all.end(), cfg.test_sizes.begin(), cfg.test_sizes.end());
  std::sort(all.begin(), all.end());

  std::vector<std::string> labels;
  std::size_t n_params = 0;
  bool linear_map = true;
  for (std::size_t n : all) {
    OperatorBasis ops = build_model_operators(cfg.model, n);
    ParametrizationMap map = build_parametrization(cfg.parametrization,
                                                   ops.size());
    if (labels.empty()) {
      labels = ops.labels;
      n_params = map.n_params();
      linear_map = map.kind() == ParametrizationMap::Kind::linear;
    } else if (ops.labels != labels) {
      throw ConfigError("config: operator labels at size " + std::to_string(n) +
                        " differ from the smallest size");
    }
  }

  build_gauge(cfg.gauge, labels, n_params, linear_map);

  if (cfg.reference.source == "planted") {
    if (!linear_map)
      throw ConfigError(
          "config: planted references require the linear parametrization");
    for (const auto& s : cfg.reference.support)
      detail::label_index(s, labels, "reference.support");
  } else if (cfg.reference.source == "named") {
    const std::string& name = cfg.reference.name;
    if (name != "ghz" && name != "majumdar_ghosh_dimer" &&
        name != "aklt_periodic")
      throw ConfigError("config: unknown reference state '" + name + "'");
    const int d = family_local_dim(cfg.model.family);
    if (name == "aklt_periodic" && d != 3)
      throw ConfigError("config: aklt_periodic needs a spin-1 model family");
    if (name != "aklt_periodic" && d != 2)
      throw ConfigError("config: '" + name + "' needs a spin-1/2 model family");
    if (name == "majumdar_ghosh_dimer")
      for (std::size_t n : all)
        if (n % 2 != 0)
          throw ConfigError(
              "config: majumdar_ghosh_dimer requires even system sizes");
  } else if (cfg.reference.source == "amplitude_file") {
    for (const auto& [n, path] : cfg.reference.files) {
      if (std::find(all.begin(), all.end(), n) == all.end())
        throw ConfigError("config: reference.files lists size " +
                          std::to_string(n) +
                          " which is neither a training nor a test size");
      if (!fs::exists(path))
        throw ConfigError("config: amplitude file '" + path +
                          "' does not exist");
    }
  }

  const std::vector<LossTermConfig> terms =
      cfg.loss.terms.empty() ? default_recovery_terms() : cfg.loss.terms;
  bool train_refs_covered = false;
  if (cfg.reference.source == "planted" || cfg.reference.source == "named") {
    train_refs_covered = true;
  } else if (cfg.reference.source == "amplitude_file") {
    train_refs_covered = true;
    for (std::size_t n : cfg.train_sizes)
      if (!cfg.reference.files.count(n)) train_refs_covered = false;
  }
  for (const auto& t : terms) {
    if ((t.kind == "overlap" || t.kind == "kl" ||
         t.kind == "energy_variance") &&
        !train_refs_covered)
      throw ConfigError("config: loss term '" + t.kind +
                        "' needs a reference wavefunction at every training "
                        "size, but the reference source does not provide one");
    if ((t.kind == "extrapolated_gap" ||
         (t.kind == "target_value" && t.target_kind == "extrapolated_gap")) &&
        cfg.train_sizes.size() < 2)
      throw ConfigError(
          "config: gap extrapolation needs at least two training sizes");
    if (t.kind == "regularization_l1" && !t.gamma_ref.empty() &&
        t.gamma_ref.size() != n_params)
      throw ConfigError("config: gamma_ref has " +
                        std::to_string(t.gamma_ref.size()) +
                        " entries for a " + std::to_string(n_params) +
                        "-parameter domain");
  }
}

}  // namespace hamopt

#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hamopt/errors.hpp"
#include "hamopt/hilbert.hpp"
#include "hamopt/models.hpp"
#include "hamopt/operators.hpp"

namespace hamopt {

// ---------------------------------------------------------------------------
// experiment configuration
//
// One JSON document drives every CLI subcommand. Unknown keys are rejected
// everywhere so a typo cannot silently fall back to a default, and
// serialization always materializes the full key set so save -> load -> save
// is byte-identical.

inline constexpr int kConfigSchemaVersion = 1;

struct ModelConfig {
  std::string family = "pauli_strings_k_local";
  // pauli_strings_k_local | heisenberg_bilinear_biquadratic | j1_j2 |
  // transverse_field_ising
  Boundary boundary = Boundary::open;
  PauliStringFamilyOptions pauli;   // pauli_strings_k_local only
  bool include_biquadratic = true;  // heisenberg_bilinear_biquadratic only
};

struct SectorConfig {
  bool enabled = false;
  double total_sz = 0.0;
};

struct ParametrizationConfig {
  std::string kind = "linear";  // linear | polynomial
  std::size_t n_params = 0;     // polynomial only; linear infers M from model
  // Box bounds: a single entry broadcasts over every parameter.
  std::vector<double> box_lo{-2.0};
  std::vector<double> box_hi{2.0};
  std::vector<std::vector<ParametrizationMap::Monomial>> table;  // polynomial
};

struct ReferenceConfig {
  std::string source = "planted";  // planted | named | amplitude_file | none
  std::string name;                            // named
  std::vector<std::string> support;            // planted: operator labels
  std::map<std::size_t, std::string> files;    // amplitude_file: size -> path
};

struct LossTermConfig {
  std::string kind;  // overlap | kl | energy_variance | ground_energy | gap |
                     // extrapolated_gap | symmetry_penalty | target_value |
                     // regularization_l1 | box_penalty
  double weight = 1.0;
  bool raw = false;                      // overlap: contribute ov, not 1-ov
  std::string target_kind = "gap";       // target_value only
  double target = 0.0;                   // target_value only
  std::string symmetry_op = "total_sz";  // symmetry terms (sole built-in)
  std::vector<double> gamma_ref;         // regularization_l1; empty = zeros
  std::map<std::size_t, double> size_weights;  // per-size G_N override
};

struct LossConfig {
  std::vector<LossTermConfig> terms;  // empty = driver default recovery loss
  std::map<std::size_t, double> importance;
  bool uniform_size_weights = false;
  std::size_t eigs_k = 1;
};

struct GaugeConfig {
  std::string kind = "none";  // none | freeze_one | l1_sum
  std::string label;          // freeze_one: operator label (linear map only)
  long long index = -1;       // freeze_one: explicit coordinate, -1 = unset
  double value = 1.0;         // freeze_one
  double total = 1.0;         // l1_sum
};

struct OptimizerConfig {
  std::size_t max_iters = 200;
  double grad_tol = 1e-8;
  double loss_tol = 1e-10;
  std::size_t restart_period = 0;  // 0 = domain dimension
  std::string beta = "hestenes_stiefel";  // | polak_ribiere
  double fd_step = 1e-5;
  double line_initial = 1e-3;
  double line_growth = 2.0;
  double line_rel_tol = 1e-6;
  std::size_t line_max_evals = 100;
  std::size_t escape_patience = 10;
  double escape_scale = 0.1;
  std::size_t max_escapes = 3;
  std::size_t multistart = 1;
};

struct ScanConfig {
  std::size_t grid_rows = 10;
  std::size_t grid_cols = 11;
  std::vector<double> start;  // reduced coordinates; empty = box midpoint
  std::size_t cgd_max_iters = 10;
  std::size_t steepest_max_iters = 24;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int threads = 1;
  double budget_seconds = 0.0;  // 0 disables the budget
  ModelConfig model;
  std::vector<std::size_t> train_sizes{8};
  std::vector<std::size_t> test_sizes;
  SectorConfig sector;
  ParametrizationConfig parametrization;
  ReferenceConfig reference;
  LossConfig loss;
  GaugeConfig gauge;
  OptimizerConfig optimizer;
  ScanConfig scan;
};

// ---------------------------------------------------------------------------
// parsing

namespace detail {

using nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& msg) {
  throw ConfigError("config: " + msg);
}

inline void expect_object(const json& j, const std::string& where) {
  if (!j.is_object()) config_fail(where + " must be an object");
}

inline void expect_keys(const json& j, const std::string& where,
                        std::initializer_list<const char*> keys) {
  expect_object(j, where);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) config_fail("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T get_as(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_fail("key '" + std::string(key) + "' in " + where +
                " is missing or has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    config_fail("key '" + std::string(key) + "' in " + where +
                " has the wrong type");
  }
}

/// Object whose keys are decimal system sizes ("8": x).
template <class T>
std::map<std::size_t, T> get_size_map(const json& j, const char* key,
                                      const std::string& where) {
  std::map<std::size_t, T> out;
  auto it = j.find(key);
  if (it == j.end()) return out;
  expect_object(*it, where + "." + key);
  for (auto kv = it->begin(); kv != it->end(); ++kv) {
    std::size_t n = 0;
    try {
      std::size_t pos = 0;
      n = std::stoul(kv.key(), &pos);
      if (pos != kv.key().size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      config_fail("key '" + kv.key() + "' in " + where + "." + key +
                  " is not a system size");
    }
    try {
      out[n] = kv.value().get<T>();
    } catch (const json::exception&) {
      config_fail("value for size " + kv.key() + " in " + where + "." + key +
                  " has the wrong type");
    }
  }
  return out;
}

inline Boundary parse_boundary(const std::string& s) {
  if (s == "open") return Boundary::open;
  if (s == "periodic") return Boundary::periodic;
  config_fail("boundary must be 'open' or 'periodic', got '" + s + "'");
}

inline void check_one_of(const std::string& value, const std::string& what,
                         std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::ostringstream os;
  os << what << " '" << value << "' is not one of {";
  bool first = true;
  for (const char* a : allowed) {
    if (!first) os << ", ";
    os << a;
    first = false;
  }
  os << "}";
  config_fail(os.str());
}

inline std::vector<double> get_broadcastable(const json& j, const char* key,
                                             double fallback,
                                             const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return {fallback};
  if (it->is_number()) return {it->get<double>()};
  if (it->is_array()) {
    std::vector<double> v;
    for (const auto& e : *it) {
      if (!e.is_number())
        config_fail("key '" + std::string(key) + "' in " + where +
                    " must hold numbers");
      v.push_back(e.get<double>());
    }
    if (v.empty())
      config_fail("key '" + std::string(key) + "' in " + where +
                  " must not be an empty array");
    return v;
  }
  config_fail("key '" + std::string(key) + "' in " + where +
              " must be a number or an array of numbers");
}

}  // namespace detail

inline ModelConfig parse_model_config(const nlohmann::json& j) {
  using namespace detail;
  ModelConfig m;
  expect_keys(j, "model",
              {"family", "boundary", "max_weight", "max_range",
               "max_range_multi", "include_z_field", "include_biquadratic"});
  m.family = get_or<std::string>(j, "family", m.family, "model");
  check_one_of(m.family, "model.family",
               {"pauli_strings_k_local", "heisenberg_bilinear_biquadratic",
                "j1_j2", "transverse_field_ising"});
  m.boundary = parse_boundary(get_or<std::string>(j, "boundary", "open", "model"));
  m.pauli.max_weight = get_or<int>(j, "max_weight", m.pauli.max_weight, "model");
  m.pauli.max_range = get_or<int>(j, "max_range", m.pauli.max_range, "model");
  m.pauli.max_range_multi =
      get_or<int>(j, "max_range_multi", m.pauli.max_range_multi, "model");
  m.pauli.include_z_field =
      get_or<bool>(j, "include_z_field", m.pauli.include_z_field, "model");
  m.include_biquadratic =
      get_or<bool>(j, "include_biquadratic", m.include_biquadratic, "model");
  return m;
}

inline ParametrizationConfig parse_parametrization_config(const nlohmann::json& j) {
  using namespace detail;
  ParametrizationConfig p;
  expect_keys(j, "parametrization",
              {"kind", "n_params", "box_lo", "box_hi", "table"});
  p.kind = get_or<std::string>(j, "kind", p.kind, "parametrization");
  check_one_of(p.kind, "parametrization.kind", {"linear", "polynomial"});
  p.n_params = get_or<std::size_t>(j, "n_params", 0, "parametrization");
  p.box_lo = get_broadcastable(j, "box_lo", -2.0, "parametrization");
  p.box_hi = get_broadcastable(j, "box_hi", 2.0, "parametrization");
  if (p.box_lo.size() != p.box_hi.size() &&
      p.box_lo.size() != 1 && p.box_hi.size() != 1)
    config_fail("parametrization box_lo and box_hi lengths differ");
  if (p.kind == "polynomial") {
    if (p.n_params == 0)
      config_fail("polynomial parametrization requires n_params >= 1");
    auto it = j.find("table");
    if (it == j.end() || !it->is_array() || it->empty())
      config_fail("polynomial parametrization requires a non-empty table");
    for (const auto& row : *it) {
      if (!row.is_array())
        config_fail("parametrization.table rows must be arrays of monomials");
      std::vector<ParametrizationMap::Monomial> r;
      for (const auto& mono : row) {
        expect_keys(mono, "parametrization.table monomial",
                    {"coeff", "exponents"});
        ParametrizationMap::Monomial m;
        m.coeff = get_as<double>(mono, "coeff", "parametrization.table");
        m.exponents = get_as<std::vector<unsigned>>(mono, "exponents",
                                                    "parametrization.table");
        if (m.exponents.size() != p.n_params)
          config_fail("monomial exponent count must equal n_params");
        r.push_back(std::move(m));
      }
      p.table.push_back(std::move(r));
    }
  } else if (j.contains("table") || j.contains("n_params")) {
    config_fail("table/n_params only apply to the polynomial parametrization");
  }
  return p;
}

inline ReferenceConfig parse_reference_config(const nlohmann::json& j) {
  using namespace detail;
  ReferenceConfig r;
  expect_keys(j, "reference", {"source", "name", "support", "files"});
  r.source = get_or<std::string>(j, "source", r.source, "reference");
  check_one_of(r.source, "reference.source",
               {"planted", "named", "amplitude_file", "none"});
  r.name = get_or<std::string>(j, "name", "", "reference");
  r.support = get_or<std::vector<std::string>>(j, "support", {}, "reference");
  r.files = get_size_map<std::string>(j, "files", "reference");
  if (r.source == "planted" && r.support.empty())
    config_fail("planted reference requires a non-empty support list");
  if (r.source == "named" && r.name.empty())
    config_fail("named reference requires a name");
  if (r.source == "amplitude_file" && r.files.empty())
    config_fail("amplitude_file reference requires a files map");
  return r;
}

inline LossTermConfig parse_loss_term_config(const nlohmann::json& j,
                                             std::size_t index) {
  using namespace detail;
  const std::string where = "loss.terms[" + std::to_string(index) + "]";
  LossTermConfig t;
  expect_keys(j, where,
              {"kind", "weight", "raw", "target_kind", "target", "symmetry_op",
               "gamma_ref", "size_weights"});
  t.kind = get_as<std::string>(j, "kind", where);
  check_one_of(t.kind, where + ".kind",
               {"overlap", "kl", "energy_variance", "ground_energy", "gap",
                "extrapolated_gap", "symmetry_penalty", "target_value",
                "regularization_l1", "box_penalty"});
  t.weight = get_or<double>(j, "weight", 1.0, where);
  if (!std::isfinite(t.weight))
    config_fail(where + ".weight must be finite");
  t.raw = get_or<bool>(j, "raw", false, where);
  t.target_kind = get_or<std::string>(j, "target_kind", "gap", where);
  check_one_of(t.target_kind, where + ".target_kind",
               {"ground_energy", "gap", "symmetry", "extrapolated_gap"});
  t.target = get_or<double>(j, "target", 0.0, where);
  t.symmetry_op = get_or<std::string>(j, "symmetry_op", "total_sz", where);
  check_one_of(t.symmetry_op, where + ".symmetry_op", {"total_sz"});
  t.gamma_ref = get_or<std::vector<double>>(j, "gamma_ref", {}, where);
  t.size_weights = get_size_map<double>(j, "size_weights", where);
  return t;
}

inline LossConfig parse_loss_config(const nlohmann::json& j) {
  using namespace detail;
  LossConfig l;
  expect_keys(j, "loss",
              {"terms", "importance", "uniform_size_weights", "eigs_k"});
  auto it = j.find("terms");
  if (it != j.end()) {
    if (!it->is_array()) config_fail("loss.terms must be an array");
    for (std::size_t k = 0; k < it->size(); ++k)
      l.terms.push_back(parse_loss_term_config((*it)[k], k));
  }
  l.importance = get_size_map<double>(j, "importance", "loss");
  l.uniform_size_weights =
      get_or<bool>(j, "uniform_size_weights", false, "loss");
  l.eigs_k = get_or<std::size_t>(j, "eigs_k", 1, "loss");
  if (l.eigs_k == 0) config_fail("loss.eigs_k must be >= 1");
  return l;
}

inline GaugeConfig parse_gauge_config(const nlohmann::json& j) {
  using namespace detail;
  GaugeConfig g;
  expect_keys(j, "gauge", {"kind", "label", "index", "value", "total"});
  g.kind = get_or<std::string>(j, "kind", g.kind, "gauge");
  check_one_of(g.kind, "gauge.kind", {"none", "freeze_one", "l1_sum"});
  g.label = get_or<std::string>(j, "label", "", "gauge");
  g.index = get_or<long long>(j, "index", -1, "gauge");
  g.value = get_or<double>(j, "value", 1.0, "gauge");
  g.total = get_or<double>(j, "total", 1.0, "gauge");
  if (g.kind == "freeze_one") {
    if (g.label.empty() && g.index < 0)
      config_fail("freeze_one gauge needs a label or an index");
    if (!g.label.empty() && g.index >= 0)
      config_fail("freeze_one gauge takes a label or an index, not both");
  }
  if (g.kind == "l1_sum" && !(g.total > 0))
    config_fail("l1_sum gauge requires total > 0");
  return g;
}

inline OptimizerConfig parse_optimizer_config(const nlohmann::json& j) {
  using namespace detail;
  OptimizerConfig o;
  expect_keys(j, "optimizer",
              {"max_iters", "grad_tol", "loss_tol", "restart_period", "beta",
               "fd_step", "line_initial", "line_growth", "line_rel_tol",
               "line_max_evals", "escape_patience", "escape_scale",
               "max_escapes", "multistart"});
  o.max_iters = get_or<std::size_t>(j, "max_iters", o.max_iters, "optimizer");
  o.grad_tol = get_or<double>(j, "grad_tol", o.grad_tol, "optimizer");
  o.loss_tol = get_or<double>(j, "loss_tol", o.loss_tol, "optimizer");
  o.restart_period =
      get_or<std::size_t>(j, "restart_period", o.restart_period, "optimizer");
  o.beta = get_or<std::string>(j, "beta", o.beta, "optimizer");
  check_one_of(o.beta, "optimizer.beta", {"hestenes_stiefel", "polak_ribiere"});
  o.fd_step = get_or<double>(j, "fd_step", o.fd_step, "optimizer");
  o.line_initial = get_or<double>(j, "line_initial", o.line_initial, "optimizer");
  o.line_growth = get_or<double>(j, "line_growth", o.line_growth, "optimizer");
  o.line_rel_tol =
      get_or<double>(j, "line_rel_tol", o.line_rel_tol, "optimizer");
  o.line_max_evals =
      get_or<std::size_t>(j, "line_max_evals", o.line_max_evals, "optimizer");
  o.escape_patience =
      get_or<std::size_t>(j, "escape_patience", o.escape_patience, "optimizer");
  o.escape_scale =
      get_or<double>(j, "escape_scale", o.escape_scale, "optimizer");
  o.max_escapes =
      get_or<std::size_t>(j, "max_escapes", o.max_escapes, "optimizer");
  o.multistart = get_or<std::size_t>(j, "multistart", o.multistart, "optimizer");
  if (o.multistart == 0) config_fail("optimizer.multistart must be >= 1");
  const std::pair<double, const char*> positive[] = {
      {o.fd_step, "fd_step"},
      {o.line_initial, "line_initial"},
      {o.line_growth, "line_growth"},
      {o.line_rel_tol, "line_rel_tol"}};
  for (const auto& [v, name] : positive)
    if (!(v > 0)) config_fail(std::string("optimizer.") + name +
                              " must be positive");
  return o;
}

inline ScanConfig parse_scan_config(const nlohmann::json& j) {
  using namespace detail;
  ScanConfig s;
  expect_keys(j, "scan",
              {"grid_rows", "grid_cols", "start", "cgd_max_iters",
               "steepest_max_iters"});
  s.grid_rows = get_or<std::size_t>(j, "grid_rows", s.grid_rows, "scan");
  s.grid_cols = get_or<std::size_t>(j, "grid_cols", s.grid_cols, "scan");
  if (s.grid_rows < 2 || s.grid_cols < 2)
    config_fail("scan grid needs at least 2 points per axis");
  s.start = get_or<std::vector<double>>(j, "start", {}, "scan");
  if (!s.start.empty() && s.start.size() != 2)
    config_fail("scan.start must hold exactly two coordinates");
  s.cgd_max_iters =
      get_or<std::size_t>(j, "cgd_max_iters", s.cgd_max_iters, "scan");
  s.steepest_max_iters = get_or<std::size_t>(j, "steepest_max_iters",
                                             s.steepest_max_iters, "scan");
  return s;
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  expect_keys(j, "config",
              {"schema_version", "seed", "output_dir", "threads",
               "budget_seconds", "model", "sizes", "sector", "parametrization",
               "reference", "loss", "gauge", "optimizer", "scan"});
  ExperimentConfig c;
  c.schema_version =
      get_or<int>(j, "schema_version", kConfigSchemaVersion, "config");
  if (c.schema_version != kConfigSchemaVersion)
    config_fail("schema_version " + std::to_string(c.schema_version) +
                " is not supported; this build reads version " +
                std::to_string(kConfigSchemaVersion) +
                " and no migration path exists");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, "config");
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir, "config");
  c.threads = get_or<int>(j, "threads", c.threads, "config");
  if (c.threads < 1) config_fail("threads must be >= 1");
  c.budget_seconds =
      get_or<double>(j, "budget_seconds", c.budget_seconds, "config");
  if (c.budget_seconds < 0) config_fail("budget_seconds must be >= 0");

  if (j.contains("model")) c.model = parse_model_config(j.at("model"));

  if (j.contains("sizes")) {
    expect_keys(j.at("sizes"), "sizes", {"train", "test"});
    c.train_sizes = get_or<std::vector<std::size_t>>(j.at("sizes"), "train",
                                                     c.train_sizes, "sizes");
    c.test_sizes = get_or<std::vector<std::size_t>>(j.at("sizes"), "test",
                                                    c.test_sizes, "sizes");
  }
  if (c.train_sizes.empty()) config_fail("sizes.train must not be empty");
  for (std::size_t n : c.train_sizes)
    if (n < 2) config_fail("system sizes must be >= 2");
  for (std::size_t n : c.test_sizes) {
    if (n < 2) config_fail("system sizes must be >= 2");
    for (std::size_t t : c.train_sizes)
      if (t == n)
        config_fail("test size " + std::to_string(n) +
                    " also appears in sizes.train");
  }

  if (j.contains("sector")) {
    expect_keys(j.at("sector"), "sector", {"enabled", "total_sz"});
    c.sector.enabled =
        get_or<bool>(j.at("sector"), "enabled", false, "sector");
    c.sector.total_sz =
        get_or<double>(j.at("sector"), "total_sz", 0.0, "sector");
  }

  if (j.contains("parametrization"))
    c.parametrization = parse_parametrization_config(j.at("parametrization"));
  if (j.contains("reference"))
    c.reference = parse_reference_config(j.at("reference"));
  if (j.contains("loss")) c.loss = parse_loss_config(j.at("loss"));
  if (j.contains("gauge")) c.gauge = parse_gauge_config(j.at("gauge"));
  if (j.contains("optimizer"))
    c.optimizer = parse_optimizer_config(j.at("optimizer"));
  if (j.contains("scan")) c.scan = parse_scan_config(j.at("scan"));
  return c;
}

// ---------------------------------------------------------------------------
// serialization (full key set, so the output is canonical)

namespace detail {

inline json size_map_to_json(const std::map<std::size_t, double>& m) {
  json o = json::object();
  for (const auto& [n, v] : m) o[std::to_string(n)] = v;
  return o;
}

inline json size_map_to_json(const std::map<std::size_t, std::string>& m) {
  json o = json::object();
  for (const auto& [n, v] : m) o[std::to_string(n)] = v;
  return o;
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["budget_seconds"] = c.budget_seconds;

  json& m = j["model"];
  m["family"] = c.model.family;
  m["boundary"] = to_string(c.model.boundary);
  m["max_weight"] = c.model.pauli.max_weight;
  m["max_range"] = c.model.pauli.max_range;
  m["max_range_multi"] = c.model.pauli.max_range_multi;
  m["include_z_field"] = c.model.pauli.include_z_field;
  m["include_biquadratic"] = c.model.include_biquadratic;

  j["sizes"]["train"] = c.train_sizes;
  j["sizes"]["test"] = c.test_sizes;

  j["sector"]["enabled"] = c.sector.enabled;
  j["sector"]["total_sz"] = c.sector.total_sz;

  json& p = j["parametrization"];
  p["kind"] = c.parametrization.kind;
  p["box_lo"] = c.parametrization.box_lo;
  p["box_hi"] = c.parametrization.box_hi;
  if (c.parametrization.kind == "polynomial") {
    p["n_params"] = c.parametrization.n_params;
    json table = json::array();
    for (const auto& row : c.parametrization.table) {
      json r = json::array();
      for (const auto& mono : row)
        r.push_back({{"coeff", mono.coeff}, {"exponents", mono.exponents}});
      table.push_back(std::move(r));
    }
    p["table"] = std::move(table);
  }

  json& r = j["reference"];
  r["source"] = c.reference.source;
  if (!c.reference.name.empty()) r["name"] = c.reference.name;
  if (!c.reference.support.empty()) r["support"] = c.reference.support;
  if (!c.reference.files.empty())
    r["files"] = detail::size_map_to_json(c.reference.files);

  json& l = j["loss"];
  json terms = json::array();
  for (const auto& t : c.loss.terms) {
    json tj;
    tj["kind"] = t.kind;
    tj["weight"] = t.weight;
    if (t.kind == "overlap") tj["raw"] = t.raw;
    if (t.kind == "target_value") {
      tj["target_kind"] = t.target_kind;
      tj["target"] = t.target;
      if (t.target_kind == "symmetry") tj["symmetry_op"] = t.symmetry_op;
    }
    if (t.kind == "symmetry_penalty") tj["symmetry_op"] = t.symmetry_op;
    if (t.kind == "regularization_l1" && !t.gamma_ref.empty())
      tj["gamma_ref"] = t.gamma_ref;
    if (!t.size_weights.empty())
      tj["size_weights"] = detail::size_map_to_json(t.size_weights);
    terms.push_back(std::move(tj));
  }
  l["terms"] = std::move(terms);
  l["importance"] = detail::size_map_to_json(c.loss.importance);
  l["uniform_size_weights"] = c.loss.uniform_size_weights;
  l["eigs_k"] = c.loss.eigs_k;

  json& g = j["gauge"];
  g["kind"] = c.gauge.kind;
  if (c.gauge.kind == "freeze_one") {
    if (!c.gauge.label.empty())
      g["label"] = c.gauge.label;
    else
      g["index"] = c.gauge.index;
    g["value"] = c.gauge.value;
  }
  if (c.gauge.kind == "l1_sum") g["total"] = c.gauge.total;

  json& o = j["optimizer"];
  o["max_iters"] = c.optimizer.max_iters;
  o["grad_tol"] = c.optimizer.grad_tol;
  o["loss_tol"] = c.optimizer.loss_tol;
  o["restart_period"] = c.optimizer.restart_period;
  o["beta"] = c.optimizer.beta;
  o["fd_step"] = c.optimizer.fd_step;
  o["line_initial"] = c.optimizer.line_initial;
  o["line_growth"] = c.optimizer.line_growth;
  o["line_rel_tol"] = c.optimizer.line_rel_tol;
  o["line_max_evals"] = c.optimizer.line_max_evals;
  o["escape_patience"] = c.optimizer.escape_patience;
  o["escape_scale"] = c.optimizer.escape_scale;
  o["max_escapes"] = c.optimizer.max_escapes;
  o["multistart"] = c.optimizer.multistart;

  json& s = j["scan"];
  s["grid_rows"] = c.scan.grid_rows;
  s["grid_cols"] = c.scan.grid_cols;
  if (!c.scan.start.empty()) s["start"] = c.scan.start;
  s["cgd_max_iters"] = c.scan.cgd_max_iters;
  s["steepest_max_iters"] = c.scan.steepest_max_iters;
  return j;
}

inline std::string dump_config(const ExperimentConfig& c) {
  return to_json(c).dump(2) + "\n";
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("config: cannot open '" + path + "' for writing");
  out << dump_config(c);
  if (!out) throw ConfigError("config: write to '" + path + "' failed");
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace hamopt

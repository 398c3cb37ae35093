#pragma once

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hamopt/errors.hpp"
#include "hamopt/hilbert.hpp"
#include "hamopt/optimizer.hpp"

namespace hamopt::io {

/// Shortest exact decimal form: %.17g round-trips every double.
inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// trace CSV
//
// One header line, then one row per accepted optimizer step, flushed as it
// is produced so an interrupted run still leaves a readable prefix. Columns:
//   step,loss,<one column per loss term>,gradnorm,steplen,beta,reset,seconds

class TraceCsvWriter {
 public:
  TraceCsvWriter(const std::string& path,
                 const std::vector<std::string>& term_labels)
      : path_(path), n_terms_(term_labels.size()) {
    out_.open(path, std::ios::trunc);
    if (!out_)
      throw ConfigError("trace: cannot open '" + path + "' for writing");
    out_ << "step,loss";
    for (const auto& l : term_labels) out_ << ',' << l;
    out_ << ",gradnorm,steplen,beta,reset,seconds\n";
    out_.flush();
  }

  void write_row(const TraceRow& r) {
    if (std::size_t(r.term_values.size()) != n_terms_)
      throw DimensionError("trace: row carries " +
                           std::to_string(r.term_values.size()) +
                           " term values, header declares " +
                           std::to_string(n_terms_));
    out_ << r.step << ',' << fmt_g17(r.loss);
    for (Eigen::Index k = 0; k < r.term_values.size(); ++k)
      out_ << ',' << fmt_g17(r.term_values[k]);
    out_ << ',' << fmt_g17(r.grad_norm) << ',' << fmt_g17(r.step_length) << ','
         << fmt_g17(r.beta) << ',' << r.reset << ',' << fmt_g17(r.seconds)
         << '\n';
    out_.flush();
    ++rows_;
  }

  std::size_t rows_written() const { return rows_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::size_t n_terms_;
  std::size_t rows_ = 0;
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// grid CSV (scan heatmaps)
//
// Columns: p1,p2,total,<one column per loss term>. Row-major over the grid.

class GridCsvWriter {
 public:
  GridCsvWriter(const std::string& path,
                const std::vector<std::string>& term_labels)
      : n_terms_(term_labels.size()) {
    out_.open(path, std::ios::trunc);
    if (!out_) throw ConfigError("grid: cannot open '" + path + "' for writing");
    out_ << "p1,p2,total";
    for (const auto& l : term_labels) out_ << ',' << l;
    out_ << '\n';
  }

  void write_point(double p1, double p2, double total,
                   const Eigen::VectorXd& term_values) {
    if (std::size_t(term_values.size()) != n_terms_)
      throw DimensionError("grid: point carries " +
                           std::to_string(term_values.size()) +
                           " term values, header declares " +
                           std::to_string(n_terms_));
    out_ << fmt_g17(p1) << ',' << fmt_g17(p2) << ',' << fmt_g17(total);
    for (Eigen::Index k = 0; k < term_values.size(); ++k)
      out_ << ',' << fmt_g17(term_values[k]);
    out_ << '\n';
    ++rows_;
  }

  void flush() { out_.flush(); }
  std::size_t rows_written() const { return rows_; }

 private:
  std::size_t n_terms_;
  std::size_t rows_ = 0;
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// CSV reading (report recomputation, tests)

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == name) return c;
    throw ValidationError("csv: no column named '" + name + "'");
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("csv: cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line))
    throw ValidationError("csv: '" + path + "' is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
        if (pos != cell.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ValidationError("csv: '" + path + "' line " +
                              std::to_string(lineno) + ": '" + cell +
                              "' is not a number");
      }
    }
    if (row.size() != t.columns.size())
      throw ValidationError("csv: '" + path + "' line " +
                            std::to_string(lineno) + " has " +
                            std::to_string(row.size()) + " cells, header has " +
                            std::to_string(t.columns.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// amplitude files
//
// Plain text, one line per basis index: "<index> <re> <im>". Every index of
// the basis appears exactly once, in order; the reader also accepts sparse
// files where omitted indices mean amplitude zero.

inline void write_amplitudes(const std::string& path, const WaveFunction& psi) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw ConfigError("amplitudes: cannot open '" + path + "' for writing");
  const auto& a = psi.amplitudes();
  for (Eigen::Index i = 0; i < a.size(); ++i)
    out << i << ' ' << fmt_g17(a[i].real()) << ' ' << fmt_g17(a[i].imag())
        << '\n';
  if (!out) throw ConfigError("amplitudes: write to '" + path + "' failed");
}

inline Vector read_amplitude_vector(const std::string& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("amplitudes: cannot open '" + path + "'");
  const Eigen::Index d = Eigen::Index(dim);
  Vector v = Vector::Zero(d);
  std::vector<bool> seen(dim, false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    long long idx = -1;
    double re = 0, im = 0;
    if (!(ss >> idx >> re >> im))
      throw ValidationError("amplitudes: '" + path + "' line " +
                            std::to_string(lineno) +
                            " is not '<index> <re> <im>'");
    std::string rest;
    if (ss >> rest)
      throw ValidationError("amplitudes: '" + path + "' line " +
                            std::to_string(lineno) + " has trailing content");
    if (idx < 0 || idx >= (long long)dim)
      throw ValidationError("amplitudes: '" + path + "' line " +
                            std::to_string(lineno) + ": index " +
                            std::to_string(idx) + " outside basis of dimension " +
                            std::to_string(dim));
    if (seen[std::size_t(idx)])
      throw ValidationError("amplitudes: '" + path + "' line " +
                            std::to_string(lineno) + ": duplicate index " +
                            std::to_string(idx));
    seen[std::size_t(idx)] = true;
    v[Eigen::Index(idx)] = Complex(re, im);
  }
  return v;
}

inline WaveFunction read_amplitudes(const std::string& path,
                                    const std::shared_ptr<const SpinBasis>& basis) {
  return WaveFunction(basis, read_amplitude_vector(path, basis->dim()));
}

// ---------------------------------------------------------------------------
// JSON documents (reports)

inline void write_json_file(const std::string& path,
                            const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("json: cannot open '" + path + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw ConfigError("json: write to '" + path + "' failed");
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("json: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("json: '" + path + "' is not valid JSON: " + e.what());
  }
  return j;
}

}  // namespace hamopt::io

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hamopt/errors.hpp"
#include "hamopt/hilbert.hpp"

namespace hamopt {

struct Triplet {
  std::size_t row;
  std::size_t col;
  Complex value;
};

/// Row-compressed sparse matrix with sorted column indices. Duplicate
/// entries are summed at build time. The index pattern is shared between
/// matrices that differ only in values (weighted sums of a fixed operator
/// set), so reassembly inside optimizer loops touches values only.
class SparseMatrix {
 public:
  struct Pattern {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr;  // rows+1
    std::vector<std::size_t> col_idx;  // nnz
  };

  SparseMatrix() = default;

  SparseMatrix(std::shared_ptr<const Pattern> pattern, std::vector<Complex> values)
      : pattern_(std::move(pattern)), values_(std::move(values)) {
    if (!pattern_ || values_.size() != pattern_->col_idx.size())
      throw DimensionError("SparseMatrix: value array does not match pattern");
    detect_real();
  }

  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> ts,
                                    double drop_tol = 0.0) {
    for (const auto& t : ts)
      if (t.row >= rows || t.col >= cols)
        throw DimensionError("SparseMatrix: triplet index out of range");
    std::sort(ts.begin(), ts.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    auto pattern = std::make_shared<Pattern>();
    pattern->rows = rows;
    pattern->cols = cols;
    pattern->row_ptr.assign(rows + 1, 0);
    std::vector<Complex> values;
    std::size_t i = 0;
    while (i < ts.size()) {
      std::size_t j = i + 1;
      Complex v = ts[i].value;
      while (j < ts.size() && ts[j].row == ts[i].row && ts[j].col == ts[i].col) {
        v += ts[j].value;
        ++j;
      }
      if (std::abs(v) > drop_tol) {
        pattern->col_idx.push_back(ts[i].col);
        pattern->row_ptr[ts[i].row + 1]++;
        values.push_back(v);
      }
      i = j;
    }
    for (std::size_t r = 0; r < rows; ++r)
      pattern->row_ptr[r + 1] += pattern->row_ptr[r];
    return SparseMatrix(std::move(pattern), std::move(values));
  }

  std::size_t rows() const { return pattern_ ? pattern_->rows : 0; }
  std::size_t cols() const { return pattern_ ? pattern_->cols : 0; }
  std::size_t nnz() const { return values_.size(); }
  bool is_real() const { return real_; }
  const std::shared_ptr<const Pattern>& pattern() const { return pattern_; }
  const std::vector<Complex>& values() const { return values_; }

  Complex coeff(std::size_t r, std::size_t c) const {
    check_pattern();
    auto b = pattern_->col_idx.begin() + long(pattern_->row_ptr[r]);
    auto e = pattern_->col_idx.begin() + long(pattern_->row_ptr[r + 1]);
    auto it = std::lower_bound(b, e, c);
    if (it == e || *it != c) return Complex(0.0, 0.0);
    return values_[std::size_t(it - pattern_->col_idx.begin())];
  }

  Vector apply(const Vector& v) const {
    check_pattern();
    if (std::size_t(v.size()) != pattern_->cols)
      throw DimensionError("SparseMatrix::apply: dimension mismatch (" +
                           std::to_string(v.size()) + " vs " +
                           std::to_string(pattern_->cols) + ")");
    Vector y = Vector::Zero(Eigen::Index(pattern_->rows));
    for (std::size_t r = 0; r < pattern_->rows; ++r) {
      Complex acc(0.0, 0.0);
      for (std::size_t k = pattern_->row_ptr[r]; k < pattern_->row_ptr[r + 1]; ++k)
        acc += values_[k] * v[Eigen::Index(pattern_->col_idx[k])];
      y[Eigen::Index(r)] = acc;
    }
    return y;
  }

  Eigen::MatrixXcd dense() const {
    check_pattern();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(Eigen::Index(pattern_->rows),
                                                Eigen::Index(pattern_->cols));
    for (std::size_t r = 0; r < pattern_->rows; ++r)
      for (std::size_t k = pattern_->row_ptr[r]; k < pattern_->row_ptr[r + 1]; ++k)
        m(Eigen::Index(r), Eigen::Index(pattern_->col_idx[k])) += values_[k];
    return m;
  }

  Eigen::MatrixXd dense_real() const {
    check_pattern();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(Eigen::Index(pattern_->rows),
                                              Eigen::Index(pattern_->cols));
    for (std::size_t r = 0; r < pattern_->rows; ++r)
      for (std::size_t k = pattern_->row_ptr[r]; k < pattern_->row_ptr[r + 1]; ++k)
        m(Eigen::Index(r), Eigen::Index(pattern_->col_idx[k])) += values_[k].real();
    return m;
  }

  /// max_ij |A_ij - conj(A_ji)|
  double hermitian_defect() const {
    check_pattern();
    if (pattern_->rows != pattern_->cols)
      throw DimensionError("hermitian_defect: matrix not square");
    double worst = 0.0;
    for (std::size_t r = 0; r < pattern_->rows; ++r)
      for (std::size_t k = pattern_->row_ptr[r]; k < pattern_->row_ptr[r + 1]; ++k) {
        Complex mirror = coeff(pattern_->col_idx[k], r);
        worst = std::max(worst, std::abs(values_[k] - std::conj(mirror)));
      }
    return worst;
  }

  /// Sum of matrices sharing one pattern, with real weights.
  static SparseMatrix weighted_sum(const std::shared_ptr<const Pattern>& pattern,
                                   const std::vector<std::vector<Complex>>& value_sets,
                                   const Eigen::VectorXd& weights) {
    if (std::size_t(weights.size()) != value_sets.size())
      throw DimensionError("weighted_sum: weight count mismatch");
    std::vector<Complex> vals(pattern->col_idx.size(), Complex(0.0, 0.0));
    for (std::size_t m = 0; m < value_sets.size(); ++m) {
      double w = weights[Eigen::Index(m)];
      if (w == 0.0) continue;
      const auto& vs = value_sets[m];
      for (std::size_t k = 0; k < vals.size(); ++k) vals[k] += w * vs[k];
    }
    return SparseMatrix(pattern, std::move(vals));
  }

 private:
  void check_pattern() const {
    if (!pattern_) throw DimensionError("SparseMatrix: empty matrix");
  }

  void detect_real() {
    real_ = true;
    for (const auto& v : values_)
      if (v.imag() != 0.0) {
        real_ = false;
        break;
      }
  }

  std::shared_ptr<const Pattern> pattern_;
  std::vector<Complex> values_;
  bool real_ = true;
};

/// H * v; the backbone of the Lanczos solver and <H^2> evaluation.
inline Vector matvec(const SparseMatrix& h, const Vector& v) { return h.apply(v); }

}  // namespace hamopt

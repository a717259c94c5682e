#pragma once

// Dense kernels used by every other module. All arithmetic is double
// precision and every reduction has a fixed order, so results are bitwise
// reproducible for a given binary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dcomp/errors.hpp"
#include "dcomp/random.hpp"

namespace dcomp {

using DenseVector = std::vector<double>;

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

/// Row-major matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      throw DimensionError("DenseMatrix: " + std::to_string(values_.size()) +
                           " values for shape " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
    }
  }
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("DenseMatrix: ragged initializer");
      values_.insert(values_.end(), r.begin(), r.end());
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  bool finite() const { return all_finite(values_); }

  bool same_shape(const DenseMatrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

namespace detail {

// Four interleaved accumulators combined as ((a0+a1)+(a2+a3))+tail. The
// order depends only on the length, and multiplication commutes, so
// dot(u, v) == dot(v, u) bitwise.
inline double dot_unchecked(const double* a, const double* b, std::size_t n) noexcept {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc0 + acc1) + (acc2 + acc3)) + tail;
}

}  // namespace detail

inline double dot(std::span<const double> u, std::span<const double> v) {
  require_dims(u.size(), v.size(), "dot");
  return detail::dot_unchecked(u.data(), v.data(), u.size());
}

inline double squared_norm(std::span<const double> u) { return dot(u, u); }

inline DenseVector mat_vec(const DenseMatrix& w, std::span<const double> x) {
  require_dims(w.cols(), x.size(), "mat_vec");
  DenseVector out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    out[r] = detail::dot_unchecked(w.row(r).data(), x.data(), x.size());
  }
  return out;
}

/// Wᵀ·x without materialising the transpose.
inline DenseVector mat_t_vec(const DenseMatrix& w, std::span<const double> x) {
  require_dims(w.rows(), x.size(), "mat_t_vec");
  DenseVector out(w.cols(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double xr = x[r];
    const auto row = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) out[c] += row[c] * xr;
  }
  return out;
}

/// out += scale · a·bᵀ
inline void add_outer(DenseMatrix& out, double scale, std::span<const double> a,
                      std::span<const double> b) {
  require_dims(out.rows(), a.size(), "add_outer rows");
  require_dims(out.cols(), b.size(), "add_outer cols");
  for (std::size_t r = 0; r < a.size(); ++r) {
    const double s = scale * a[r];
    auto row = out.row(r);
    for (std::size_t c = 0; c < b.size(); ++c) row[c] += s * b[c];
  }
}

/// y += a·x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  require_dims(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline DenseMatrix mat_mul(const DenseMatrix& a, const DenseMatrix& b) {
  require_dims(a.cols(), b.rows(), "mat_mul");
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

/// log Σ exp(sᵢ), shifted by the maximum.
inline double log_sum_exp(std::span<const double> scores) {
  if (scores.empty()) throw EmptyInputError("log_sum_exp: empty input");
  const double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - mx);
  return mx + std::log(sum);
}

/// Softmax with max subtraction. Entries are clamped to the smallest normal
/// double so the output stays strictly positive even when exp underflows.
inline DenseVector softmax_stable(std::span<const double> scores) {
  if (scores.empty()) throw EmptyInputError("softmax_stable: empty input");
  if (!all_finite(scores)) throw Error("softmax_stable: non-finite score");
  const double mx = *std::max_element(scores.begin(), scores.end());
  DenseVector out(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    sum += out[i];
  }
  for (double& p : out) p = std::max(p / sum, std::numeric_limits<double>::min());
  return out;
}

/// rows×cols matrix with orthonormal columns: modified Gram-Schmidt, applied
/// twice, over a seeded Gaussian matrix.
inline DenseMatrix random_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows < cols) {
    throw DimensionError("random_orthonormal: rows (" + std::to_string(rows) + ") < cols (" +
                         std::to_string(cols) + ")");
  }
  if (cols == 0) throw DimensionError("random_orthonormal: zero columns");
  Rng rng(seed);
  // Work column-major so each column is contiguous.
  std::vector<DenseVector> q(cols, DenseVector(rows));
  for (auto& col : q)
    for (double& x : col) x = rng.normal();

  for (std::size_t j = 0; j < cols; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        const double proj = dot(q[i], q[j]);
        axpy(-proj, q[i], q[j]);
      }
    }
    const double norm = std::sqrt(squared_norm(q[j]));
    if (norm < 1e-12) throw DimensionError("random_orthonormal: degenerate draw");
    for (double& x : q[j]) x /= norm;
  }

  DenseMatrix out(rows, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t r = 0; r < rows; ++r) out(r, j) = q[j][r];
  return out;
}

}  // namespace dcomp

// Copyright 2026 The AirFL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small dense linear algebra: just enough for normal equations and the
// extreme eigenvalues of symmetric positive (semi)definite Gram matrices.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "airfl/errors.hpp"
#include "airfl/numkit.hpp"

namespace airfl {

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  const double* row(std::size_t r) const noexcept { return data_.data() + r * cols_; }
  double* row(std::size_t r) noexcept { return data_.data() + r * cols_; }
  const std::vector<double>& data() const noexcept { return data_; }

  ParameterVector multiply(const ParameterVector& x) const {
    if (x.dim() != cols_) throw ShapeError("Matrix::multiply: dimension mismatch");
    ParameterVector y(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* a = row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < cols_; ++c) acc += a[c] * x[c];
      y[r] = acc;
    }
    return y;
  }

  // this^T x
  ParameterVector multiply_transposed(const ParameterVector& x) const {
    if (x.dim() != rows_) throw ShapeError("Matrix::multiply_transposed: dimension mismatch");
    ParameterVector y(cols_);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* a = row(r);
      const double xr = x[r];
      for (std::size_t c = 0; c < cols_; ++c) y[c] += a[c] * xr;
    }
    return y;
  }

  // scale * this^T this, accumulated into `out` (which must be cols x cols).
  void accumulate_gram(double scale, Matrix& out) const {
    if (out.rows_ != cols_ || out.cols_ != cols_) throw ShapeError("accumulate_gram: bad output");
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* a = row(r);
      for (std::size_t i = 0; i < cols_; ++i) {
        const double ai = scale * a[i];
        if (ai == 0.0) continue;
        double* o = out.row(i);
        for (std::size_t j = 0; j < cols_; ++j) o[j] += ai * a[j];
      }
    }
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
class Cholesky {
 public:
  explicit Cholesky(const Matrix& a) : l_(a.rows(), a.cols()) {
    if (a.rows() != a.cols()) throw ShapeError("Cholesky: matrix not square");
    const std::size_t n = a.rows();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
    // Pivots below this are treated as numerically zero.
    const double tiny = 1e-13 * std::max(max_diag, 1e-300);
    for (std::size_t j = 0; j < n; ++j) {
      double diag = a(j, j);
      for (std::size_t k = 0; k < j; ++k) diag -= l_(j, k) * l_(j, k);
      if (!(diag > tiny)) throw DegenerateError("matrix is singular or not positive definite");
      const double ljj = std::sqrt(diag);
      l_(j, j) = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
        l_(i, j) = s / ljj;
      }
    }
  }

  ParameterVector solve(const ParameterVector& b) const {
    const std::size_t n = l_.rows();
    if (b.dim() != n) throw ShapeError("Cholesky::solve: dimension mismatch");
    ParameterVector y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * y[k];
      y[i] = s / l_(i, i);
    }
    ParameterVector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= l_(k, ii) * x[k];
      x[ii] = s / l_(ii, ii);
    }
    return x;
  }

 private:
  Matrix l_;
};

struct PowerIterationOptions {
  double relative_tolerance = 1e-14;
  std::size_t max_iterations = 100000;
};

/// Largest eigenvalue of a symmetric PSD operator given as y = op(x).
///
/// The Rayleigh quotient is monotone for PSD operators, so stopping on a small
/// relative change is safe; the start vector is deterministic and dense so it
/// is never orthogonal to the dominant eigenvector in practice.
template <typename Op>
double power_iteration(std::size_t n, Op&& op, PowerIterationOptions opts = {}) {
  if (n == 0) throw ParameterError("power_iteration: empty operator");
  ParameterVector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 0.01 * static_cast<double>(i % 7);
  x *= 1.0 / x.norm();
  double lambda = 0.0;
  for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
    ParameterVector y = op(x);
    const double next = x.dot(y);
    const double ynorm = y.norm();
    if (ynorm == 0.0) return 0.0;
    y *= 1.0 / ynorm;
    // The Rayleigh quotient can stall slightly before the vector settles, so
    // also require the eigen-residual to be small before accepting.
    if (it > 1 && std::abs(next - lambda) <= opts.relative_tolerance * std::abs(next)) {
      ParameterVector r = op(y);
      r.axpy(-next, y);
      if (r.norm() <= 1e-6 * std::abs(next)) return next;
    }
    lambda = next;
    x = std::move(y);
  }
  throw NumericError("power iteration did not converge", opts.max_iterations);
}

inline double largest_eigenvalue(const Matrix& a, PowerIterationOptions opts = {}) {
  if (a.rows() != a.cols()) throw ShapeError("largest_eigenvalue: matrix not square");
  return power_iteration(a.rows(), [&](const ParameterVector& x) { return a.multiply(x); }, opts);
}

/// Smallest eigenvalue of an SPD matrix via power iteration on its inverse.
inline double smallest_eigenvalue_spd(const Matrix& a, PowerIterationOptions opts = {}) {
  const Cholesky chol(a);
  const double inv_max =
      power_iteration(a.rows(), [&](const ParameterVector& x) { return chol.solve(x); }, opts);
  return 1.0 / inv_max;
}

}  // namespace airfl

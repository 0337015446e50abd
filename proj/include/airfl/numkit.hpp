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

// Numeric substrate shared by every other module: dense real vectors,
// complex channel scalars, seeded random streams and running statistics.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "airfl/errors.hpp"

namespace airfl {

/// A d-dimensional real vector: model parameters, gradients, updates and
/// aggregation errors all travel as ParameterVector.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {}
  ParameterVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  ParameterVector& operator+=(const ParameterVector& other) {
    check_same_dim(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }

  ParameterVector& operator-=(const ParameterVector& other) {
    check_same_dim(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
  }

  ParameterVector& operator*=(double scale) noexcept {
    for (auto& v : values_) v *= scale;
    return *this;
  }

  // this += scale * other
  ParameterVector& axpy(double scale, const ParameterVector& other) {
    check_same_dim(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
    return *this;
  }

  double dot(const ParameterVector& other) const {
    check_same_dim(other);
    double acc = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) acc += values_[i] * other.values_[i];
    return acc;
  }

  double squared_norm() const noexcept {
    double acc = 0.0;
    for (double v : values_) acc += v * v;
    return acc;
  }

  double norm() const noexcept { return std::sqrt(squared_norm()); }

  bool all_finite() const noexcept {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  void check_same_dim(const ParameterVector& other) const {
    if (other.dim() != dim()) {
      throw ShapeError("parameter vector dimension mismatch: " + std::to_string(dim()) +
                       " vs " + std::to_string(other.dim()));
    }
  }

  std::vector<double> values_;
};

inline ParameterVector operator+(ParameterVector lhs, const ParameterVector& rhs) {
  lhs += rhs;
  return lhs;
}

inline ParameterVector operator-(ParameterVector lhs, const ParameterVector& rhs) {
  lhs -= rhs;
  return lhs;
}

inline ParameterVector operator*(double scale, ParameterVector v) {
  v *= scale;
  return v;
}

/// Per-device channel coefficients and transmit scalars.
using ComplexCoeff = std::complex<double>;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// A named, seeded random stream.
///
/// Draws depend only on (seed, label path, draw index): two streams built from
/// the same seed and the same chain of child() labels produce bit-identical
/// sequences regardless of what any other stream has consumed. Children are
/// derived from the key, not from the parent's engine state, so forking is
/// order-independent and safe to do from concurrent consumers of distinct
/// parents. A single stream is single-consumer.
class SeededStream {
 public:
  SeededStream(std::uint64_t seed, std::string_view label)
      : seed_(seed), key_(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a64(label)))) {
    engine_.seed(key_);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t key() const noexcept { return key_; }

  SeededStream child(std::uint64_t index) const {
    return SeededStream(seed_, detail::splitmix64(key_ + detail::splitmix64(index + 1)), 0);
  }

  SeededStream child(std::string_view label) const {
    return SeededStream(seed_, detail::splitmix64(key_ ^ detail::fnv1a64(label)), 0);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n).
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw ParameterError("uniform_index requires n >= 1");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
  }

  /// Standard normal draw (Box-Muller; the sine branch is cached).
  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    return r * std::cos(angle);
  }

 private:
  SeededStream(std::uint64_t seed, std::uint64_t key, int) : seed_(seed), key_(key) {
    engine_.seed(key_);
  }

  std::uint64_t seed_;
  std::uint64_t key_;
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// Welford accumulator for a scalar sample.
class RunningStats {
 public:
  void push(double x) noexcept {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }

  std::size_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  double m2() const noexcept { return m2_; }
  // Unbiased sample variance; zero for fewer than two samples.
  double variance() const noexcept {
    return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
  }
  double stddev() const noexcept { return std::sqrt(variance()); }
  double standard_error() const noexcept {
    return count_ > 0 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Per-coordinate Welford accumulator for vector samples.
class VectorRunningStats {
 public:
  explicit VectorRunningStats(std::size_t dim) : mean_(dim), m2_(dim) {}

  void push(const ParameterVector& x) {
    if (x.dim() != mean_.dim()) throw ShapeError("VectorRunningStats: dimension mismatch");
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < x.dim(); ++i) {
      const double delta = x[i] - mean_[i];
      mean_[i] += delta / n;
      m2_[i] += delta * (x[i] - mean_[i]);
    }
  }

  std::size_t count() const noexcept { return count_; }
  const ParameterVector& mean() const noexcept { return mean_; }

  ParameterVector variance() const {
    ParameterVector v(mean_.dim());
    if (count_ < 2) return v;
    for (std::size_t i = 0; i < v.dim(); ++i) v[i] = m2_[i] / static_cast<double>(count_ - 1);
    return v;
  }

  // Standard error of the mean, per coordinate.
  ParameterVector standard_error() const {
    ParameterVector se = variance();
    for (auto& v : se) v = std::sqrt(v / static_cast<double>(count_));
    return se;
  }

 private:
  std::size_t count_ = 0;
  ParameterVector mean_;
  ParameterVector m2_;
};

/// I.i.d. zero-mean Gaussian entries with per-coordinate `variance`.
inline ParameterVector gaussian_vector(SeededStream& stream, std::size_t dim, double variance) {
  if (!(variance >= 0.0)) throw ParameterError("gaussian_vector: variance must be >= 0");
  if (dim == 0) throw ParameterError("gaussian_vector: dim must be >= 1");
  ParameterVector out(dim);
  if (variance == 0.0) return out;
  const double sd = std::sqrt(variance);
  for (auto& v : out) v = sd * stream.normal();
  return out;
}

/// sum_n weights[n] * vectors[n]
inline ParameterVector weighted_sum(std::span<const ParameterVector> vectors,
                                    std::span<const double> weights) {
  if (vectors.empty()) throw ParameterError("weighted_sum: empty input");
  if (vectors.size() != weights.size()) {
    throw ShapeError("weighted_sum: " + std::to_string(vectors.size()) + " vectors but " +
                     std::to_string(weights.size()) + " weights");
  }
  ParameterVector out(vectors.front().dim());
  for (std::size_t n = 0; n < vectors.size(); ++n) out.axpy(weights[n], vectors[n]);
  return out;
}

}  // namespace airfl

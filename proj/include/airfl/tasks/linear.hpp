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

// Federated least squares: device n holds (A_n, b_n) with b_n = A_n x0 + v_n
// and local loss (1/(2 D_n)) ||A_n θ - b_n||^2.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "airfl/errors.hpp"
#include "airfl/linalg.hpp"
#include "airfl/numkit.hpp"
#include "airfl/tasks/objective.hpp"

namespace airfl {

struct LinearDevice {
  Matrix A;           // D_n x d
  ParameterVector b;  // D_n
};

class LinearTask {
 public:
  LinearTask(std::vector<LinearDevice> devices, std::vector<double> weights, ParameterVector x0, double noise_var)
      : devices_(std::move(devices)), weights_(std::move(weights)), x0_(std::move(x0)), noise_var_(noise_var) {
    if (devices_.empty()) throw ParameterError("LinearTask: no devices");
    if (weights_.size() != devices_.size()) throw ShapeError("LinearTask: one weight per device required");
    validate_weights(weights_);
    dim_ = devices_.front().A.cols();
    if (dim_ == 0) throw ParameterError("LinearTask: dimension must be >= 1");
    for (const auto& dev : devices_) {
      if (dev.A.rows() == 0) throw ParameterError("LinearTask: every device needs D_n >= 1");
      if (dev.A.cols() != dim_ || dev.b.dim() != dev.A.rows()) throw ShapeError("LinearTask: inconsistent shapes");
    }
    if (!x0_.empty() && x0_.dim() != dim_) throw ShapeError("LinearTask: ground truth dimension mismatch");
  }

  /// Weights proportional to device sizes, p_n = D_n / D.
  static std::vector<double> size_weights(const std::vector<LinearDevice>& devices) {
    double total = 0.0;
    for (const auto& d : devices) total += static_cast<double>(d.A.rows());
    std::vector<double> p;
    p.reserve(devices.size());
    for (const auto& d : devices) p.push_back(static_cast<double>(d.A.rows()) / total);
    return p;
  }

  std::size_t num_devices() const noexcept { return devices_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  double weight(std::size_t n) const { return weights_.at(n); }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::size_t device_size(std::size_t n) const { return devices_.at(n).A.rows(); }
  const LinearDevice& device(std::size_t n) const { return devices_.at(n); }
  const ParameterVector& ground_truth() const noexcept { return x0_; }
  double noise_var() const noexcept { return noise_var_; }

  double sample_loss(std::size_t n, std::size_t i, const ParameterVector& theta) const {
    const double r = residual(n, i, theta);
    return 0.5 * r * r;
  }

  void add_sample_gradient(std::size_t n, std::size_t i, const ParameterVector& theta, ParameterVector& grad,
                           double w) const {
    const double r = w * residual(n, i, theta);
    const double* a = devices_[n].A.row(i);
    for (std::size_t j = 0; j < dim_; ++j) grad[j] += r * a[j];
  }

 private:
  double residual(std::size_t n, std::size_t i, const ParameterVector& theta) const {
    const double* a = devices_[n].A.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) s += a[j] * theta[j];
    return s - devices_[n].b[i];
  }

  std::vector<LinearDevice> devices_;
  std::vector<double> weights_;
  ParameterVector x0_;
  double noise_var_;
  std::size_t dim_ = 0;
};

struct DeviceSizeSpec {
  std::size_t min = 1;
  std::size_t max = 1;
  std::size_t mean = 1;
};

/// Device sizes in [min, max] whose mean is exactly `mean`.
///
/// Sizes are drawn uniformly. Because the uniform mean (min+max)/2 generally
/// differs from the requested mean, the deviations are contracted toward the
/// nearer end of the interval until the sample mean matches; rounding residue
/// is then absorbed by the last device. If that shift leaves the interval the
/// whole draw is repeated.
inline std::vector<std::size_t> draw_device_sizes(std::size_t n_devices, const DeviceSizeSpec& spec,
                                                  SeededStream& stream) {
  if (n_devices == 0) throw ParameterError("draw_device_sizes: n_devices must be >= 1");
  if (spec.min < 1 || spec.min > spec.mean || spec.mean > spec.max) {
    throw ParameterError("infeasible device size triple (min=" + std::to_string(spec.min) +
                         ", max=" + std::to_string(spec.max) + ", mean=" + std::to_string(spec.mean) + ")");
  }
  const double lo = static_cast<double>(spec.min);
  const double hi = static_cast<double>(spec.max);
  const double target = static_cast<double>(spec.mean);
  const long long total = static_cast<long long>(n_devices * spec.mean);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<double> raw(n_devices);
    for (auto& r : raw) r = lo + (hi - lo + 1.0) * stream.uniform();
    for (auto& r : raw) r = std::min(r, hi);
    const double avg = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(n_devices);
    if (avg > target && avg > lo) {
      const double s = (target - lo) / (avg - lo);
      for (auto& r : raw) r = lo + s * (r - lo);
    } else if (avg < target && avg < hi) {
      const double s = (hi - target) / (hi - avg);
      for (auto& r : raw) r = hi - s * (hi - r);
    }
    std::vector<std::size_t> sizes(n_devices);
    long long sum = 0;
    for (std::size_t n = 0; n + 1 < n_devices; ++n) {
      sizes[n] = static_cast<std::size_t>(std::llround(raw[n]));
      sum += static_cast<long long>(sizes[n]);
    }
    const long long last = total - sum;
    if (last < static_cast<long long>(spec.min) || last > static_cast<long long>(spec.max)) continue;
    sizes.back() = static_cast<std::size_t>(last);
    return sizes;
  }
  throw ParameterError("could not draw device sizes matching the requested mean");
}

/// Synthetic federated least-squares task: standard normal design and ground
/// truth, additive N(0, noise_var) sample noise, p_n = D_n / D.
inline LinearTask generate_linear_task(std::size_t n_devices, std::size_t dim, const DeviceSizeSpec& sizes,
                                       double noise_var, const SeededStream& stream) {
  if (dim < 1) throw ParameterError("generate_linear_task: dim must be >= 1");
  if (!(noise_var >= 0.0)) throw ParameterError("generate_linear_task: noise variance must be >= 0");
  SeededStream size_stream = stream.child("sizes");
  const auto device_sizes = draw_device_sizes(n_devices, sizes, size_stream);
  SeededStream x0_stream = stream.child("ground_truth");
  ParameterVector x0 = gaussian_vector(x0_stream, dim, 1.0);
  std::vector<LinearDevice> devices;
  devices.reserve(n_devices);
  for (std::size_t n = 0; n < n_devices; ++n) {
    SeededStream dev_stream = stream.child("device").child(n);
    LinearDevice dev{Matrix(device_sizes[n], dim), ParameterVector(device_sizes[n])};
    for (std::size_t i = 0; i < device_sizes[n]; ++i) {
      double* row = dev.A.row(i);
      for (std::size_t j = 0; j < dim; ++j) row[j] = dev_stream.normal();
    }
    SeededStream noise_stream = stream.child("sample_noise").child(n);
    const ParameterVector v = gaussian_vector(noise_stream, device_sizes[n], noise_var);
    dev.b = dev.A.multiply(x0);
    dev.b += v;
    devices.push_back(std::move(dev));
  }
  auto weights = LinearTask::size_weights(devices);
  return LinearTask(std::move(devices), std::move(weights), std::move(x0), noise_var);
}

/// Pooled weighted Gram matrix Σ_n (p_n/D_n) A_n^T A_n, i.e. the Hessian of F.
inline Matrix pooled_gram(const LinearTask& task) {
  Matrix g(task.dim(), task.dim());
  for (std::size_t n = 0; n < task.num_devices(); ++n) {
    task.device(n).A.accumulate_gram(task.weight(n) / static_cast<double>(task.device_size(n)), g);
  }
  return g;
}

struct LinearOptimum {
  ParameterVector theta;
  double loss = 0.0;
  double grad_norm = 0.0;
};

inline LinearOptimum closed_form_optimum(const LinearTask& task) {
  const Matrix gram = pooled_gram(task);
  ParameterVector rhs(task.dim());
  for (std::size_t n = 0; n < task.num_devices(); ++n) {
    rhs.axpy(task.weight(n) / static_cast<double>(task.device_size(n)),
             task.device(n).A.multiply_transposed(task.device(n).b));
  }
  const Cholesky chol = [&] {
    try {
      return Cholesky(gram);
    } catch (const DegenerateError&) {
      throw DegenerateError("pooled Gram matrix is singular; the least-squares optimum is not unique");
    }
  }();
  ParameterVector theta = chol.solve(rhs);
  // Two rounds of iterative refinement against the exact gradient.
  for (int k = 0; k < 2; ++k) {
    const ParameterVector g = global_gradient(task, theta);
    theta -= chol.solve(g);
  }
  LinearOptimum out;
  out.loss = global_loss(task, theta);
  out.grad_norm = global_gradient(task, theta).norm();
  out.theta = std::move(theta);
  return out;
}

struct ConvexityConstants {
  double mu = 0.0;
  double L = 0.0;
};

/// μ from the pooled objective, L from the worst device.
inline ConvexityConstants convexity_constants(const LinearTask& task, PowerIterationOptions opts = {}) {
  ConvexityConstants c;
  for (std::size_t n = 0; n < task.num_devices(); ++n) {
    Matrix g(task.dim(), task.dim());
    task.device(n).A.accumulate_gram(1.0 / static_cast<double>(task.device_size(n)), g);
    c.L = std::max(c.L, largest_eigenvalue(g, opts));
  }
  try {
    c.mu = smallest_eigenvalue_spd(pooled_gram(task), opts);
  } catch (const DegenerateError&) {
    throw DegenerateError("pooled Gram matrix is singular; the task is not strongly convex");
  }
  return c;
}

}  // namespace airfl

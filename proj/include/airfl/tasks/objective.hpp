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

#pragma once

#include <concepts>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "airfl/errors.hpp"
#include "airfl/numkit.hpp"

namespace airfl {

/// A federated objective F(θ) = Σ_n p_n F_n(θ) where each local loss is an
/// average of per-sample losses over the device's D_n samples.
///
/// Implementations only provide per-sample loss and gradient; device, global
/// and minibatch quantities are derived generically below.
template <typename T>
concept FederatedTask = requires(const T& task, std::size_t n, std::size_t i,
                                 const ParameterVector& theta, ParameterVector& grad, double w) {
  { task.num_devices() } -> std::convertible_to<std::size_t>;
  { task.dim() } -> std::convertible_to<std::size_t>;
  { task.weight(n) } -> std::convertible_to<double>;
  { task.device_size(n) } -> std::convertible_to<std::size_t>;
  { task.sample_loss(n, i, theta) } -> std::convertible_to<double>;
  task.add_sample_gradient(n, i, theta, grad, w);
};

/// Tasks that can also score a held-out split.
template <typename T>
concept ClassificationTaskLike = FederatedTask<T> && requires(const T& task, const ParameterVector& theta) {
  { task.test_accuracy(theta) } -> std::convertible_to<double>;
};

namespace detail {

template <FederatedTask Task>
void check_theta(const Task& task, const ParameterVector& theta) {
  if (theta.dim() != task.dim()) {
    throw ShapeError("model dimension " + std::to_string(theta.dim()) + " does not match task dimension " +
                     std::to_string(task.dim()));
  }
}

template <FederatedTask Task>
void check_device(const Task& task, std::size_t device) {
  if (device >= task.num_devices()) {
    throw ParameterError("device index " + std::to_string(device) + " out of range");
  }
}

}  // namespace detail

template <FederatedTask Task>
double device_loss(const Task& task, std::size_t device, const ParameterVector& theta) {
  detail::check_theta(task, theta);
  detail::check_device(task, device);
  const std::size_t size = task.device_size(device);
  double acc = 0.0;
  for (std::size_t i = 0; i < size; ++i) acc += task.sample_loss(device, i, theta);
  return acc / static_cast<double>(size);
}

template <FederatedTask Task>
ParameterVector device_gradient(const Task& task, std::size_t device, const ParameterVector& theta) {
  detail::check_theta(task, theta);
  detail::check_device(task, device);
  const std::size_t size = task.device_size(device);
  ParameterVector grad(task.dim());
  const double w = 1.0 / static_cast<double>(size);
  for (std::size_t i = 0; i < size; ++i) task.add_sample_gradient(device, i, theta, grad, w);
  return grad;
}

template <FederatedTask Task>
double global_loss(const Task& task, const ParameterVector& theta) {
  double acc = 0.0;
  for (std::size_t n = 0; n < task.num_devices(); ++n) acc += task.weight(n) * device_loss(task, n, theta);
  return acc;
}

template <FederatedTask Task>
ParameterVector global_gradient(const Task& task, const ParameterVector& theta) {
  ParameterVector grad(task.dim());
  for (std::size_t n = 0; n < task.num_devices(); ++n) grad.axpy(task.weight(n), device_gradient(task, n, theta));
  return grad;
}

/// Indices of a uniformly random size-`batch_size` subset of {0..size-1}
/// (partial Fisher-Yates; order is the draw order).
inline std::vector<std::size_t> sample_without_replacement(std::size_t size, std::size_t batch_size,
                                                           SeededStream& stream) {
  if (batch_size < 1 || batch_size > size) {
    throw ParameterError("batch size " + std::to_string(batch_size) + " outside [1, " + std::to_string(size) + "]");
  }
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (batch_size == size) return idx;
  for (std::size_t k = 0; k < batch_size; ++k) {
    const std::size_t j = k + stream.uniform_index(size - k);
    std::swap(idx[k], idx[j]);
  }
  idx.resize(batch_size);
  return idx;
}

/// Average of sample gradients over a batch drawn without replacement.
/// A full batch consumes no randomness and returns the exact local gradient.
template <FederatedTask Task>
ParameterVector minibatch_gradient(const Task& task, std::size_t device, const ParameterVector& theta,
                                   std::size_t batch_size, SeededStream& stream) {
  detail::check_theta(task, theta);
  detail::check_device(task, device);
  const std::size_t size = task.device_size(device);
  if (batch_size < 1 || batch_size > size) {
    throw ParameterError("batch size " + std::to_string(batch_size) + " outside [1, D_n=" + std::to_string(size) +
                         "] for device " + std::to_string(device));
  }
  if (batch_size == size) return device_gradient(task, device, theta);
  const auto batch = sample_without_replacement(size, batch_size, stream);
  ParameterVector grad(task.dim());
  const double w = 1.0 / static_cast<double>(batch_size);
  for (std::size_t i : batch) task.add_sample_gradient(device, i, theta, grad, w);
  return grad;
}

/// Weights must be positive and sum to one.
inline void validate_weights(const std::vector<double>& p) {
  if (p.empty()) throw ParameterError("task has no devices");
  double sum = 0.0;
  for (double w : p) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ParameterError("aggregation weights must be positive and finite");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ParameterError("aggregation weights must sum to 1");
}

}  // namespace airfl

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

// Small deterministic tasks shared by the unit tests.

#pragma once

#include <memory>
#include <numeric>
#include <vector>

#include "airfl/airfl.hpp"

namespace airfl::testing {

inline LinearTask small_linear_task(std::uint64_t seed = 1, std::size_t devices = 4, std::size_t dim = 6,
                                    double noise_var = 0.1) {
  return generate_linear_task(devices, dim, DeviceSizeSpec{20, 60, 40}, noise_var, SeededStream(seed, "linear"));
}

inline std::shared_ptr<const Dataset> small_dataset(std::uint64_t seed, std::size_t samples, std::size_t input_dim,
                                                    std::size_t classes) {
  return std::make_shared<Dataset>(generate_teacher_dataset(samples, input_dim, 6, SeededStream(seed, "teacher"),
                                                            classes));
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

inline MlpTask small_mlp_task(std::uint64_t seed = 2, std::size_t devices = 3, std::size_t classes = 3) {
  auto data = small_dataset(seed, 90, 5, classes);
  SeededStream ps(seed, "partition");
  auto part = partition_iid(all_indices(data->size()), devices, ps);
  return MlpTask(MlpModel(5, 4, classes), data, std::move(part));
}

inline LogisticTask small_logistic_task(std::uint64_t seed = 3, std::size_t devices = 3) {
  auto data = small_dataset(seed, 90, 5, 2);
  SeededStream ps(seed, "partition");
  auto part = partition_iid(all_indices(data->size()), devices, ps);
  return LogisticTask(LogisticModel(5), data, std::move(part));
}

inline ParameterVector random_point(std::size_t dim, SeededStream& s, double scale = 1.0) {
  return gaussian_vector(s, dim, scale * scale);
}

/// Central finite differences of the global loss with step 1e-6 (1 + ||θ||).
template <FederatedTask Task>
ParameterVector finite_difference_gradient(const Task& task, const ParameterVector& theta) {
  const double h = 1e-6 * (1.0 + theta.norm());
  ParameterVector g(theta.dim());
  ParameterVector x = theta;
  for (std::size_t i = 0; i < theta.dim(); ++i) {
    x[i] = theta[i] + h;
    const double up = global_loss(task, x);
    x[i] = theta[i] - h;
    const double down = global_loss(task, x);
    x[i] = theta[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const ParameterVector& a, const ParameterVector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace airfl::testing

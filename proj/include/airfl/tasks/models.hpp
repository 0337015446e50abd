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

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "airfl/errors.hpp"
#include "airfl/numkit.hpp"
#include "airfl/tasks/dataset.hpp"
#include "airfl/tasks/objective.hpp"

namespace airfl {

/// Per-sample model interface used by ClassificationTask.
template <typename M>
concept SampleModel = requires(const M& m, const ParameterVector& theta, const double* x, int y, ParameterVector& g,
                               double w) {
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.input_dim() } -> std::convertible_to<std::size_t>;
  { m.loss(theta, x, y) } -> std::convertible_to<double>;
  m.add_gradient(theta, x, y, g, w);
  { m.predict(theta, x) } -> std::convertible_to<int>;
};

/// Binary logistic regression, log(1 + exp(-y a^T θ)) with y in {-1, +1}.
/// Dataset labels 0/1 map to -1/+1. The last coordinate of θ is a bias.
class LogisticModel {
 public:
  explicit LogisticModel(std::size_t input_dim) : input_dim_(input_dim) {
    if (input_dim == 0) throw ParameterError("LogisticModel: input dimension must be >= 1");
  }

  std::size_t dim() const noexcept { return input_dim_ + 1; }
  std::size_t input_dim() const noexcept { return input_dim_; }

  double loss(const ParameterVector& theta, const double* x, int label) const {
    const double m = sign(label) * margin(theta, x);
    // log(1 + e^{-m}) without overflow
    return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
  }

  void add_gradient(const ParameterVector& theta, const double* x, int label, ParameterVector& g, double w) const {
    const double y = sign(label);
    const double m = y * margin(theta, x);
    // d/dm log(1+e^{-m}) = -1/(1+e^{m})
    const double s = m > 0 ? std::exp(-m) / (1.0 + std::exp(-m)) : 1.0 / (1.0 + std::exp(m));
    const double c = -w * y * s;
    for (std::size_t j = 0; j < input_dim_; ++j) g[j] += c * x[j];
    g[input_dim_] += c;
  }

  int predict(const ParameterVector& theta, const double* x) const { return margin(theta, x) >= 0 ? 1 : 0; }

  ParameterVector initial_parameters(SeededStream&) const { return ParameterVector(dim()); }

 private:
  static double sign(int label) { return label > 0 ? 1.0 : -1.0; }

  double margin(const ParameterVector& theta, const double* x) const {
    double s = theta[input_dim_];
    for (std::size_t j = 0; j < input_dim_; ++j) s += theta[j] * x[j];
    return s;
  }

  std::size_t input_dim_;
};

/// One-hidden-layer perceptron with tanh activation and softmax cross-entropy.
///
/// Flattened parameter layout: W1 (hidden x input, row-major), b1, W2
/// (output x hidden, row-major), b2.
class MlpModel {
 public:
  MlpModel(std::size_t input, std::size_t hidden, std::size_t output)
      : in_(input), hid_(hidden), out_(output) {
    if (input == 0 || hidden == 0 || output < 2) throw ParameterError("MlpModel: invalid layer sizes");
  }

  std::size_t dim() const noexcept { return hid_ * in_ + hid_ + out_ * hid_ + out_; }
  std::size_t input_dim() const noexcept { return in_; }
  std::size_t hidden_dim() const noexcept { return hid_; }
  std::size_t output_dim() const noexcept { return out_; }

  /// Class scores (logits) for one sample.
  std::vector<double> scores(const ParameterVector& theta, const double* x) const {
    std::vector<double> h(hid_), s(out_);
    forward(theta, x, h, s);
    return s;
  }

  double loss(const ParameterVector& theta, const double* x, int label) const {
    std::vector<double> h(hid_), s(out_);
    forward(theta, x, h, s);
    return log_sum_exp(s) - s[static_cast<std::size_t>(label)];
  }

  void add_gradient(const ParameterVector& theta, const double* x, int label, ParameterVector& g, double w) const {
    std::vector<double> h(hid_), s(out_);
    forward(theta, x, h, s);
    const double lse = log_sum_exp(s);
    std::vector<double> ds(out_);
    for (std::size_t k = 0; k < out_; ++k) ds[k] = w * std::exp(s[k] - lse);
    ds[static_cast<std::size_t>(label)] -= w;

    const double* W2 = theta.data() + off_w2();
    double* gW1 = g.data() + off_w1();
    double* gb1 = g.data() + off_b1();
    double* gW2 = g.data() + off_w2();
    double* gb2 = g.data() + off_b2();
    std::vector<double> da(hid_, 0.0);
    for (std::size_t k = 0; k < out_; ++k) {
      gb2[k] += ds[k];
      const double* w2k = W2 + k * hid_;
      double* gw2k = gW2 + k * hid_;
      for (std::size_t j = 0; j < hid_; ++j) {
        gw2k[j] += ds[k] * h[j];
        da[j] += w2k[j] * ds[k];
      }
    }
    for (std::size_t j = 0; j < hid_; ++j) {
      const double a = da[j] * (1.0 - h[j] * h[j]);
      gb1[j] += a;
      if (a == 0.0) continue;
      double* gw1j = gW1 + j * in_;
      for (std::size_t i = 0; i < in_; ++i) gw1j[i] += a * x[i];
    }
  }

  int predict(const ParameterVector& theta, const double* x) const {
    const auto s = scores(theta, x);
    return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
  }

  /// Glorot-uniform weights, zero biases.
  ParameterVector initial_parameters(SeededStream& stream) const {
    ParameterVector theta(dim());
    const double r1 = std::sqrt(6.0 / static_cast<double>(in_ + hid_));
    const double r2 = std::sqrt(6.0 / static_cast<double>(hid_ + out_));
    for (std::size_t k = 0; k < hid_ * in_; ++k) theta[off_w1() + k] = r1 * (2.0 * stream.uniform() - 1.0);
    for (std::size_t k = 0; k < out_ * hid_; ++k) theta[off_w2() + k] = r2 * (2.0 * stream.uniform() - 1.0);
    return theta;
  }

 private:
  std::size_t off_w1() const noexcept { return 0; }
  std::size_t off_b1() const noexcept { return hid_ * in_; }
  std::size_t off_w2() const noexcept { return hid_ * in_ + hid_; }
  std::size_t off_b2() const noexcept { return hid_ * in_ + hid_ + out_ * hid_; }

  void forward(const ParameterVector& theta, const double* x, std::vector<double>& h, std::vector<double>& s) const {
    const double* W1 = theta.data() + off_w1();
    const double* b1 = theta.data() + off_b1();
    const double* W2 = theta.data() + off_w2();
    const double* b2 = theta.data() + off_b2();
    for (std::size_t j = 0; j < hid_; ++j) {
      const double* row = W1 + j * in_;
      double a = b1[j];
      for (std::size_t i = 0; i < in_; ++i) a += row[i] * x[i];
      h[j] = std::tanh(a);
    }
    for (std::size_t k = 0; k < out_; ++k) {
      const double* row = W2 + k * hid_;
      double a = b2[k];
      for (std::size_t j = 0; j < hid_; ++j) a += row[j] * h[j];
      s[k] = a;
    }
  }

  static double log_sum_exp(const std::vector<double>& s) {
    const double m = *std::max_element(s.begin(), s.end());
    double acc = 0.0;
    for (double v : s) acc += std::exp(v - m);
    return m + std::log(acc);
  }

  std::size_t in_, hid_, out_;
};

/// Federated classification over a shared dataset split across devices.
/// Device weights are p_n = D_n / D.
template <SampleModel Model>
class ClassificationTask {
 public:
  ClassificationTask(Model model, std::shared_ptr<const Dataset> data, DataPartition partition,
                     std::vector<std::size_t> test_indices = {})
      : model_(std::move(model)),
        data_(std::move(data)),
        partition_(std::move(partition)),
        test_(std::move(test_indices)) {
    if (!data_) throw ParameterError("ClassificationTask: null dataset");
    if (data_->feature_dim() != model_.input_dim()) throw ShapeError("ClassificationTask: feature width mismatch");
    if (partition_.num_devices() == 0) throw ParameterError("ClassificationTask: no devices");
    double total = 0.0;
    for (const auto& d : partition_.device_indices) {
      if (d.empty()) throw ParameterError("ClassificationTask: every device needs D_n >= 1");
      total += static_cast<double>(d.size());
    }
    for (const auto& d : partition_.device_indices) weights_.push_back(static_cast<double>(d.size()) / total);
    validate_weights(weights_);
  }

  std::size_t num_devices() const noexcept { return partition_.num_devices(); }
  std::size_t dim() const noexcept { return model_.dim(); }
  double weight(std::size_t n) const { return weights_.at(n); }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::size_t device_size(std::size_t n) const { return partition_.device_indices.at(n).size(); }
  const Model& model() const noexcept { return model_; }
  const Dataset& data() const noexcept { return *data_; }
  const DataPartition& partition() const noexcept { return partition_; }
  const std::vector<std::size_t>& test_indices() const noexcept { return test_; }

  double sample_loss(std::size_t n, std::size_t i, const ParameterVector& theta) const {
    const std::size_t s = partition_.device_indices[n][i];
    return model_.loss(theta, data_->features(s), data_->label(s));
  }

  void add_sample_gradient(std::size_t n, std::size_t i, const ParameterVector& theta, ParameterVector& grad,
                           double w) const {
    const std::size_t s = partition_.device_indices[n][i];
    model_.add_gradient(theta, data_->features(s), data_->label(s), grad, w);
  }

  /// Fraction of held-out samples classified correctly (NaN without a test split).
  double test_accuracy(const ParameterVector& theta) const {
    if (test_.empty()) return std::nan("");
    std::size_t correct = 0;
    for (std::size_t s : test_) {
      if (model_.predict(theta, data_->features(s)) == data_->label(s)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test_.size());
  }

  ParameterVector initial_parameters(SeededStream& stream) const { return model_.initial_parameters(stream); }

 private:
  Model model_;
  std::shared_ptr<const Dataset> data_;
  DataPartition partition_;
  std::vector<std::size_t> test_;
  std::vector<double> weights_;
};

using MlpTask = ClassificationTask<MlpModel>;
using LogisticTask = ClassificationTask<LogisticModel>;

/// Synthetic classification: Gaussian features labelled by a random teacher
/// network. With two classes the label is the sign of the teacher's score
/// difference relative to its median, which balances the classes; with more
/// classes it is the teacher's argmax.
inline Dataset generate_teacher_dataset(std::size_t n_samples, std::size_t input_dim, std::size_t teacher_hidden,
                                        const SeededStream& stream, std::size_t classes = 2) {
  if (n_samples < 2) throw ParameterError("generate_teacher_dataset: need at least two samples");
  if (classes < 2) throw ParameterError("generate_teacher_dataset: need at least two classes");
  const MlpModel teacher(input_dim, teacher_hidden, classes);
  SeededStream wstream = stream.child("teacher");
  const ParameterVector tw = teacher.initial_parameters(wstream);
  SeededStream xstream = stream.child("features");
  std::vector<double> features(n_samples * input_dim);
  for (auto& f : features) f = xstream.normal();
  std::vector<int> labels(n_samples);
  if (classes == 2) {
    std::vector<double> score(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
      const auto s = teacher.scores(tw, features.data() + i * input_dim);
      score[i] = s[1] - s[0];
    }
    std::vector<double> sorted = score;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n_samples / 2), sorted.end());
    const double median = sorted[n_samples / 2];
    for (std::size_t i = 0; i < n_samples; ++i) labels[i] = score[i] >= median ? 1 : 0;
  } else {
    for (std::size_t i = 0; i < n_samples; ++i) labels[i] = teacher.predict(tw, features.data() + i * input_dim);
  }
  return Dataset(input_dim, std::move(features), std::move(labels));
}

}  // namespace airfl

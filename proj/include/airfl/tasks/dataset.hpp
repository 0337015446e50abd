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
#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "airfl/errors.hpp"
#include "airfl/numkit.hpp"

namespace airfl {

/// Labelled samples with a fixed feature width, stored row-major.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t feature_dim, std::vector<double> features, std::vector<int> labels)
      : feature_dim_(feature_dim), features_(std::move(features)), labels_(std::move(labels)) {
    if (feature_dim_ == 0) throw ParameterError("Dataset: feature dimension must be >= 1");
    if (features_.size() != feature_dim_ * labels_.size()) {
      throw ShapeError("Dataset: feature buffer does not match sample count");
    }
  }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  const double* features(std::size_t i) const noexcept { return features_.data() + i * feature_dim_; }
  int label(std::size_t i) const noexcept { return labels_[i]; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  int num_classes() const {
    int m = -1;
    for (int l : labels_) m = std::max(m, l);
    return m + 1;
  }

 private:
  std::size_t feature_dim_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
};

/// Per-device lists of dataset indices.
struct DataPartition {
  std::vector<std::vector<std::size_t>> device_indices;
  std::size_t shards_per_device = 0;  // 0 for IID partitions

  std::size_t num_devices() const noexcept { return device_indices.size(); }

  std::size_t total() const noexcept {
    std::size_t s = 0;
    for (const auto& d : device_indices) s += d.size();
    return s;
  }
};

/// Disjoint random train/test split; `test_fraction` of samples held out.
struct TrainTestSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline TrainTestSplit split_train_test(std::size_t n_samples, double test_fraction, SeededStream& stream) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ParameterError("test fraction must lie in [0, 1)");
  std::vector<std::size_t> idx(n_samples);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t k = n_samples; k > 1; --k) std::swap(idx[k - 1], idx[stream.uniform_index(k)]);
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(n_samples));
  TrainTestSplit s;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

/// Shuffle `subset` and deal it into n_devices near-equal parts.
inline DataPartition partition_iid(const std::vector<std::size_t>& subset, std::size_t n_devices,
                                   SeededStream& stream) {
  if (n_devices == 0) throw ParameterError("partition_iid: n_devices must be >= 1");
  if (subset.size() < n_devices) throw ParameterError("partition_iid: fewer samples than devices");
  std::vector<std::size_t> idx = subset;
  for (std::size_t k = idx.size(); k > 1; --k) std::swap(idx[k - 1], idx[stream.uniform_index(k)]);
  DataPartition part;
  part.device_indices.resize(n_devices);
  const std::size_t base = idx.size() / n_devices;
  const std::size_t extra = idx.size() % n_devices;
  std::size_t pos = 0;
  for (std::size_t n = 0; n < n_devices; ++n) {
    const std::size_t take = base + (n < extra ? 1 : 0);
    part.device_indices[n].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                                  idx.begin() + static_cast<std::ptrdiff_t>(pos + take));
    std::sort(part.device_indices[n].begin(), part.device_indices[n].end());
    pos += take;
  }
  return part;
}

/// Non-IID label-shard partition.
///
/// The subset is sorted by label and cut into n_devices * shards_per_device
/// shards. Shards never straddle a label boundary: each label contributes the
/// same number of shards, so the total shard count must be a multiple of the
/// number of distinct labels. Each device then receives shards_per_device
/// shards chosen at random without replacement, so it sees at most
/// shards_per_device distinct labels.
inline DataPartition partition_label_shards(const Dataset& dataset, const std::vector<std::size_t>& subset,
                                            std::size_t n_devices, std::size_t shards_per_device,
                                            SeededStream& stream) {
  if (n_devices == 0 || shards_per_device == 0) {
    throw ParameterError("partition_label_shards: n_devices and shards_per_device must be >= 1");
  }
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i : subset) {
    if (i >= dataset.size()) throw ParameterError("partition_label_shards: index out of range");
    by_label[dataset.label(i)].push_back(i);
  }
  const std::size_t n_labels = by_label.size();
  const std::size_t n_shards = n_devices * shards_per_device;
  if (n_labels == 0 || n_shards % n_labels != 0) {
    throw ParameterError("shard arithmetic is indivisible: " + std::to_string(n_shards) + " shards over " +
                         std::to_string(n_labels) + " labels");
  }
  const std::size_t shards_per_label = n_shards / n_labels;
  std::vector<std::vector<std::size_t>> shards;
  shards.reserve(n_shards);
  for (auto& [label, members] : by_label) {
    if (members.size() < shards_per_label) {
      throw ParameterError("label " + std::to_string(label) + " has fewer samples than shards");
    }
    std::sort(members.begin(), members.end());
    const std::size_t base = members.size() / shards_per_label;
    const std::size_t extra = members.size() % shards_per_label;
    std::size_t pos = 0;
    for (std::size_t s = 0; s < shards_per_label; ++s) {
      const std::size_t take = base + (s < extra ? 1 : 0);
      shards.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(pos),
                          members.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
    }
  }
  std::vector<std::size_t> order(n_shards);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t k = n_shards; k > 1; --k) std::swap(order[k - 1], order[stream.uniform_index(k)]);
  DataPartition part;
  part.shards_per_device = shards_per_device;
  part.device_indices.resize(n_devices);
  for (std::size_t n = 0; n < n_devices; ++n) {
    auto& dst = part.device_indices[n];
    for (std::size_t s = 0; s < shards_per_device; ++s) {
      const auto& shard = shards[order[n * shards_per_device + s]];
      dst.insert(dst.end(), shard.begin(), shard.end());
    }
    std::sort(dst.begin(), dst.end());
  }
  return part;
}

inline std::set<int> device_labels(const Dataset& dataset, const DataPartition& part, std::size_t device) {
  std::set<int> out;
  for (std::size_t i : part.device_indices.at(device)) out.insert(dataset.label(i));
  return out;
}

}  // namespace airfl

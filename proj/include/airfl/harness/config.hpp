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

// Experiment configuration. The on-disk format is JSON with nested sections;
// every unknown key is an error and validation reports all failures at once.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "airfl/channel.hpp"
#include "airfl/errors.hpp"
#include "airfl/fedalgos.hpp"
#include "airfl/lr.hpp"

namespace airfl::harness {

enum class TaskType { linear, logistic, mlp };
enum class DataSource { teacher, idx };
enum class PartitionKind { iid, label_shards };

struct TaskSpec {
  TaskType type = TaskType::linear;
  std::size_t devices = 10;
  // linear regression
  std::size_t dim = 10;
  std::size_t size_min = 50, size_max = 150, size_mean = 100;
  double noise_var = 0.1;
  // classification
  DataSource source = DataSource::teacher;
  std::size_t samples = 2000;
  std::size_t input_dim = 20;
  std::size_t hidden = 16;
  std::size_t teacher_hidden = 8;
  std::size_t classes = 2;  // synthetic teacher data only
  double test_fraction = 0.1;
  std::string idx_images, idx_labels;
};

struct PartitionSpec {
  PartitionKind kind = PartitionKind::iid;
  std::size_t shards_per_device = 2;
};

struct BoundBlock {
  std::string theorem = "t1";  // t1 (model-difference runs) or t3 (gradient runs)
  std::size_t probe_points = 200;
  double probe_radius_min = 1e-3;  // relative to ||θ0 − θ*||
  double probe_radius_max = 1.5;
  std::size_t variance_points = 20;  // trajectory points per run for σ_n²
  double L_scale = 1.0;              // < 1 deliberately falsifies smoothness
};

struct ExperimentConfig {
  TaskSpec task;
  PartitionSpec partition;
  AlgoConfig algo;  // initial_model and channel.dim are filled when the task is built
  double snr_db = 10.0;
  std::size_t repetitions = 1;
  std::uint64_t base_seed = 1;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::uint64_t> channel_seed;
  std::size_t workers = 1;
  std::string output_dir = "out";
  bool record_epsilon = false;
  std::optional<BoundBlock> bounds;
  nlohmann::json source;  // parsed document, echoed in the manifest

  std::uint64_t effective_data_seed() const { return data_seed.value_or(base_seed); }
  std::uint64_t effective_channel_seed() const { return channel_seed.value_or(base_seed); }
};

namespace detail {

/// Walks a JSON object, recording problems instead of throwing so that a
/// single pass reports every bad field.
class Reader {
 public:
  Reader(const nlohmann::json& obj, std::string path, std::vector<std::string>& problems)
      : obj_(obj), path_(std::move(path)), problems_(problems) {
    if (!obj_.is_object()) problems_.push_back((path_.empty() ? std::string("<root>") : path_) + ": must be an object");
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.push_back(key);
    if (!obj_.is_object() || !obj_.contains(key)) return fallback;
    const auto& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || v.get<long long>() < 0) throw std::invalid_argument("x");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw std::invalid_argument("x");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("x");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("x");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      problem(key, std::string("has the wrong type (expected ") + type_name<T>() + ")");
      return fallback;
    }
  }

  bool has(const std::string& key) const { return obj_.is_object() && obj_.contains(key); }

  Reader child(const std::string& key) {
    seen_.push_back(key);
    static const nlohmann::json empty = nlohmann::json::object();
    if (!has(key)) return Reader(empty, join(key), problems_);
    return Reader(obj_.at(key), join(key), problems_);
  }

  const nlohmann::json& raw(const std::string& key) {
    seen_.push_back(key);
    return obj_.at(key);
  }

  void problem(const std::string& key, const std::string& what) { problems_.push_back(join(key) + ": " + what); }

  void finish() {
    if (!obj_.is_object()) return;
    for (const auto& [k, v] : obj_.items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) problems_.push_back(join(k) + ": unknown key");
    }
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  template <typename T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) return "non-negative integer";
    if constexpr (std::is_same_v<T, double>) return "number";
    if constexpr (std::is_same_v<T, bool>) return "boolean";
    if constexpr (std::is_same_v<T, std::string>) return "string";
    return "value";
  }

  const nlohmann::json& obj_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::vector<std::string> seen_;
};

template <typename E>
std::optional<E> parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  return std::nullopt;
}

}  // namespace detail

/// Parses and validates a configuration document. Throws ValidationError
/// listing every failed field.
inline ExperimentConfig parse_config(const nlohmann::json& doc) {
  std::vector<std::string> problems;
  ExperimentConfig cfg;
  cfg.source = doc;
  detail::Reader root(doc, "", problems);

  {
    auto r = root.child("task");
    const auto type = r.get<std::string>("type", "linear");
    if (auto t = detail::parse_enum<TaskType>(
            type, {{"linear", TaskType::linear}, {"logistic", TaskType::logistic}, {"mlp", TaskType::mlp}})) {
      cfg.task.type = *t;
    } else {
      r.problem("type", "must be one of linear, logistic, mlp");
    }
    auto& t = cfg.task;
    t.devices = r.get<std::size_t>("devices", t.devices);
    if (t.devices < 1) r.problem("devices", "must be >= 1");
    t.dim = r.get<std::size_t>("dim", t.dim);
    if (t.dim < 1) r.problem("dim", "must be >= 1");
    {
      auto s = r.child("sizes");
      t.size_min = s.get<std::size_t>("min", t.size_min);
      t.size_max = s.get<std::size_t>("max", t.size_max);
      t.size_mean = s.get<std::size_t>("mean", t.size_mean);
      if (t.size_min < 1 || t.size_min > t.size_mean || t.size_mean > t.size_max) {
        s.problem("mean", "sizes must satisfy 1 <= min <= mean <= max");
      }
      s.finish();
    }
    t.noise_var = r.get<double>("noise_var", t.noise_var);
    if (!(t.noise_var >= 0.0)) r.problem("noise_var", "must be >= 0");
    const auto src = r.get<std::string>("data", "teacher");
    if (auto s = detail::parse_enum<DataSource>(src, {{"teacher", DataSource::teacher}, {"idx", DataSource::idx}})) {
      t.source = *s;
    } else {
      r.problem("data", "must be teacher or idx");
    }
    t.samples = r.get<std::size_t>("samples", t.samples);
    t.input_dim = r.get<std::size_t>("input_dim", t.input_dim);
    t.hidden = r.get<std::size_t>("hidden", t.hidden);
    t.teacher_hidden = r.get<std::size_t>("teacher_hidden", t.teacher_hidden);
    t.classes = r.get<std::size_t>("classes", t.classes);
    if (t.classes < 2) r.problem("classes", "must be >= 2");
    t.test_fraction = r.get<double>("test_fraction", t.test_fraction);
    if (!(t.test_fraction >= 0.0 && t.test_fraction < 1.0)) r.problem("test_fraction", "must lie in [0, 1)");
    t.idx_images = r.get<std::string>("idx_images", "");
    t.idx_labels = r.get<std::string>("idx_labels", "");
    if (t.type != TaskType::linear) {
      if (t.source == DataSource::idx && (t.idx_images.empty() || t.idx_labels.empty())) {
        r.problem("idx_images", "idx data needs idx_images and idx_labels");
      }
      if (t.source == DataSource::teacher && (t.samples < t.devices || t.input_dim < 1)) {
        r.problem("samples", "need at least one sample per device and input_dim >= 1");
      }
      if (t.type == TaskType::mlp && t.hidden < 1) r.problem("hidden", "must be >= 1");
    }
    r.finish();
  }

  {
    auto r = root.child("partition");
    const auto kind = r.get<std::string>("kind", "iid");
    if (auto k = detail::parse_enum<PartitionKind>(
            kind, {{"iid", PartitionKind::iid}, {"label_shards", PartitionKind::label_shards}})) {
      cfg.partition.kind = *k;
    } else {
      r.problem("kind", "must be iid or label_shards");
    }
    cfg.partition.shards_per_device = r.get<std::size_t>("shards_per_device", 2);
    if (cfg.partition.shards_per_device < 1) r.problem("shards_per_device", "must be >= 1");
    r.finish();
  }

  {
    auto r = root.child("algorithm");
    auto& a = cfg.algo;
    const auto variant = r.get<std::string>("variant", "airfedavg_m");
    if (auto v = detail::parse_enum<Variant>(variant, {{"airfedavg_m", Variant::airfedavg_m},
                                                       {"airfedavg_s", Variant::airfedavg_s},
                                                       {"airfedmodel", Variant::airfedmodel},
                                                       {"errorfree_fedavg_m", Variant::errorfree_fedavg_m},
                                                       {"errorfree_fedavg_s", Variant::errorfree_fedavg_s}})) {
      a.variant = *v;
    } else {
      r.problem("variant", "unknown variant '" + variant + "'");
    }
    a.local_epochs = r.get<std::size_t>("local_epochs", 1);
    if (a.local_epochs < 1) r.problem("local_epochs", "must be >= 1");
    a.rounds = r.get<std::size_t>("rounds", 10);
    if (a.rounds < 1) r.problem("rounds", "must be >= 1");
    a.batch_size = r.get<std::size_t>("batch_size", 0);
    {
      auto l = r.child("lr");
      const auto kind = l.get<std::string>("kind", "constant");
      if (auto k = detail::parse_enum<LrKind>(kind, {{"constant", LrKind::constant},
                                                      {"inverse_time", LrKind::inverse_time},
                                                      {"corollary1", LrKind::corollary1},
                                                      {"corollary5", LrKind::corollary5},
                                                      {"sqrt_ratio", LrKind::sqrt_ratio}})) {
        a.lr.kind = *k;
      } else {
        l.problem("kind", "unknown schedule '" + kind + "'");
      }
      a.lr.eta0 = l.get<double>("eta0", 0.1);
      a.lr.decay = l.get<double>("decay", 0.0);
      a.lr.mu = l.get<double>("mu", 0.0);
      a.lr.L = l.get<double>("L", 0.0);
      a.lr.E = a.local_epochs;
      a.lr.N = cfg.task.devices;
      a.lr.T = a.rounds;
      if (l.has("cap")) a.lr_cap = l.get<double>("cap", 0.0);
      // corollary schedules may take μ and L from the task; checked at build time
      const bool needs_curvature = a.lr.kind == LrKind::corollary1 || a.lr.kind == LrKind::corollary5;
      if (!needs_curvature && a.lr.kind != LrKind::sqrt_ratio) {
        try {
          validate(a.lr);
        } catch (const ParameterError& e) {
          l.problem("kind", e.what());
        }
      }
      if (a.lr_cap && !(*a.lr_cap > 0.0)) l.problem("cap", "must be > 0");
      l.finish();
    }
    r.finish();
  }

  {
    auto r = root.child("channel");
    auto& c = cfg.algo.channel;
    const auto fading = r.get<std::string>("fading", "error_free");
    if (auto f = detail::parse_enum<Fading>(fading, {{"error_free", Fading::error_free},
                                                      {"awgn", Fading::awgn},
                                                      {"rayleigh", Fading::rayleigh_block},
                                                      {"rayleigh_block", Fading::rayleigh_block}})) {
      c.fading = *f;
    } else {
      r.problem("fading", "must be error_free, awgn or rayleigh");
    }
    c.transmit_power = r.get<double>("transmit_power", 1.0);
    if (!(c.transmit_power > 0.0)) r.problem("transmit_power", "must be > 0");
    cfg.snr_db = r.get<double>("snr_db", 10.0);
    if (!std::isfinite(cfg.snr_db)) r.problem("snr_db", "must be finite");
    c.noise_var = c.transmit_power / std::pow(10.0, cfg.snr_db / 10.0);
    c.truncation_threshold = r.get<double>("truncation_threshold", 0.0);
    if (!(c.truncation_threshold >= 0.0)) r.problem("truncation_threshold", "must be >= 0");
    {
      auto p = r.child("precoder");
      auto& pc = cfg.algo.precoder;
      const auto kind = p.get<std::string>("kind", "inversion_cotaf");
      if (auto k = detail::parse_enum<PrecoderKind>(kind, {{"inversion_fixed_beta", PrecoderKind::inversion_fixed_beta},
                                                           {"inversion_cotaf", PrecoderKind::inversion_cotaf},
                                                           {"inversion_bg_bound", PrecoderKind::inversion_bg_bound},
                                                           {"phase_only", PrecoderKind::phase_only}})) {
        pc.kind = *k;
      } else {
        p.problem("kind", "unknown precoder '" + kind + "'");
      }
      pc.fixed_beta = p.get<double>("fixed_beta", 0.0);
      if (!(pc.fixed_beta >= 0.0)) p.problem("fixed_beta", "must be >= 0");
      cfg.algo.gradient_bound_sq = p.get<double>("g_sq", 0.0);
      if (!(cfg.algo.gradient_bound_sq >= 0.0)) p.problem("g_sq", "must be >= 0");
      if (p.has("phase_power_scale")) {
        const auto& arr = p.raw("phase_power_scale");
        if (!arr.is_array()) {
          p.problem("phase_power_scale", "must be an array of numbers");
        } else {
          for (const auto& x : arr) {
            if (!x.is_number() || !(x.get<double>() > 0.0)) {
              p.problem("phase_power_scale", "entries must be positive numbers");
              break;
            }
            pc.phase_power_scale.push_back(x.get<double>());
          }
        }
      }
      p.finish();
    }
    r.finish();
  }

  cfg.repetitions = root.get<std::size_t>("repetitions", 1);
  if (cfg.repetitions < 1) root.problem("repetitions", "must be >= 1");
  cfg.base_seed = root.get<std::uint64_t>("base_seed", 1);
  if (root.has("data_seed")) cfg.data_seed = root.get<std::uint64_t>("data_seed", 0);
  if (root.has("channel_seed")) cfg.channel_seed = root.get<std::uint64_t>("channel_seed", 0);
  cfg.workers = root.get<std::size_t>("workers", 1);
  if (cfg.workers < 1) root.problem("workers", "must be >= 1");
  cfg.output_dir = root.get<std::string>("output_dir", "out");
  if (cfg.output_dir.empty()) root.problem("output_dir", "must not be empty");
  cfg.record_epsilon = root.get<bool>("record_epsilon", false);

  if (root.has("bounds")) {
    auto r = root.child("bounds");
    BoundBlock b;
    b.theorem = r.get<std::string>("theorem", "t1");
    if (b.theorem != "t1" && b.theorem != "t3") r.problem("theorem", "must be t1 or t3");
    b.probe_points = r.get<std::size_t>("probe_points", b.probe_points);
    if (b.probe_points < 1) r.problem("probe_points", "must be >= 1");
    b.probe_radius_min = r.get<double>("probe_radius_min", b.probe_radius_min);
    b.probe_radius_max = r.get<double>("probe_radius_max", b.probe_radius_max);
    if (!(b.probe_radius_min > 0.0 && b.probe_radius_max >= b.probe_radius_min)) {
      r.problem("probe_radius_min", "need 0 < probe_radius_min <= probe_radius_max");
    }
    b.variance_points = r.get<std::size_t>("variance_points", b.variance_points);
    b.L_scale = r.get<double>("L_scale", 1.0);
    if (!(b.L_scale > 0.0)) r.problem("L_scale", "must be > 0");
    if (cfg.task.type != TaskType::linear) r.problem("theorem", "bound comparison needs the linear task");
    const bool gradient = is_gradient_variant(cfg.algo.variant);
    if (b.theorem == "t1" && gradient) r.problem("theorem", "t1 applies to model-difference variants");
    if (b.theorem == "t3" && !gradient) r.problem("theorem", "t3 applies to gradient variants");
    if (cfg.algo.variant == Variant::airfedmodel) r.problem("theorem", "no unbiased bound covers airfedmodel");
    r.finish();
    cfg.bounds = b;
  }

  root.finish();
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError({std::string("config is not valid JSON: ") + e.what()});
  }
  return parse_config(doc);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config_text(read_text_file(path));
}

}  // namespace airfl::harness

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

// Experiment orchestration: task construction from a config, Monte-Carlo
// repetitions on a worker pool, and artifact writing.
//
// Artifacts written to the output directory:
//   run_<i>.csv     long-format trace of repetition i
//   aggregate.csv   cross-run mean/std per (round, metric)
//   bound_report.csv  only with a bounds block
//   manifest.json   config echo, content hashes, seeds, run outcomes
//   timing.json     wall-clock times (kept apart so the rest is reproducible)

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <exception>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "airfl/bounds.hpp"
#include "airfl/errors.hpp"
#include "airfl/fedalgos.hpp"
#include "airfl/harness/analysis.hpp"
#include "airfl/harness/config.hpp"
#include "airfl/harness/metrics.hpp"
#include "airfl/tasks/dataset.hpp"
#include "airfl/tasks/idx.hpp"
#include "airfl/tasks/linear.hpp"
#include "airfl/tasks/models.hpp"

namespace airfl::harness {

/// Hex SHA-1 of the git blob object for `content` ("blob <size>\0" prefix).
inline std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) {
    throw IoError("SHA-1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

namespace detail {

inline void append_bytes(std::string& buf, const void* p, std::size_t n) {
  buf.append(static_cast<const char*>(p), n);
}

inline void append_doubles(std::string& buf, std::span<const double> xs) {
  append_bytes(buf, xs.data(), xs.size() * sizeof(double));
}

inline std::string serialize(const ParameterVector& v) {
  std::string buf;
  append_doubles(buf, v.span());
  return buf;
}

}  // namespace detail

using AnyTask = std::variant<LinearTask, LogisticTask, MlpTask>;

struct BuiltTask {
  AnyTask task;
  ParameterVector initial_model;
  std::optional<LinearOptimum> optimum;  // linear tasks only
  std::string data_hash;
  std::string initial_model_hash;
};

/// Builds the task and initial model. Depends only on the data seed, so
/// channel or batch seeds never change it.
inline BuiltTask build_task(const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.effective_data_seed();
  const TaskSpec& ts = cfg.task;
  std::string bytes;
  if (ts.type == TaskType::linear) {
    SeededStream stream(seed, "linear_task");
    LinearTask task = generate_linear_task(ts.devices, ts.dim, DeviceSizeSpec{ts.size_min, ts.size_max, ts.size_mean},
                                           ts.noise_var, stream);
    for (std::size_t n = 0; n < task.num_devices(); ++n) {
      const auto& dev = task.device(n);
      const std::uint64_t rows = dev.A.rows();
      detail::append_bytes(bytes, &rows, sizeof rows);
      detail::append_doubles(bytes, dev.A.data());
      detail::append_doubles(bytes, dev.b.span());
    }
    ParameterVector init(ts.dim);
    auto opt = closed_form_optimum(task);
    BuiltTask out{std::move(task), init, std::move(opt), git_blob_hash(bytes), git_blob_hash(detail::serialize(init))};
    return out;
  }

  auto data = std::make_shared<Dataset>(
      ts.source == DataSource::idx ? load_idx(ts.idx_images, ts.idx_labels)
                                   : generate_teacher_dataset(ts.samples, ts.input_dim, ts.teacher_hidden,
                                                              SeededStream(seed, "teacher_data"), ts.classes));
  SeededStream split_stream(seed, "split");
  const auto split = split_train_test(data->size(), ts.test_fraction, split_stream);
  SeededStream part_stream(seed, "partition");
  DataPartition part = cfg.partition.kind == PartitionKind::iid
                           ? partition_iid(split.train, ts.devices, part_stream)
                           : partition_label_shards(*data, split.train, ts.devices,
                                                    cfg.partition.shards_per_device, part_stream);
  for (std::size_t i = 0; i < data->size(); ++i) {
    const int label = data->label(i);
    detail::append_doubles(bytes, std::span<const double>(data->features(i), data->feature_dim()));
    detail::append_bytes(bytes, &label, sizeof label);
  }
  for (const auto& dev : part.device_indices) {
    const std::uint64_t count = dev.size();
    detail::append_bytes(bytes, &count, sizeof count);
    for (std::size_t idx : dev) {
      const std::uint64_t v = idx;
      detail::append_bytes(bytes, &v, sizeof v);
    }
  }
  SeededStream init_stream(seed, "initial_model");
  auto finish = [&](auto task) {
    ParameterVector init = task.initial_parameters(init_stream);
    const std::string init_hash = git_blob_hash(detail::serialize(init));
    return BuiltTask{std::move(task), std::move(init), std::nullopt, git_blob_hash(bytes), init_hash};
  };
  if (ts.type == TaskType::logistic) {
    return finish(LogisticTask(LogisticModel(data->feature_dim()), data, std::move(part), split.test));
  }
  const auto classes = static_cast<std::size_t>(std::max(2, data->num_classes()));
  return finish(MlpTask(MlpModel(data->feature_dim(), ts.hidden, classes), data, std::move(part), split.test));
}

/// Algorithm settings with the task-dependent pieces filled in.
inline AlgoConfig resolve_algo(const ExperimentConfig& cfg, const BuiltTask& built) {
  AlgoConfig algo = cfg.algo;
  algo.initial_model = built.initial_model;
  std::visit([&](const auto& task) { algo.channel.dim = task.dim(); }, built.task);
  const bool needs_curvature = algo.lr.kind == LrKind::corollary1 || algo.lr.kind == LrKind::corollary5;
  if (needs_curvature && (algo.lr.mu <= 0.0 || algo.lr.L <= 0.0)) {
    if (const auto* lin = std::get_if<LinearTask>(&built.task)) {
      const auto cc = convexity_constants(*lin);
      if (algo.lr.mu <= 0.0) algo.lr.mu = cc.mu;
      if (algo.lr.L <= 0.0) algo.lr.L = cc.L;
    } else {
      throw ValidationError({"algorithm.lr: curvature schedules need mu and L for non-linear tasks"});
    }
  }
  if (algo.lr.kind == LrKind::sqrt_ratio && algo.lr.L <= 0.0) {
    if (const auto* lin = std::get_if<LinearTask>(&built.task)) algo.lr.L = convexity_constants(*lin).L;
  }
  try {
    validate(algo.lr);
  } catch (const ParameterError& e) {
    throw ValidationError({std::string("algorithm.lr: ") + e.what()});
  }
  return algo;
}

inline RunStreams streams_for_run(const ExperimentConfig& cfg, std::size_t i) {
  return RunStreams(cfg.base_seed + i, cfg.effective_channel_seed() + i, cfg.base_seed + i);
}

/// Runs all repetitions, in parallel up to cfg.workers threads.
inline std::vector<RunTrace> run_repetitions(const ExperimentConfig& cfg, const BuiltTask& built,
                                             const AlgoConfig& algo, const RunOptions& opts) {
  std::vector<RunTrace> traces(cfg.repetitions);
  std::vector<std::exception_ptr> errors(cfg.repetitions);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.repetitions; i = next++) {
      try {
        std::visit([&](const auto& task) { traces[i] = run_federated(algo, task, streams_for_run(cfg, i), opts); },
                   built.task);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.workers, cfg.repetitions);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return traces;
}

struct ExperimentResult {
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> run_csvs;
  std::filesystem::path aggregate_csv;
  std::filesystem::path manifest;
  std::filesystem::path timing;
  std::optional<std::filesystem::path> bound_report;
  std::vector<RunTrace> traces;
  std::optional<BoundParams> bound_params;
  std::optional<BoundComparison> comparison;
  std::string data_hash;
  std::string initial_model_hash;

  std::size_t flags() const noexcept { return comparison ? comparison->flags : 0; }
};

/// Executes an already parsed config. `config_text` is the raw file content
/// whose hash goes into the manifest.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::string_view config_text) {
  using Clock = std::chrono::steady_clock;
  const auto started = Clock::now();
  const BuiltTask built = build_task(cfg);
  const AlgoConfig algo = resolve_algo(cfg, built);

  RunOptions opts;
  if (built.optimum) opts.optimal_loss = built.optimum->loss;
  opts.record_epsilon = cfg.record_epsilon;
  opts.record_models = cfg.bounds.has_value();

  ExperimentResult res;
  res.traces = run_repetitions(cfg, built, algo, opts);
  res.data_hash = built.data_hash;
  res.initial_model_hash = built.initial_model_hash;

  if (cfg.bounds) {
    const auto& lin = std::get<LinearTask>(built.task);
    SeededStream probe(cfg.effective_data_seed(), "bgd_probes");
    BoundParams bp = measure_linear_bound_params(lin, *built.optimum, res.traces, *cfg.bounds, algo.batch_size,
                                                 algo.local_epochs, algo.channel, algo.initial_model, probe);
    const auto lrs = lr_trace(res.traces.front());
    auto mse = mean_mse_sequence(res.traces);
    const std::size_t T = std::min(lrs.size(), mse.size());
    const std::span<const double> lr_span(lrs.data(), T);
    mse.resize(T);
    const BoundSeries series = cfg.bounds->theorem == "t1"
                                   ? theorem1_series(bp, lr_span, mse, HypothesisPolicy::mask)
                                   : theorem_series_s_variant(SVariantBound::t3, bp, lr_span, mse,
                                                              HypothesisPolicy::mask);
    res.comparison = compare_with_bound(res.traces, series);
    res.bound_params = bp;
  }

  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  res.output_dir = dir;

  nlohmann::json artifacts = nlohmann::json::object();
  MetricTable all;
  for (std::size_t i = 0; i < res.traces.size(); ++i) {
    MetricTable t;
    t.add_trace(i, res.traces[i]);
    t.sort();
    all.add_trace(i, res.traces[i]);
    const std::string csv = t.to_csv();
    const fs::path p = dir / ("run_" + std::to_string(i) + ".csv");
    write_text_file(p, csv);
    artifacts[p.filename().string()] = git_blob_hash(csv);
    res.run_csvs.push_back(p);
  }
  all.sort();
  const std::string agg = aggregate_csv(aggregate(all));
  res.aggregate_csv = dir / "aggregate.csv";
  write_text_file(res.aggregate_csv, agg);
  artifacts["aggregate.csv"] = git_blob_hash(agg);
  if (res.comparison) {
    const std::string rep = res.comparison->to_csv();
    res.bound_report = dir / "bound_report.csv";
    write_text_file(*res.bound_report, rep);
    artifacts["bound_report.csv"] = git_blob_hash(rep);
  }

  nlohmann::json manifest;
  manifest["config"] = cfg.source;
  manifest["config_hash"] = git_blob_hash(config_text);
  manifest["artifacts"] = artifacts;
  manifest["data_hash"] = built.data_hash;
  manifest["initial_model_hash"] = built.initial_model_hash;
  manifest["seeds"] = {{"base", cfg.base_seed},
                       {"data", cfg.effective_data_seed()},
                       {"channel", cfg.effective_channel_seed()}};
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < res.traces.size(); ++i) {
    const auto& tr = res.traces[i];
    nlohmann::json r;
    r["run_id"] = i;
    r["rounds_recorded"] = tr.length();
    r["diverged"] = tr.diverged;
    r["diverged_round"] = tr.diverged_round ? nlohmann::json(*tr.diverged_round) : nlohmann::json(nullptr);
    r["clipped_rounds"] = tr.clipped_rounds.size();
    r["final_model_hash"] = tr.rounds.empty() ? 0 : tr.rounds.back().model_hash;
    runs.push_back(r);
  }
  manifest["runs"] = runs;
  if (res.comparison) {
    const auto& bp = *res.bound_params;
    manifest["bound"] = {{"theorem", res.comparison->theorem},
                         {"flags", res.comparison->flags},
                         {"mu", bp.mu},
                         {"L", bp.L},
                         {"beta1", bp.beta1},
                         {"beta2", bp.beta2},
                         {"sigma_sq_mean", bp.sigma_bar2()},
                         {"G_sq", bp.g_sq},
                         {"initial_gap", bp.initial_gap}};
  }
  const std::string manifest_text = manifest.dump(2) + '\n';
  res.manifest = dir / "manifest.json";
  write_text_file(res.manifest, manifest_text);

  nlohmann::json timing;
  timing["total_wall_seconds"] = std::chrono::duration<double>(Clock::now() - started).count();
  nlohmann::json per_run = nlohmann::json::array();
  for (const auto& tr : res.traces) {
    double s = 0.0;
    for (const auto& r : tr.rounds) s += r.wall_seconds;
    per_run.push_back(s);
  }
  timing["run_wall_seconds"] = per_run;
  res.timing = dir / "timing.json";
  write_text_file(res.timing, timing.dump(2) + '\n');
  return res;
}

inline ExperimentResult run_experiment(const std::filesystem::path& config_path) {
  const std::string text = read_text_file(config_path);
  return run_experiment(parse_config_text(text), text);
}

}  // namespace airfl::harness

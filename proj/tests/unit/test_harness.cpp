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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "support.hpp"

namespace airfl {
namespace {

namespace fs = std::filesystem;
using namespace airfl::harness;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("airfl_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string tiny_config(const fs::path& out, const std::string& extra = "", std::size_t reps = 1,
                        const std::string& fading = "error_free", std::size_t rounds = 5) {
  return R"({"task": {"type": "linear", "devices": 3, "dim": 4, "sizes": {"min": 10, "max": 30, "mean": 20}},
             "algorithm": {"variant": "airfedavg_m", "local_epochs": 2, "rounds": )" +
         std::to_string(rounds) + R"(, "batch_size": 5,
                           "lr": {"kind": "inverse_time", "eta0": 0.05, "decay": 0.01}},
             "channel": {"fading": ")" +
         fading + R"(", "snr_db": 5},
             "repetitions": )" +
         std::to_string(reps) + R"(, "output_dir": ")" + out.generic_string() + "\"" + extra + "}";
}

ExperimentResult run_text(const std::string& text) { return run_experiment(parse_config_text(text), text); }

// ---------------------------------------------------------------------------
// Configuration.

TEST(Config, ReferenceConfigParses) {
  const auto cfg = load_config(fs::path(AIRFL_CONFIG_DIR) / "linear_cotaf_m.json");
  EXPECT_EQ(cfg.task.devices, 25u);
  EXPECT_EQ(cfg.algo.local_epochs, 5u);
  EXPECT_EQ(cfg.repetitions, 5u);
  EXPECT_NEAR(cfg.algo.channel.noise_var, 1.0 / std::pow(10.0, 0.5), 1e-15);
}

TEST(Config, EveryShippedConfigParses) {
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(AIRFL_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
    ++seen;
  }
  EXPECT_GE(seen, 3u);
}

TEST(Config, SnrConvertsThroughTransmitPower) {
  const auto cfg = parse_config_text(R"({"channel": {"fading": "awgn", "snr_db": 0, "transmit_power": 2.0}})");
  EXPECT_DOUBLE_EQ(cfg.algo.channel.noise_var, 2.0);
  const auto c20 = parse_config_text(R"({"channel": {"fading": "awgn", "snr_db": 20}})");
  EXPECT_NEAR(c20.algo.channel.noise_var, 0.01, 1e-15);
}

TEST(Config, EveryFailedFieldIsListed) {
  try {
    parse_config_text(R"({"task": {"devices": 0, "noise_var": -1},
                          "algorithm": {"rounds": 0, "variant": "nope"},
                          "repetitions": 0})");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const auto& p = e.problems();
    EXPECT_GE(p.size(), 5u);
    auto mentions = [&](const std::string& key) {
      return std::any_of(p.begin(), p.end(), [&](const std::string& s) { return s.find(key) != std::string::npos; });
    };
    for (const char* key : {"devices", "noise_var", "rounds", "variant", "repetitions"}) EXPECT_TRUE(mentions(key)) << key;
  }
}

TEST(Config, UnknownKeysAreErrors) {
  try {
    parse_config_text(R"({"task": {"dims": 3}, "repetitons": 2})");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("dims"), std::string::npos);
    EXPECT_NE(msg.find("repetitons"), std::string::npos);
  }
}

TEST(Config, TypeMismatchAndMalformedJson) {
  EXPECT_THROW(parse_config_text(R"({"repetitions": "five"})"), ValidationError);
  EXPECT_THROW(parse_config_text("{\"task\": "), ValidationError);
  EXPECT_THROW(parse_config_text(R"({"task": {"type": "mlp"}, "bounds": {"theorem": "t1"}})"), ValidationError);
  EXPECT_THROW(load_config("/nonexistent/airfl.json"), IoError);
}

// ---------------------------------------------------------------------------
// Experiment artifacts.

TEST(Experiment, TraceHasOneRowPerRoundAndMetric) {
  const fs::path out = scratch_dir("rows");
  const auto res = run_text(tiny_config(out));
  ASSERT_EQ(res.run_csvs.size(), 1u);
  const MetricTable t = MetricTable::from_csv(read_text_file(res.run_csvs[0]));
  std::map<std::string, std::size_t> counts;
  for (const auto& r : t.rows()) ++counts[r.metric];
  for (const char* m : {"loss", "gap", "grad_sq_norm", "lr", "beta", "mae_sq_norm", "mae_bias_norm"}) {
    EXPECT_EQ(counts[m], 6u) << m;
  }
  EXPECT_EQ(counts.count("test_accuracy"), 0u);
  EXPECT_TRUE(fs::exists(res.manifest));
  EXPECT_TRUE(fs::exists(res.timing));
  fs::remove_all(out);
}

TEST(Experiment, RerunIsByteIdentical) {
  const fs::path a = scratch_dir("rerun_a"), b = scratch_dir("rerun_b");
  const auto ra = run_text(tiny_config(a, "", 3, "rayleigh"));
  const auto rb = run_text(tiny_config(b, "", 3, "rayleigh"));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(read_text_file(ra.run_csvs[i]), read_text_file(rb.run_csvs[i]));
  }
  EXPECT_EQ(read_text_file(ra.aggregate_csv), read_text_file(rb.aggregate_csv));
  // Rerunning into the same directory reproduces the manifest as well.
  const std::string first = read_text_file(ra.manifest);
  run_text(tiny_config(a, "", 3, "rayleigh"));
  EXPECT_EQ(read_text_file(ra.manifest), first);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiment, ChannelSeedLeavesDataAndInitialModelUntouched) {
  const fs::path a = scratch_dir("seed_a"), b = scratch_dir("seed_b");
  const auto ra = run_text(tiny_config(a, R"(, "channel_seed": 11)", 1, "rayleigh"));
  const auto rb = run_text(tiny_config(b, R"(, "channel_seed": 12)", 1, "rayleigh"));
  const auto ma = nlohmann::json::parse(read_text_file(ra.manifest));
  const auto mb = nlohmann::json::parse(read_text_file(rb.manifest));
  EXPECT_EQ(ma["data_hash"], mb["data_hash"]);
  EXPECT_EQ(ma["initial_model_hash"], mb["initial_model_hash"]);
  EXPECT_NE(ma["runs"][0]["final_model_hash"], mb["runs"][0]["final_model_hash"]);
  const auto rc = run_text(tiny_config(b, R"(, "data_seed": 5)", 1, "rayleigh"));
  EXPECT_NE(nlohmann::json::parse(read_text_file(rc.manifest))["data_hash"], ma["data_hash"]);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiment, AggregateIsTheMeanOfTheRuns) {
  const fs::path out = scratch_dir("aggregate");
  const auto res = run_text(tiny_config(out, "", 4, "rayleigh", 8));
  std::map<std::pair<std::size_t, std::string>, std::vector<double>> values;
  for (const auto& p : res.run_csvs) {
    const MetricTable t = MetricTable::from_csv(read_text_file(p));
    for (const auto& r : t.rows()) values[{r.round, r.metric}].push_back(r.value);
  }
  const std::string agg = read_text_file(res.aggregate_csv);
  std::istringstream in(agg);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "round,metric,mean,std,count");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    ASSERT_EQ(f.size(), 5u);
    const auto& v = values.at({std::stoul(f[0]), f[1]});
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    EXPECT_NEAR(parse_double(f[2]), mean, 1e-12 * std::max(1.0, std::abs(mean)));
    EXPECT_GE(parse_double(f[3]), 0.0);
    EXPECT_EQ(std::stoul(f[4]), 4u);
    ++rows;
  }
  EXPECT_EQ(rows, values.size());
  fs::remove_all(out);
}

TEST(Experiment, UnwritableOutputIsAnIoError) {
  const fs::path blocker = scratch_dir("blocker");
  write_text_file(blocker, "not a directory");
  EXPECT_THROW(run_text(tiny_config(blocker / "inner")), IoError);
  fs::remove(blocker);
}

TEST(Experiment, BoundBlockWritesAComparisonReport) {
  const fs::path out = scratch_dir("bound");
  const auto res = run_text(tiny_config(out, R"(, "bounds": {"theorem": "t1", "probe_points": 50})", 3, "awgn", 20));
  ASSERT_TRUE(res.comparison.has_value());
  ASSERT_TRUE(res.bound_report.has_value());
  EXPECT_EQ(res.comparison->rows.size(), 20u);
  EXPECT_EQ(res.comparison->flags, 0u);
  const auto manifest = nlohmann::json::parse(read_text_file(res.manifest));
  EXPECT_EQ(manifest["bound"]["flags"], 0);
  fs::remove_all(out);
}

// ---------------------------------------------------------------------------
// Metric tables and plot export.

TEST(MetricCsv, RoundTripIsExact) {
  MetricTable t;
  const std::vector<double> values{0.1 + 0.2, 1e-300, 4.9e-324, -1234.5678e100, 1.0 / 3.0, 0.0, 123456789.0};
  for (std::size_t i = 0; i < values.size(); ++i) t.add(0, i, "loss", values[i]);
  t.add(1, 0, "gap", std::numeric_limits<double>::infinity());
  const std::string csv = t.to_csv();
  const MetricTable back = MetricTable::from_csv(csv);
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < values.size(); ++i) EXPECT_EQ(back.rows()[i].value, values[i]);
  EXPECT_EQ(back.to_csv(), csv);
}

TEST(MetricCsv, MalformedInputIsAFormatError) {
  EXPECT_THROW(MetricTable::from_csv("run,round,metric,value\n"), FormatError);
  EXPECT_THROW(MetricTable::from_csv("run_id,round,metric,value\n0,1,loss\n"), FormatError);
  EXPECT_THROW(MetricTable::from_csv("run_id,round,metric,value\n0,1,loss,abc\n"), FormatError);
  EXPECT_THROW(MetricTable::from_csv("run_id,round,metric,value\n0,x,loss,1\n"), FormatError);
  EXPECT_THROW(MetricTable::from_csv("run_id,round,metric,value\n0,1,speed,1\n"), FormatError);
}

TEST(MetricCsv, RowsSortByRunRoundAndVocabulary) {
  MetricTable t;
  t.add(1, 0, "lr", 1.0);
  t.add(0, 2, "loss", 2.0);
  t.add(0, 1, "beta", 3.0);
  t.add(0, 1, "loss", 4.0);
  t.sort();
  EXPECT_EQ(t.rows()[0].value, 4.0);
  EXPECT_EQ(t.rows()[1].value, 3.0);
  EXPECT_EQ(t.rows()[2].value, 2.0);
  EXPECT_EQ(t.rows()[3].value, 1.0);
}

TEST(Plot, MeanAndSpreadColumns) {
  const LinearTask task = testing::small_linear_task(31);
  AlgoConfig cfg;
  cfg.variant = Variant::airfedavg_m;
  cfg.rounds = 12;
  cfg.batch_size = 4;
  cfg.lr = LrSchedule::constant(0.05);
  cfg.channel.fading = Fading::rayleigh_block;
  cfg.channel.dim = task.dim();
  cfg.channel.noise_var = 0.1;
  cfg.initial_model = ParameterVector(task.dim());
  RunOptions o;
  o.optimal_loss = closed_form_optimum(task).loss;
  MetricTable table;
  for (std::size_t r = 0; r < 5; ++r) table.add_trace(r, run_federated(cfg, task, RunStreams(r + 1), o));
  table.sort();
  const fs::path dir = scratch_dir("plot");
  fs::create_directories(dir);
  const auto files = emit_plot_data(table, "gap", AxisScale::linear, dir / "gap.dat", true);
  std::ifstream in(files.data);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# round mean std");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::size_t round = 0;
    std::string mean, sd;
    ls >> round >> mean >> sd;
    EXPECT_EQ(round, rows);
    EXPECT_GE(parse_double(sd), 0.0);
    ++rows;
  }
  EXPECT_EQ(rows, 13u);
  const std::string gp = read_text_file(files.script);
  EXPECT_NE(gp.find("set logscale y"), std::string::npos);
  const auto logx = emit_plot_data(table, "loss", AxisScale::log, dir / "loss.dat");
  EXPECT_EQ(read_text_file(logx.data).find("\n0 "), std::string::npos);
  EXPECT_THROW(emit_plot_data(table, "speed", AxisScale::linear, dir / "x.dat"), ParameterError);
  EXPECT_THROW(emit_plot_data(table, "test_accuracy", AxisScale::linear, dir / "x.dat"), ParameterError);
  fs::remove_all(dir);
}

TEST(Plot, LemmaSequenceExportWritesOneFilePerPair) {
  const fs::path dir = scratch_dir("lemma");
  const auto files = emit_lemma1_sequences({{1, 0}, {1, 1}, {1, 2}, {1, 3}}, 10000, dir);
  ASSERT_EQ(files.size(), 4u);
  for (const auto& f : files) {
    const MetricTable dummy;
    std::ifstream in(f);
    std::string line;
    std::getline(in, line);
    std::vector<std::pair<std::size_t, double>> pts;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::size_t T = 0;
      std::string v;
      ls >> T >> v;
      pts.emplace_back(T, parse_double(v));
    }
    ASSERT_GE(pts.size(), 2u);
    EXPECT_EQ(pts.front().first, 1u);
    EXPECT_EQ(pts.back().first, 10000u);
  }
  EXPECT_TRUE(fs::exists(dir / "lemma1.gp"));
  // (1,3) must fall by an order of magnitude over the exported range.
  std::ifstream in(files[3]);
  std::string line, first, last;
  std::getline(in, line);
  std::getline(in, first);
  while (std::getline(in, line)) last = line;
  EXPECT_LE(parse_double(last.substr(last.find(' ') + 1)), 0.1 * parse_double(first.substr(first.find(' ') + 1)));
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Aggregation-error statistics.

std::vector<RunTrace> mae_runs(PrecoderKind kind, double noise_var, std::vector<double> phase_scale, std::size_t R) {
  const LinearTask task = testing::small_linear_task(41);
  AlgoConfig cfg;
  cfg.variant = Variant::airfedavg_m;
  cfg.rounds = 6;
  cfg.batch_size = 0;
  cfg.lr = LrSchedule::constant(0.05);
  cfg.channel.fading = kind == PrecoderKind::phase_only ? Fading::awgn : Fading::rayleigh_block;
  cfg.channel.dim = task.dim();
  cfg.channel.noise_var = noise_var;
  cfg.precoder.kind = kind;
  cfg.precoder.phase_power_scale = std::move(phase_scale);
  cfg.initial_model = ParameterVector(task.dim(), 0.5);
  RunOptions o;
  o.record_epsilon = true;
  std::vector<RunTrace> out;
  for (std::size_t r = 0; r < R; ++r) out.push_back(run_federated(cfg, task, RunStreams(100 + r), o));
  return out;
}

TEST(MaeStatistics, FullInversionIsUnbiased) {
  const auto runs = mae_runs(PrecoderKind::inversion_cotaf, 0.2, {}, 400);
  for (const auto& s : mae_statistics(runs)) {
    EXPECT_LE(s.bias_norm, 3.0 * s.bias_norm_se) << "round " << s.round;
    EXPECT_GT(s.mean_sq_norm, 0.0);
  }
}

TEST(MaeStatistics, MisalignedPhaseOnlyIsBiased) {
  const auto runs = mae_runs(PrecoderKind::phase_only, 0.2, {4.0, 1.0, 0.25, 2.0}, 50);
  for (const auto& s : mae_statistics(runs)) EXPECT_GT(s.bias_norm, 5.0 * s.bias_norm_se) << "round " << s.round;
}

TEST(MaeStatistics, NoiselessInversionGivesExactZeros) {
  const auto runs = mae_runs(PrecoderKind::inversion_cotaf, 0.0, {}, 3);
  for (const auto& s : mae_statistics(runs)) {
    EXPECT_EQ(s.bias_norm, 0.0);
    EXPECT_EQ(s.mean_sq_norm, 0.0);
  }
  EXPECT_THROW(mae_statistics(std::span<const RunTrace>(runs.data(), 1)), ParameterError);
}

// ---------------------------------------------------------------------------
// Bound comparison.

TEST(BoundComparison, ErrorFreeRunsNeverExceedTheBound) {
  const LinearTask task = testing::small_linear_task(51, 4, 6, 0.2);
  const auto opt = closed_form_optimum(task);
  const auto cc = convexity_constants(task);
  AlgoConfig cfg;
  cfg.variant = Variant::errorfree_fedavg_m;
  cfg.local_epochs = 3;
  cfg.rounds = 150;
  cfg.batch_size = 8;
  cfg.initial_model = ParameterVector(task.dim());
  RunOptions o;
  o.optimal_loss = opt.loss;
  o.record_models = true;
  std::vector<RunTrace> runs;
  BoundBlock block;
  block.probe_points = 300;
  {
    // β1 is needed for the cap before any run exists, so measure once up front.
    SeededStream ps(51, "probe");
    const auto pre = measure_linear_bound_params(task, opt, {}, block, 8, 3, cfg.channel, cfg.initial_model, ps);
    cfg.lr = LrSchedule::corollary1(cc.mu, cc.L, 3);
    cfg.lr_cap = theorem1_lr_cap(cc.L, 3, pre.beta1);
  }
  for (std::uint64_t s = 1; s <= 5; ++s) runs.push_back(run_federated(cfg, task, RunStreams(s), o));
  SeededStream ps(51, "probe");
  const BoundParams bp =
      measure_linear_bound_params(task, opt, runs, block, 8, 3, cfg.channel, cfg.initial_model, ps);
  const auto lrs = lr_trace(runs[0]);
  const BoundSeries series = theorem1_series(bp, lrs, std::vector<double>(lrs.size(), 0.0));
  const auto cmp = compare_with_bound(runs, series);
  EXPECT_EQ(cmp.flags, 0u);
  EXPECT_EQ(cmp.rows.size(), 150u);
  for (const auto& r : cmp.rows) EXPECT_NEAR(r.slack, r.bound - r.empirical_mean, 1e-15);
}

TEST(BoundComparison, HalvedSmoothnessIsCaught) {
  // Started at the optimum, the gap is driven by injected noise, so the
  // curvature constant in front of the noise term decides the bound.
  SeededStream gs(52, "task");
  const LinearTask task = generate_linear_task(5, 10, DeviceSizeSpec{1500, 2500, 2000}, 0.2, gs);
  const auto opt = closed_form_optimum(task);
  const auto cc = convexity_constants(task);
  AlgoConfig cfg;
  cfg.variant = Variant::airfedavg_m;
  cfg.rounds = 5;
  cfg.batch_size = 0;
  cfg.lr = LrSchedule::constant(0.5 * theorem1_lr_cap(cc.L, 1, 1.0));
  cfg.channel.dim = task.dim();
  cfg.channel.noise_var = 0.3;
  cfg.precoder.kind = PrecoderKind::inversion_fixed_beta;
  cfg.precoder.fixed_beta = 100.0;
  cfg.initial_model = opt.theta;
  RunOptions o;
  o.optimal_loss = opt.loss;
  std::vector<RunTrace> runs;
  for (std::uint64_t s = 1; s <= 20; ++s) runs.push_back(run_federated(cfg, task, RunStreams(s), o));
  std::size_t flags[2] = {0, 0};
  for (int k = 0; k < 2; ++k) {
    BoundBlock block;
    block.L_scale = k == 0 ? 1.0 : 0.5;
    SeededStream ps(52, "probe");
    BoundParams bp = measure_linear_bound_params(task, opt, runs, block, 0, 1, cfg.channel,
                                                 opt.theta + ParameterVector(task.dim(), 0.05), ps);
    bp.initial_gap = 0.0;
    const auto series = theorem1_series(bp, lr_trace(runs[0]), mean_mse_sequence(runs), HypothesisPolicy::mask);
    flags[k] = compare_with_bound(runs, series).flags;
  }
  EXPECT_EQ(flags[0], 0u);
  EXPECT_GE(flags[1], 1u);
}

TEST(BoundComparison, NeedsGapsAndRuns) {
  const std::vector<RunTrace> none;
  BoundSeries s;
  EXPECT_THROW(compare_with_bound(none, s), ParameterError);
  std::vector<RunTrace> no_gap(1);
  EXPECT_THROW(compare_with_bound(no_gap, s), ParameterError);
}

}  // namespace
}  // namespace airfl

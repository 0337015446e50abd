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

// Command-line front end.
//
//   airfl run <config.json>
//   airfl bounds <config.json>
//   airfl plot <table.csv> --metric gap [--logy] [--logx] [--out file.dat]
//   airfl sequences --pairs "1,2;1,3;1,0;1,1" --T 10000 [--out dir]
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
// arguments, 3 the bound comparison flagged at least one round.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "airfl/airfl.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kInvalid = 2;
constexpr int kFlagged = 3;

using namespace airfl;
using namespace airfl::harness;

int report_experiment(const ExperimentResult& res) {
  std::cout << "output: " << res.output_dir.string() << '\n'
            << "runs: " << res.traces.size() << '\n'
            << "aggregate: " << res.aggregate_csv.string() << '\n'
            << "manifest: " << res.manifest.string() << '\n';
  for (std::size_t i = 0; i < res.traces.size(); ++i) {
    const auto& tr = res.traces[i];
    const auto& last = tr.rounds.back();
    std::cout << "run " << i << ": rounds=" << last.round << " loss=" << format_double(last.loss);
    if (tr.has_gap) std::cout << " gap=" << format_double(last.gap);
    if (tr.diverged) std::cout << " diverged_at=" << *tr.diverged_round;
    std::cout << '\n';
  }
  if (res.comparison) {
    const auto& bp = *res.bound_params;
    std::cout << "bound " << res.comparison->theorem << ": mu=" << format_double(bp.mu)
              << " L=" << format_double(bp.L) << " beta1=" << format_double(bp.beta1)
              << " beta2=" << format_double(bp.beta2) << " flags=" << res.comparison->flags << '\n'
              << "report: " << res.bound_report->string() << '\n';
    if (res.comparison->flags > 0) return kFlagged;
  }
  return kOk;
}

std::vector<std::pair<double, double>> parse_pairs(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw ParameterError("pair '" + item + "' must look like d1,d2");
    out.emplace_back(parse_double(item.substr(0, comma)), parse_double(item.substr(comma + 1)));
  }
  if (out.empty()) throw ParameterError("no (d1,d2) pairs given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Over-the-air federated learning simulator and bound evaluator"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", run_config, "JSON experiment config")->required();

  std::string bounds_config;
  auto* bounds = app.add_subcommand("bounds", "run an experiment and compare it with its bound block");
  bounds->add_option("config", bounds_config, "JSON experiment config with a bounds section")->required();

  std::string table_path, metric = "gap", plot_out;
  bool logy = false, logx = false;
  auto* plot = app.add_subcommand("plot", "export plot data from a metric table");
  plot->add_option("table", table_path, "long-format metric CSV")->required();
  plot->add_option("--metric", metric, "metric name");
  plot->add_flag("--logy", logy, "logarithmic y axis in the script stub");
  plot->add_flag("--logx", logx, "logarithmic x axis (drops round 0)");
  plot->add_option("--out", plot_out, "output .dat path (default: <table>_<metric>.dat)");

  std::string pairs = "1,2;1,3;1,0;1,1", seq_out = "sequences";
  std::size_t seq_T = 10000;
  auto* seq = app.add_subcommand("sequences", "partial sums of the step-size sequence lemma");
  seq->add_option("--pairs", pairs, "semicolon separated d1,d2 pairs");
  seq->add_option("--T", seq_T, "largest horizon")->check(CLI::PositiveNumber);
  seq->add_option("--out", seq_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*run) return report_experiment(run_experiment(std::filesystem::path(run_config)));
    if (*bounds) {
      const std::string text = read_text_file(bounds_config);
      const ExperimentConfig cfg = parse_config_text(text);
      if (!cfg.bounds) throw ValidationError({"bounds: section required for the bounds command"});
      return report_experiment(run_experiment(cfg, text));
    }
    if (*plot) {
      const MetricTable table = MetricTable::from_csv(read_text_file(table_path));
      std::filesystem::path out = plot_out;
      if (out.empty()) {
        out = std::filesystem::path(table_path);
        out.replace_filename(out.stem().string() + "_" + metric + ".dat");
      }
      const auto files = emit_plot_data(table, metric, logx ? AxisScale::log : AxisScale::linear, out, logy);
      std::cout << files.data.string() << '\n' << files.script.string() << '\n';
      return kOk;
    }
    if (*seq) {
      const auto parsed = parse_pairs(pairs);
      const auto files = emit_lemma1_sequences(parsed, seq_T, seq_out);
      for (std::size_t k = 0; k < parsed.size(); ++k) {
        const auto values = lemma1_series(1.0, parsed[k].first, 1.0, parsed[k].second, seq_T);
        std::cout << "(" << format_double(parsed[k].first) << "," << format_double(parsed[k].second) << ") T=" << seq_T
                  << " value=" << format_double(values.back()) << " file=" << files[k].string() << '\n';
      }
      return kOk;
    }
  } catch (const ValidationError& e) {
    std::cerr << e.what() << '\n';
    return kInvalid;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

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

// Cross-run statistics, bound-versus-simulation comparison and plot export.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "airfl/bounds.hpp"
#include "airfl/errors.hpp"
#include "airfl/fedalgos.hpp"
#include "airfl/harness/config.hpp"
#include "airfl/harness/metrics.hpp"
#include "airfl/tasks/linear.hpp"

namespace airfl::harness {

// ---------------------------------------------------------------------------
// Aggregation-error statistics.

struct MaeRoundStats {
  std::size_t round = 0;
  double bias_norm = 0.0;     // ||mean_r ε_r||
  double bias_norm_se = 0.0;  // sqrt(Σ_i SE_i²), the scale of ||mean|| under zero mean
  double max_abs_z = 0.0;     // largest |mean_i| / SE_i over coordinates with SE_i > 0
  double mean_sq_norm = 0.0;
  double sq_norm_se = 0.0;
  std::size_t runs = 0;
};

/// Monte-Carlo bias and second moment of ε^t across runs, per round. Every
/// trace must carry its recorded aggregation errors.
inline std::vector<MaeRoundStats> mae_statistics(std::span<const RunTrace> traces) {
  if (traces.size() < 2) throw ParameterError("mae_statistics needs at least two runs");
  std::size_t rounds = traces.front().epsilons.size();
  for (const auto& tr : traces) {
    if (tr.epsilons.empty()) throw ParameterError("mae_statistics needs traces recorded with record_epsilon");
    rounds = std::min(rounds, tr.epsilons.size());
  }
  const double R = static_cast<double>(traces.size());
  std::vector<MaeRoundStats> out;
  out.reserve(rounds);
  for (std::size_t t = 0; t < rounds; ++t) {
    const std::size_t d = traces.front().epsilons[t].dim();
    VectorRunningStats coords(d);
    RunningStats sq;
    for (const auto& tr : traces) {
      coords.push(tr.epsilons[t]);
      sq.push(tr.epsilons[t].squared_norm());
    }
    MaeRoundStats s;
    s.round = t;
    s.runs = traces.size();
    const ParameterVector mean = coords.mean();
    const ParameterVector var = coords.variance();
    s.bias_norm = mean.norm();
    double se_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double se_i = std::sqrt(var[i] / R);
      se_sq += var[i] / R;
      if (se_i > 0.0) s.max_abs_z = std::max(s.max_abs_z, std::abs(mean[i]) / se_i);
    }
    s.bias_norm_se = std::sqrt(se_sq);
    s.mean_sq_norm = sq.mean();
    s.sq_norm_se = sq.standard_error();
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bound comparison.

struct BoundComparisonRow {
  std::size_t round = 0;
  double empirical_mean = 0.0;
  double empirical_se = 0.0;
  double bound = 0.0;
  double slack = 0.0;  // bound − empirical mean
  bool valid = true;
  bool flagged = false;
};

struct BoundComparison {
  std::string theorem;
  std::vector<BoundComparisonRow> rows;
  std::size_t flags = 0;

  std::string to_csv() const {
    std::string out = "round,empirical_mean,empirical_se,bound,slack,valid,flagged\n";
    for (const auto& r : rows) {
      out += std::to_string(r.round) + ',' + format_double(r.empirical_mean) + ',' + format_double(r.empirical_se) +
             ',' + format_double(r.bound) + ',' + format_double(r.slack) + ',' + (r.valid ? "1" : "0") + ',' +
             (r.flagged ? "1" : "0") + '\n';
    }
    return out;
  }
};

/// Joins simulated optimality gaps with a bound series. Round T of the traces
/// is compared with the series value at horizon T; a round is flagged when the
/// step-size hypothesis holds there and the bound sits more than three
/// standard errors below the empirical mean.
inline BoundComparison compare_with_bound(std::span<const RunTrace> traces, const BoundSeries& series) {
  if (traces.empty()) throw ParameterError("compare_with_bound needs at least one run");
  for (const auto& tr : traces) {
    if (!tr.has_gap) throw ParameterError("compare_with_bound needs traces with the optimality gap");
  }
  std::size_t rounds = series.horizon();
  for (const auto& tr : traces) rounds = std::min(rounds, tr.length() == 0 ? 0 : tr.length() - 1);
  BoundComparison cmp;
  cmp.theorem = series.theorem;
  for (std::size_t T = 1; T <= rounds; ++T) {
    RunningStats st;
    for (const auto& tr : traces) st.push(tr.rounds[T].gap);
    BoundComparisonRow row;
    row.round = T;
    row.empirical_mean = st.mean();
    row.empirical_se = traces.size() > 1 ? st.standard_error() : 0.0;
    row.bound = series.at(T);
    row.slack = row.bound - row.empirical_mean;
    row.valid = series.valid[T - 1];
    row.flagged = row.valid && row.bound < row.empirical_mean - 3.0 * row.empirical_se;
    if (row.flagged) ++cmp.flags;
    cmp.rows.push_back(row);
  }
  return cmp;
}

/// Per-round cross-run mean of the aggregation-error energy, rounds 0..T−1.
/// This is the marginal Monte-Carlo estimate of MSE^t.
inline std::vector<double> mean_mse_sequence(std::span<const RunTrace> traces) {
  if (traces.empty()) throw ParameterError("mean_mse_sequence needs at least one run");
  std::size_t T = traces.front().length();
  for (const auto& tr : traces) T = std::min(T, tr.length());
  if (T < 2) throw ParameterError("mean_mse_sequence needs at least one aggregation round");
  std::vector<double> out(T - 1, 0.0);
  for (const auto& tr : traces) {
    for (std::size_t t = 0; t + 1 < T; ++t) out[t] += tr.rounds[t].mae_sq_norm;
  }
  for (auto& v : out) v /= static_cast<double>(traces.size());
  return out;
}

inline std::vector<double> lr_trace(const RunTrace& trace) {
  std::vector<double> out;
  for (std::size_t t = 0; t + 1 < trace.length(); ++t) out.push_back(trace.rounds[t].lr);
  return out;
}

/// Measures every constant a strongly convex bound needs on a linear task.
///
/// Curvature comes from the Gram spectra, gradient variance from the exact
/// minibatch formula at points along the recorded trajectories, BGD from
/// random probes around the optimum, and G² from the largest stochastic
/// gradient seen in the runs.
inline BoundParams measure_linear_bound_params(const LinearTask& task, const LinearOptimum& opt,
                                               std::span<const RunTrace> traces, const BoundBlock& block,
                                               std::size_t batch_size, std::size_t local_epochs,
                                               const ChannelConfig& channel, const ParameterVector& theta0,
                                               SeededStream& stream) {
  BoundParams bp;
  const auto cc = convexity_constants(task);
  bp.L = cc.L * block.L_scale;
  bp.mu = std::min(cc.mu, bp.L);
  bp.p.resize(task.num_devices());
  for (std::size_t n = 0; n < task.num_devices(); ++n) bp.p[n] = task.weight(n);

  std::vector<ParameterVector> points{theta0};
  for (const auto& tr : traces) {
    if (tr.models.empty()) continue;
    const std::size_t m = tr.models.size();
    const std::size_t k = std::max<std::size_t>(1, std::min(block.variance_points, m));
    for (std::size_t j = 0; j < k; ++j) points.push_back(tr.models[j * (m - 1) / std::max<std::size_t>(1, k - 1)]);
  }
  bp.sigma_sq = minibatch_gradient_variance(task, batch_size, points);

  const double radius = (theta0 - opt.theta).norm();
  BgdProbeSpec spec;
  spec.center = opt.theta;
  spec.r_min = block.probe_radius_min * std::max(radius, 1e-12);
  spec.r_max = block.probe_radius_max * std::max(radius, 1e-12);
  const auto bgd = estimate_bgd_constants(task, block.probe_points, spec, stream);
  bp.beta1 = bgd.beta1;
  bp.beta2 = bgd.beta2;

  double gmax = 0.0;
  for (const auto& tr : traces) {
    for (const auto& r : tr.rounds) gmax = std::max(gmax, r.max_sample_grad_sq);
  }
  bp.g_sq = inflate_gradient_bound(gmax);
  double vmax = 0.0;
  for (double w : bp.p) vmax = std::max(vmax, static_cast<double>(bp.p.size()) * w);
  bp.g_tilde_sq = bp.g_sq * vmax * vmax;

  bp.noise_var = channel.effective_noise_var();
  bp.transmit_power = channel.transmit_power;
  bp.d = task.dim();
  bp.E = local_epochs;
  bp.initial_gap = std::max(0.0, global_loss(task, theta0) - opt.loss);
  return bp;
}

// ---------------------------------------------------------------------------
// Plot export.

enum class AxisScale { linear, log };

struct PlotFiles {
  std::filesystem::path data;
  std::filesystem::path script;
};

/// Writes `metric` versus round as a plot-ready text file: two columns for a
/// single run, or round/mean/std for several. A gnuplot script stub is written
/// next to it. A log x axis drops round 0.
inline PlotFiles emit_plot_data(const MetricTable& table, std::string_view metric, AxisScale x_scale,
                                const std::filesystem::path& out_path, bool log_y = false) {
  if (!is_metric(metric)) throw ParameterError("unknown metric '" + std::string(metric) + "'");
  std::map<std::size_t, std::vector<double>> by_round;
  for (const auto& r : table.rows()) {
    if (r.metric == metric) by_round[r.round].push_back(r.value);
  }
  if (by_round.empty()) throw ParameterError("metric '" + std::string(metric) + "' has no rows");
  const bool multi = table.run_ids().size() > 1;
  std::string text = multi ? "# round mean std\n" : "# round value\n";
  for (const auto& [round, vals] : by_round) {
    if (x_scale == AxisScale::log && round == 0) continue;
    RunningStats st;
    for (double v : vals) st.push(v);
    text += std::to_string(round) + ' ' + format_double(st.mean());
    if (multi) text += ' ' + format_double(vals.size() > 1 ? st.stddev() : 0.0);
    text += '\n';
  }
  PlotFiles files{out_path, out_path};
  files.script.replace_extension(".gp");
  write_text_file(files.data, text);
  std::string gp = "# gnuplot script\nset xlabel 'round'\nset ylabel '" + std::string(metric) + "'\n";
  if (x_scale == AxisScale::log) gp += "set logscale x\n";
  if (log_y) gp += "set logscale y\n";
  const std::string name = files.data.filename().string();
  gp += multi ? "plot '" + name + "' using 1:2:3 with yerrorlines title '" + std::string(metric) + "'\n"
              : "plot '" + name + "' using 1:2 with lines title '" + std::string(metric) + "'\n";
  write_text_file(files.script, gp);
  return files;
}

/// Horizons 1..T_max thinned to roughly `points` log-spaced values (always
/// including both ends).
inline std::vector<std::size_t> log_spaced_horizons(std::size_t T_max, std::size_t points = 400) {
  std::vector<std::size_t> out;
  if (T_max == 0) return out;
  for (std::size_t k = 0; k < points; ++k) {
    const double x = std::pow(static_cast<double>(T_max), static_cast<double>(k) / static_cast<double>(points - 1));
    const auto T = static_cast<std::size_t>(std::llround(x));
    if (out.empty() || T > out.back()) out.push_back(std::min(T, T_max));
  }
  if (out.back() != T_max) out.push_back(T_max);
  return out;
}

/// One series file per (δ1, δ2) pair with a1 = a2 = 1.
inline std::vector<std::filesystem::path> emit_lemma1_sequences(const std::vector<std::pair<double, double>>& pairs,
                                                                std::size_t T_max,
                                                                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  std::string gp = "# gnuplot script\nset logscale xy\nset xlabel 'T'\nplot ";
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [d1, d2] = pairs[k];
    const auto values = lemma1_series(1.0, d1, 1.0, d2, T_max);
    std::string text = "# T partial_sum\n";
    for (std::size_t T : log_spaced_horizons(T_max)) text += std::to_string(T) + ' ' + format_double(values[T - 1]) + '\n';
    const auto path = dir / ("lemma1_" + format_double(d1) + "_" + format_double(d2) + ".dat");
    write_text_file(path, text);
    files.push_back(path);
    gp += (k ? ", '" : "'") + path.filename().string() + "' using 1:2 with lines title '(" + format_double(d1) + "," +
          format_double(d2) + ")'";
  }
  gp += '\n';
  write_text_file(dir / "lemma1.gp", gp);
  return files;
}

}  // namespace airfl::harness

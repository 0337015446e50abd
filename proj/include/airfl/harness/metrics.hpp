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

// Long-format metric tables and their CSV encoding. Floats are written with
// the shortest representation that parses back to the same double.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "airfl/errors.hpp"
#include "airfl/fedalgos.hpp"

namespace airfl::harness {

inline constexpr std::array<std::string_view, 8> kMetricNames{
    "loss", "gap", "grad_sq_norm", "lr", "beta", "mae_sq_norm", "mae_bias_norm", "test_accuracy"};

inline bool is_metric(std::string_view name) {
  return std::find(kMetricNames.begin(), kMetricNames.end(), name) != kMetricNames.end();
}

inline std::size_t metric_index(std::string_view name) {
  const auto it = std::find(kMetricNames.begin(), kMetricNames.end(), name);
  if (it == kMetricNames.end()) throw ParameterError("unknown metric '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - kMetricNames.begin());
}

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("malformed number '" + std::string(s) + "'", 0);
  }
  return x;
}

struct MetricRow {
  std::size_t run_id = 0;
  std::size_t round = 0;
  std::string metric;
  double value = 0.0;
};

/// Rows are kept sorted by (run_id, round, metric vocabulary order).
class MetricTable {
 public:
  void add(std::size_t run_id, std::size_t round, std::string_view metric, double value) {
    rows_.push_back({run_id, round, std::string(metric), value});
  }

  /// Appends one row per (round, metric) of a trace. gap and test_accuracy
  /// appear only when the trace carries them.
  void add_trace(std::size_t run_id, const RunTrace& trace) {
    for (const auto& r : trace.rounds) {
      add(run_id, r.round, "loss", r.loss);
      if (trace.has_gap) add(run_id, r.round, "gap", r.gap);
      add(run_id, r.round, "grad_sq_norm", r.grad_sq_norm);
      add(run_id, r.round, "lr", r.lr);
      add(run_id, r.round, "beta", r.beta);
      add(run_id, r.round, "mae_sq_norm", r.mae_sq_norm);
      add(run_id, r.round, "mae_bias_norm", r.mae_bias_norm);
      if (trace.has_test_accuracy) add(run_id, r.round, "test_accuracy", r.test_accuracy);
    }
  }

  void sort() {
    std::stable_sort(rows_.begin(), rows_.end(), [](const MetricRow& a, const MetricRow& b) {
      return std::make_tuple(a.run_id, a.round, metric_index(a.metric)) <
             std::make_tuple(b.run_id, b.round, metric_index(b.metric));
    });
  }

  const std::vector<MetricRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }

  std::vector<std::size_t> run_ids() const {
    std::vector<std::size_t> ids;
    for (const auto& r : rows_) ids.push_back(r.run_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }

  /// Values of one metric for one run, indexed by position in round order.
  std::vector<std::pair<std::size_t, double>> series(std::size_t run_id, std::string_view metric) const {
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& r : rows_) {
      if (r.run_id == run_id && r.metric == metric) out.emplace_back(r.round, r.value);
    }
    return out;
  }

  std::string to_csv() const {
    std::string out = "run_id,round,metric,value\n";
    for (const auto& r : rows_) {
      out += std::to_string(r.run_id);
      out += ',';
      out += std::to_string(r.round);
      out += ',';
      out += r.metric;
      out += ',';
      out += format_double(r.value);
      out += '\n';
    }
    return out;
  }

  static MetricTable from_csv(std::string_view text) {
    MetricTable t;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      const std::size_t line_start = pos;
      pos = end + 1;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line_no++ == 0) {
        if (line != "run_id,round,metric,value") throw FormatError("unexpected metric table header", 0);
        continue;
      }
      if (line.empty()) continue;
      std::array<std::string_view, 4> f{};
      std::size_t start = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t comma = k < 3 ? line.find(',', start) : line.size();
        if (comma == std::string_view::npos) throw FormatError("metric row needs four fields", line_start);
        f[k] = line.substr(start, comma - start);
        start = comma + 1;
      }
      MetricRow row;
      auto parse_uint = [&](std::string_view s) {
        std::size_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("malformed integer", line_start);
        return v;
      };
      row.run_id = parse_uint(f[0]);
      row.round = parse_uint(f[1]);
      row.metric = std::string(f[2]);
      if (!is_metric(row.metric)) throw FormatError("unknown metric '" + row.metric + "'", line_start);
      row.value = parse_double(f[3]);
      t.rows_.push_back(std::move(row));
    }
    return t;
  }

 private:
  std::vector<MetricRow> rows_;
};

/// Cross-run mean and sample standard deviation per (round, metric). Runs that
/// stopped early contribute only to the rounds they reached.
struct AggregateRow {
  std::size_t round = 0;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

inline std::vector<AggregateRow> aggregate(const MetricTable& table) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> groups;  // (round, metric idx)
  for (const auto& r : table.rows()) groups[{r.round, metric_index(r.metric)}].push_back(r.value);
  std::vector<AggregateRow> out;
  out.reserve(groups.size());
  for (const auto& [key, vals] : groups) {
    AggregateRow a;
    a.round = key.first;
    a.metric = std::string(kMetricNames[key.second]);
    a.count = vals.size();
    double sum = 0.0;
    for (double v : vals) sum += v;
    a.mean = sum / static_cast<double>(vals.size());
    double ss = 0.0;
    for (double v : vals) ss += (v - a.mean) * (v - a.mean);
    a.stddev = vals.size() > 1 ? std::sqrt(ss / static_cast<double>(vals.size() - 1)) : 0.0;
    out.push_back(std::move(a));
  }
  return out;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "round,metric,mean,std,count\n";
  for (const auto& a : rows) {
    out += std::to_string(a.round) + ',' + a.metric + ',' + format_double(a.mean) + ',' + format_double(a.stddev) + ',' +
           std::to_string(a.count) + '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace airfl::harness

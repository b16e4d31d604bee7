// Copyright 2026 The partsel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <charconv>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "partsel/csv.hpp"

namespace partsel::report {

/// One mechanism run, with every parameter echoed as resolved. A report is
/// self-contained: re-running its mechanism with the echoed parameters and
/// seed on the named dataset reproduces partitions_released exactly.
struct RunReport {
  std::string mechanism;
  std::string dataset;
  std::optional<double> rho;        // zCDP family
  std::optional<double> delta;
  std::optional<double> epsilon;    // DP family (greedy frequency mechanism)
  std::optional<double> delta_dp;
  int delta0 = 0;
  int iterations = 1;
  double ratio = 1.0;
  std::uint64_t seed = 0;
  int workers = 1;
  std::int64_t partitions_released = 0;
  std::int64_t elapsed_ms = 0;
  std::vector<std::int64_t> per_iteration_counts;
  int engine_stages = 0;
  std::optional<double> zcdp_rho;    // zCDP equivalence echo, when requested
  std::optional<double> zcdp_delta;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

inline std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

inline std::string join_counts(const std::vector<std::int64_t>& counts) {
  std::string out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (i) out.push_back(';');
    out += std::to_string(counts[i]);
  }
  return out;
}

inline std::vector<std::int64_t> split_counts(std::string_view s) {
  std::vector<std::int64_t> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t next = s.find(';', pos);
    if (next == std::string_view::npos) next = s.size();
    std::int64_t value = 0;
    std::from_chars(s.data() + pos, s.data() + next, value);
    out.push_back(value);
    pos = next + 1;
  }
  return out;
}

inline void append_json_string(std::string& out, std::string_view s) {
  out.push_back('"');
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out.push_back(c);
        }
    }
  }
  out.push_back('"');
}

}  // namespace detail

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> columns = {
      "mechanism",      "dataset",   "rho",
      "delta",          "epsilon",   "delta_dp",
      "delta0",         "iterations", "ratio",
      "seed",           "workers",   "partitions_released",
      "elapsed_ms",     "per_iteration_counts", "engine_stages",
      "zcdp_rho",       "zcdp_delta"};
  return columns;
}

inline std::string csv_header() {
  std::string out;
  csvio::append_row(out, csv_columns());
  out.pop_back();  // no trailing newline in the returned header
  return out;
}

inline std::string to_csv_row(const RunReport& r) {
  std::vector<std::string> fields = {
      r.mechanism,
      r.dataset,
      detail::format_optional(r.rho),
      detail::format_optional(r.delta),
      detail::format_optional(r.epsilon),
      detail::format_optional(r.delta_dp),
      std::to_string(r.delta0),
      std::to_string(r.iterations),
      detail::format_double(r.ratio),
      std::to_string(r.seed),
      std::to_string(r.workers),
      std::to_string(r.partitions_released),
      std::to_string(r.elapsed_ms),
      detail::join_counts(r.per_iteration_counts),
      std::to_string(r.engine_stages),
      detail::format_optional(r.zcdp_rho),
      detail::format_optional(r.zcdp_delta)};
  std::string out;
  csvio::append_row(out, fields);
  out.pop_back();
  return out;
}

inline RunReport from_csv_row(std::string_view row) {
  const std::vector<std::string> f = csvio::parse_row(row);
  if (f.size() != csv_columns().size())
    throw DataError("run report row has " + std::to_string(f.size()) +
                    " fields, expected " +
                    std::to_string(csv_columns().size()));
  RunReport r;
  r.mechanism = f[0];
  r.dataset = f[1];
  r.rho = detail::parse_optional(f[2]);
  r.delta = detail::parse_optional(f[3]);
  r.epsilon = detail::parse_optional(f[4]);
  r.delta_dp = detail::parse_optional(f[5]);
  r.delta0 = std::stoi(f[6]);
  r.iterations = std::stoi(f[7]);
  r.ratio = std::stod(f[8]);
  r.seed = std::stoull(f[9]);
  r.workers = std::stoi(f[10]);
  r.partitions_released = std::stoll(f[11]);
  r.elapsed_ms = std::stoll(f[12]);
  r.per_iteration_counts = detail::split_counts(f[13]);
  r.engine_stages = std::stoi(f[14]);
  r.zcdp_rho = detail::parse_optional(f[15]);
  r.zcdp_delta = detail::parse_optional(f[16]);
  return r;
}

/// Flat JSON object; null for parameters that do not apply to the mechanism.
inline std::string to_json(const RunReport& r) {
  std::string out = "{";
  const auto field = [&](std::string_view key, const std::string& value,
                         bool quote = false) {
    if (out.size() > 1) out += ", ";
    detail::append_json_string(out, key);
    out += ": ";
    if (quote)
      detail::append_json_string(out, value);
    else
      out += value;
  };
  const auto opt = [&](std::string_view key, const std::optional<double>& v) {
    field(key, v ? detail::format_double(*v) : "null");
  };
  field("mechanism", r.mechanism, true);
  field("dataset", r.dataset, true);
  opt("rho", r.rho);
  opt("delta", r.delta);
  opt("epsilon", r.epsilon);
  opt("delta_dp", r.delta_dp);
  field("delta0", std::to_string(r.delta0));
  field("iterations", std::to_string(r.iterations));
  field("ratio", detail::format_double(r.ratio));
  field("seed", std::to_string(r.seed));
  field("workers", std::to_string(r.workers));
  field("partitions_released", std::to_string(r.partitions_released));
  field("elapsed_ms", std::to_string(r.elapsed_ms));
  std::string counts = "[";
  for (std::size_t i = 0; i < r.per_iteration_counts.size(); ++i) {
    if (i) counts += ", ";
    counts += std::to_string(r.per_iteration_counts[i]);
  }
  counts += "]";
  field("per_iteration_counts", counts);
  field("engine_stages", std::to_string(r.engine_stages));
  opt("zcdp_rho", r.zcdp_rho);
  opt("zcdp_delta", r.zcdp_delta);
  out += "}";
  return out;
}

}  // namespace partsel::report

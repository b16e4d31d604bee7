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
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "partsel/core.hpp"
#include "partsel/csv.hpp"
#include "partsel/rng.hpp"

namespace partsel::data {

inline constexpr std::uint64_t kStreamSynthetic = 0x73796e74;

/// Parameters of the skewed synthetic generator: per-user list lengths are
/// Pareto (shape > 1 keeps the mean finite), items are zeta-distributed
/// (parameter > 1 keeps the law normalizable). Duplicates within a user's
/// list are kept, so vocabulary counts are over raw draws' distinct values.
struct SyntheticSpec {
  std::size_t num_users = 0;
  double pareto_scale = 10.0;
  double pareto_shape = 1.16;
  double zeta_param = 1.1;
  std::uint64_t seed = 0;
};

enum class Format { kUserLines, kUserItemCsv };

/// Pareto(scale, shape) draw by inverse CDF; support is [scale, inf).
inline double pareto_sample(double scale, double shape, CounterRng& rng) {
  if (!(scale > 0.0) || !(shape > 0.0))
    throw std::invalid_argument("pareto_sample: scale and shape must be positive");
  return scale * std::pow(rng.next_unit(), -1.0 / shape);
}

/// Zeta(s) draw, P(k) proportional to k^-s, by Devroye's rejection method
/// (exact; no truncation of the tail). Returns an integer-valued double:
/// for s near 1 the tail is heavy enough that draws above 2^64 occur at a
/// noticeable rate, so a fixed-width integer cannot represent exact draws.
/// Values are exact below 2^53 and integer-valued at double resolution above.
inline double zeta_sample(double s, CounterRng& rng) {
  if (!(s > 1.0))
    throw std::invalid_argument("zeta_sample: parameter must exceed 1");
  const double sm1 = s - 1.0;
  const double b = std::exp2(sm1);
  for (;;) {
    const double u = rng.next_unit();
    const double v = rng.next_unit();
    const double x = std::floor(std::pow(u, -1.0 / sm1));
    const double t = std::pow(1.0 + 1.0 / x, sm1);
    if (v * x * (t - 1.0) / (b - 1.0) <= t / b) return x;
  }
}

namespace detail {

inline void append_item_token(std::string& out, double value) {
  if (value < 9007199254740992.0) {  // exact integer range of double
    char buf[24];
    const auto r = std::to_chars(buf, buf + sizeof(buf),
                                 static_cast<std::uint64_t>(value));
    out.append(buf, r.ptr);
  } else {
    char buf[360];
    const int n = std::snprintf(buf, sizeof(buf), "%.0f", value);
    out.append(buf, static_cast<std::size_t>(n));
  }
}

inline CounterRng user_stream(const SyntheticSpec& spec, std::size_t user) {
  return CounterRng(
      derive_key(derive_key(spec.seed, kStreamSynthetic), user));
}

inline void validate(const SyntheticSpec& spec) {
  if (!(spec.pareto_shape > 1.0))
    throw std::invalid_argument("synthetic: pareto shape must exceed 1");
  if (!(spec.zeta_param > 1.0))
    throw std::invalid_argument("synthetic: zeta parameter must exceed 1");
  if (!(spec.pareto_scale > 0.0))
    throw std::invalid_argument("synthetic: pareto scale must be positive");
}

// Writes one user's line (tokens separated by single spaces, LF-terminated).
inline void append_user_line(const SyntheticSpec& spec, std::size_t user,
                             std::string& out) {
  CounterRng rng = user_stream(spec, user);
  const auto length = static_cast<std::size_t>(
      std::floor(pareto_sample(spec.pareto_scale, spec.pareto_shape, rng)));
  for (std::size_t j = 0; j < length; ++j) {
    if (j) out.push_back(' ');
    append_item_token(out, zeta_sample(spec.zeta_param, rng));
  }
  out.push_back('\n');
}

}  // namespace detail

/// In-memory synthetic dataset. User ids are 1-based decimal indices,
/// matching what loading the file form produces, so both paths yield
/// identical mechanism results for the same spec.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  detail::validate(spec);
  Dataset d;
  std::string token;
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    CounterRng rng = detail::user_stream(spec, u);
    const auto length = static_cast<std::size_t>(std::floor(
        pareto_sample(spec.pareto_scale, spec.pareto_shape, rng)));
    std::vector<ItemId> items;
    items.reserve(length);
    for (std::size_t j = 0; j < length; ++j) {
      token.clear();
      detail::append_item_token(token, zeta_sample(spec.zeta_param, rng));
      items.push_back(d.intern(token));
    }
    d.add_user(std::to_string(u + 1), std::move(items));
  }
  return d;
}

/// Streams a synthetic dataset to disk in the user_lines format without
/// materializing it. Line content is a pure function of (spec, user index),
/// so equal specs produce byte-identical files; blocks of users can be
/// rendered on parallel workers and written in order.
inline void generate_synthetic_file(const SyntheticSpec& spec,
                                    const std::filesystem::path& path) {
  detail::validate(spec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  constexpr std::size_t kBlock = 8192;
  std::string buffer;
  for (std::size_t base = 0; base < spec.num_users; base += kBlock) {
    buffer.clear();
    const std::size_t end = std::min(base + kBlock, spec.num_users);
    for (std::size_t u = base; u < end; ++u)
      detail::append_user_line(spec, u, buffer);
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

namespace detail {

inline Dataset load_user_lines(std::istream& in) {
  Dataset d;
  std::string line;
  std::size_t line_number = 0;
  std::vector<ItemId> items;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    items.clear();
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      std::size_t start = pos;
      while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
      if (pos > start)
        items.push_back(d.intern(std::string_view(line).substr(start, pos - start)));
    }
    d.add_user(std::to_string(line_number), items);
  }
  return d;
}

inline Dataset load_user_item_csv(std::istream& in, bool has_header) {
  std::ostringstream slurp;
  slurp << in.rdbuf();
  const std::string text = slurp.str();

  Dataset d;
  std::unordered_map<std::string, std::size_t> slot_of;
  std::vector<std::string> order;
  std::vector<std::vector<ItemId>> grouped;
  bool skipped_header = !has_header;
  csvio::for_each_record(text, [&](std::size_t line,
                                   std::vector<std::string>& fields) {
    if (!skipped_header) {
      skipped_header = true;
      return;
    }
    if (fields.size() != 2)
      throw ParseError("expected two fields (user_id, item), got " +
                           std::to_string(fields.size()),
                       line);
    auto [it, inserted] = slot_of.try_emplace(fields[0], grouped.size());
    if (inserted) {
      grouped.emplace_back();
      order.push_back(fields[0]);
    }
    grouped[it->second].push_back(d.intern(fields[1]));
  });
  for (std::size_t i = 0; i < order.size(); ++i)
    d.add_user(std::move(order[i]), std::move(grouped[i]));
  return d;
}

}  // namespace detail

/// Loads a dataset from disk.
///
/// user_lines: one user per line, whitespace-separated item tokens; the
/// 1-based line number becomes the user id. Empty files are empty datasets.
///
/// user_item_csv: RFC 4180 records of (user_id, item); rows group by user
/// preserving file order within each user, users ordered by first
/// appearance. An optional header row is skipped when has_header is set.
inline Dataset load_dataset(const std::filesystem::path& path, Format format,
                            bool has_header = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset: " + path.string());
  return format == Format::kUserLines
             ? detail::load_user_lines(in)
             : detail::load_user_item_csv(in, has_header);
}

/// Dataset made of the first `count` users of `d` (re-interned, so the
/// vocabulary covers only the prefix).
inline Dataset prefix_dataset(const Dataset& d, std::size_t count) {
  Dataset out;
  const std::size_t n = std::min(count, d.user_count());
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<ItemId> items;
    items.reserve(d.items_of(u).size());
    for (ItemId id : d.items_of(u)) items.push_back(out.intern(d.token(id)));
    out.add_user(std::string(d.user_id(u)), std::move(items));
  }
  return out;
}

}  // namespace partsel::data

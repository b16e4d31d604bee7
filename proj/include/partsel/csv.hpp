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

#include <string>
#include <string_view>
#include <vector>

#include "partsel/core.hpp"

namespace partsel::csvio {

/// RFC 4180 field encoding: quoted only when needed.
inline std::string encode_field(std::string_view field) {
  const bool needs_quotes =
      field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void append_row(std::string& out,
                       const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += encode_field(fields[i]);
  }
  out.push_back('\n');
}

/// Streams RFC 4180 records out of `text`, invoking
/// on_record(first_line_number, fields) per record. Handles quoted fields,
/// escaped quotes, CRLF, and newlines inside quotes. Blank records between
/// newlines are skipped.
template <class OnRecord>
void for_each_record(std::string_view text, OnRecord&& on_record) {
  std::vector<std::string> fields;
  std::string field;
  std::size_t line = 1;
  std::size_t record_line = 1;
  bool in_quotes = false;
  bool field_started = false;

  const auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  const auto end_record = [&] {
    if (field_started || !field.empty() || !fields.empty()) {
      end_field();
      on_record(record_line, fields);
      fields.clear();
    }
    record_line = line;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        field_started = true;  // a field follows the comma, possibly empty
        break;
      case '\r':
        break;  // swallowed; the following \n ends the record
      case '\n':
        ++line;
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
        break;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", record_line);
  end_record();
}

/// Splits one single-line CSV row (no embedded newlines) into fields.
inline std::vector<std::string> parse_row(std::string_view row) {
  std::vector<std::string> out;
  for_each_record(row, [&](std::size_t, std::vector<std::string>& fields) {
    out = fields;
  });
  return out;
}

}  // namespace partsel::csvio

/*
 * Copyright 2026 The modfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MODFEAT_DATA_CSV_HPP
#define MODFEAT_DATA_CSV_HPP

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "modfeat/data/dataset.hpp"
#include "modfeat/errors.hpp"

namespace modfeat {

/// Optional expectations checked while loading.
struct CsvSchema {
  std::optional<std::size_t> input_dim;
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

/// Shortest decimal representation that round-trips.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Reads `domain_id,class_id,f0,...` rows. Coordinate roles are unknown for
/// external data, so signal_dims and noise_dims stay empty.
inline DomainDataset load_csv(std::istream& in, const CsvSchema& schema = {}) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_commas(line);
  if (header.size() < 3 || header[0] != "domain_id" || header[1] != "class_id") {
    throw SchemaError("csv: header must be domain_id,class_id,f0,...");
  }
  const std::size_t input_dim = header.size() - 2;
  for (std::size_t k = 0; k < input_dim; ++k) {
    if (header[k + 2] != "f" + std::to_string(k)) throw SchemaError("csv: unexpected header column " + std::string(header[k + 2]));
  }
  if (schema.input_dim && *schema.input_dim != input_dim) {
    throw SchemaError("csv: expected " + std::to_string(*schema.input_dim) + " features, header has " +
                      std::to_string(input_dim));
  }

  DomainDataset ds;
  ds.input_dim = input_dim;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != input_dim + 2) {
      throw SchemaError("csv: line " + std::to_string(line_no) + " has " + std::to_string(cells.size() - 2) +
                        " features, expected " + std::to_string(input_dim));
    }
    Sample s;
    if (!detail::parse_number(cells[0], s.domain_id) || s.domain_id < 0)
      throw ParseError("invalid domain_id '" + std::string(cells[0]) + "'", line_no);
    if (!detail::parse_number(cells[1], s.class_id) || s.class_id < 0)
      throw ParseError("invalid class_id '" + std::string(cells[1]) + "'", line_no);
    s.features.resize(input_dim);
    for (std::size_t k = 0; k < input_dim; ++k) {
      if (!detail::parse_number(cells[k + 2], s.features[k]) || !std::isfinite(s.features[k]))
        throw ParseError("invalid feature f" + std::to_string(k) + " '" + std::string(cells[k + 2]) + "'", line_no);
    }
    ds.num_classes = std::max(ds.num_classes, s.class_id + 1);
    ds.num_domains = std::max(ds.num_domains, s.domain_id + 1);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw SchemaError("csv: no data rows");
  return ds;
}

inline DomainDataset load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw SchemaError("csv: cannot open " + path);
  return load_csv(in, schema);
}

inline void save_csv(std::ostream& out, const DomainDataset& ds) {
  out << "domain_id,class_id";
  for (std::size_t k = 0; k < ds.input_dim; ++k) out << ",f" << k;
  out << '\n';
  for (const Sample& s : ds.samples) {
    out << s.domain_id << ',' << s.class_id;
    for (double v : s.features) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const DomainDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("csv: cannot write " + path);
  save_csv(out, ds);
}

}  // namespace modfeat

#endif  // MODFEAT_DATA_CSV_HPP

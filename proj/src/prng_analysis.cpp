/*
 * Copyright 2026 The csetbench Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "csetbench/prng_analysis.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>

namespace csetbench {

BitSumTracker::BitSumTracker(std::span<const unsigned> bits)
    : bits_(bits.begin(), bits.end()), sums_(bits.size(), 0) {
  if (bits_.empty()) throw std::invalid_argument("bit set must not be empty");
  for (unsigned b : bits_)
    if (b > 63) throw std::invalid_argument("bit index out of [0, 63]: " + std::to_string(b));
}

void export_series_csv(std::span<const BitSumSeries> series, std::ostream& out) {
  if (series.empty()) throw std::invalid_argument("no series to export");
  const std::size_t steps = series.front().sums.size();
  for (const auto& s : series)
    if (s.sums.size() != steps) throw std::invalid_argument("series lengths differ");

  out << "step";
  for (const auto& s : series) out << ",bit" << s.bit_index;
  out << '\n';
  std::string row;
  for (std::size_t k = 0; k < steps; ++k) {
    row.clear();
    row += std::to_string(k + 1);
    for (const auto& s : series) {
      row += ',';
      row += std::to_string(s.sums[k]);
    }
    row += '\n';
    out << row;
  }
  if (!out) throw std::runtime_error("failed writing bit-sum CSV");
}

void export_series_csv(std::span<const BitSumSeries> series,
                       const std::filesystem::path& path) {
  try {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    export_series_csv(series, out);
    out.close();
    if (!out) throw std::runtime_error("failed closing " + path.string());
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(path, ec);
    throw;
  }
}

namespace {

template <class T>
T parse_number(std::string_view field) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw std::runtime_error("malformed CSV field: '" + std::string(field) + "'");
  return value;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::vector<BitSumSeries> parse_series_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV");
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "step") throw std::runtime_error("bad CSV header");
  std::vector<BitSumSeries> series(header.size() - 1);
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i].substr(0, 3) != "bit") throw std::runtime_error("bad CSV column name");
    series[i - 1].bit_index = parse_number<unsigned>(header[i].substr(3));
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) throw std::runtime_error("ragged CSV row");
    for (std::size_t i = 1; i < fields.size(); ++i)
      series[i - 1].sums.push_back(parse_number<std::int64_t>(fields[i]));
  }
  for (auto& s : series) s.sample_count = s.sums.size();
  return series;
}

}  // namespace csetbench

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

#pragma once

/// Bitwise running-sum analysis of generator output.
///
/// For each watched bit n the running sum moves +1 when bit n of an output is
/// set and -1 otherwise. A balanced bit wanders like a random walk; a
/// patterned bit shows bounded oscillation or drift.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "csetbench/prng.hpp"

namespace csetbench {

struct BitSumSeries {
  unsigned bit_index = 0;
  std::vector<std::int64_t> sums;  // one entry per draw
  std::uint64_t sample_count = 0;

  std::int64_t final_sum() const noexcept { return sums.empty() ? 0 : sums.back(); }
};

/// Running sums without the recorded history; used for long runs where the
/// full series would not fit in memory.
class BitSumTracker {
 public:
  explicit BitSumTracker(std::span<const unsigned> bits);

  void observe(std::uint64_t value) noexcept {
    for (std::size_t i = 0; i < bits_.size(); ++i)
      sums_[i] += ((value >> bits_[i]) & 1U) ? 1 : -1;
    ++samples_;
  }

  std::span<const unsigned> bits() const noexcept { return bits_; }
  std::span<const std::int64_t> sums() const noexcept { return sums_; }
  std::uint64_t samples() const noexcept { return samples_; }

 private:
  std::vector<unsigned> bits_;
  std::vector<std::int64_t> sums_;
  std::uint64_t samples_ = 0;
};

template <BitSource64 G>
std::vector<BitSumSeries> run_bit_sums(G& g, std::uint64_t count,
                                       std::span<const unsigned> bits) {
  if (count == 0) throw std::invalid_argument("bit-sum run needs at least one draw");
  BitSumTracker tracker(bits);  // validates the bit set
  std::vector<BitSumSeries> out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    out[i].bit_index = bits[i];
    out[i].sums.reserve(count);
    out[i].sample_count = count;
  }
  for (std::uint64_t k = 0; k < count; ++k) {
    tracker.observe(g.next_u64());
    const auto sums = tracker.sums();
    for (std::size_t i = 0; i < sums.size(); ++i) out[i].sums.push_back(sums[i]);
  }
  return out;
}

/// Fraction of consecutive output pairs whose low bits differ.
template <BitSource64 G>
double parity_alternation_score(G& g, std::uint64_t count) {
  if (count < 2) throw std::invalid_argument("parity score needs at least two draws");
  std::uint64_t prev = g.next_u64() & 1U;
  std::uint64_t flips = 0;
  for (std::uint64_t k = 1; k < count; ++k) {
    const std::uint64_t cur = g.next_u64() & 1U;
    flips += cur ^ prev;
    prev = cur;
  }
  return static_cast<double>(flips) / static_cast<double>(count - 1);
}

/// Header `step,bit<i>,...` then one row per draw. Series must be non-empty
/// and equally long.
void export_series_csv(std::span<const BitSumSeries> series, std::ostream& out);

/// Writes to `path`; a partially written file is removed on failure.
void export_series_csv(std::span<const BitSumSeries> series,
                       const std::filesystem::path& path);

std::vector<BitSumSeries> parse_series_csv(std::istream& in);

}  // namespace csetbench

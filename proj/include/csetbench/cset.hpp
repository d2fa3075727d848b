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

#include <atomic>
#include <cstdint>
#include <limits>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csetbench/prng.hpp"
#include "csetbench/reclamation.hpp"

namespace csetbench {

/// Wide accumulators: a checksum mismatch must never be hidden by wraparound.
using WideSum = __int128;

std::string to_string(WideSum v);
WideSum parse_wide(std::string_view text);

/// Keys at or above this value are reserved for tree sentinels.
inline constexpr Key kMaxUserKey = std::numeric_limits<Key>::max() - 3;

/// Result of a quiescent walk over a set.
struct StructureAudit {
  bool ok = true;
  std::string problem;  // first violation found, empty when ok
  std::uint64_t key_count = 0;
  WideSum key_sum = 0;
  std::uint64_t internal_nodes = 0;
  std::uint64_t leaf_nodes = 0;  // including sentinel leaves
};

/// Linearizable set of keys. All three operations may be called from any
/// number of threads concurrently; the quiescent-only members may not.
class ConcurrentSet {
 public:
  virtual ~ConcurrentSet() = default;

  virtual bool contains(Key k) = 0;
  virtual bool insert(Key k) = 0;
  virtual bool remove(Key k) = 0;

  virtual std::string_view name() const noexcept = 0;

  /// Quiescent only.
  virtual StructureAudit audit() const = 0;
  /// Quiescent only. Sorted ascending.
  virtual std::vector<Key> keys() const = 0;

  virtual EpochManager& reclaimer() noexcept = 0;

  /// Fault injection: remove() reports success for a present key without
  /// unlinking it. May be toggled while quiescent.
  void set_skip_unlink(bool on) noexcept { skip_unlink_.store(on, std::memory_order_relaxed); }
  bool skip_unlink() const noexcept { return skip_unlink_.load(std::memory_order_relaxed); }

 protected:
  std::atomic<bool> skip_unlink_{false};
};

/// Single-threaded oracle with exact set semantics.
class SequentialReferenceSet {
 public:
  bool contains(Key k) const { return keys_.contains(k); }
  bool insert(Key k) { return keys_.insert(k).second; }
  bool remove(Key k) { return keys_.erase(k) == 1; }

  std::size_t size() const noexcept { return keys_.size(); }
  std::vector<Key> keys() const { return {keys_.begin(), keys_.end()}; }
  WideSum key_sum() const;

 private:
  std::set<Key> keys_;
};

/// Per-thread record of effective updates only.
struct ChecksumLedger {
  WideSum inserted_sum = 0;
  WideSum deleted_sum = 0;
  std::uint64_t inserted_count = 0;
  std::uint64_t deleted_count = 0;

  void record_insert(Key k) noexcept {
    inserted_sum += k;
    ++inserted_count;
  }
  void record_delete(Key k) noexcept {
    deleted_sum += k;
    ++deleted_count;
  }

  ChecksumLedger& operator+=(const ChecksumLedger& o) noexcept {
    inserted_sum += o.inserted_sum;
    deleted_sum += o.deleted_sum;
    inserted_count += o.inserted_count;
    deleted_count += o.deleted_count;
    return *this;
  }
};

struct PrefillBaseline {
  WideSum key_sum = 0;
  std::uint64_t count = 0;
};

struct ValidationReport {
  WideSum final_sum = 0;
  WideSum expected_sum = 0;
  std::uint64_t final_count = 0;
  WideSum expected_count = 0;
  bool structure_ok = true;
  std::string structure_problem;

  bool checksum_match() const noexcept { return final_sum == expected_sum; }
  bool count_match() const noexcept { return static_cast<WideSum>(final_count) == expected_count; }
  bool pass() const noexcept { return structure_ok && checksum_match() && count_match(); }
};

/// Compares a full traversal of `set` against prefill + inserted - deleted.
/// Must run after all mutators have stopped.
ValidationReport validate_checksum(std::span<const ChecksumLedger> ledgers,
                                   const PrefillBaseline& prefill, const ConcurrentSet& set);

}  // namespace csetbench

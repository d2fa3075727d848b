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

/// Epoch-based reclamation with a leak mode.
///
/// A node retired while the global epoch is e is freed once the global epoch
/// reaches e + 2, which requires every thread that was inside a critical
/// section at retirement to have left it. Threads are registered lazily on
/// first use; each registration leases one slot until the thread exits.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

namespace csetbench {

enum class ReclaimMode : std::uint8_t { kNone, kEpoch };

std::string_view to_string(ReclaimMode mode) noexcept;
std::optional<ReclaimMode> parse_reclaim_mode(std::string_view name) noexcept;

struct ReclamationCounters {
  std::uint64_t allocated = 0;
  std::uint64_t retired = 0;
  std::uint64_t freed = 0;
  std::int64_t live_estimate = 0;  // allocated - freed
  std::uint64_t epoch = 0;
  std::uint64_t advances = 0;
  std::uint64_t stalls = 0;        // advance attempts blocked by a lagging thread
  std::uint64_t max_pending = 0;   // largest per-thread backlog seen
  std::uint64_t max_epoch_batch = 0;  // most nodes one thread retired in one epoch
};

struct MemoryReport {
  ReclamationCounters counters;
  std::optional<std::uint64_t> peak_rss_bytes;  // nullopt when the OS cannot say
};

/// Process-wide peak resident set size in bytes.
std::optional<std::uint64_t> peak_rss_bytes() noexcept;

class EpochManager {
 public:
  static constexpr unsigned kDefaultAdvanceEvery = 64;
  static constexpr std::size_t kDefaultMaxThreads = 1024;

  explicit EpochManager(ReclaimMode mode, unsigned advance_every = kDefaultAdvanceEvery,
                        std::size_t max_threads = kDefaultMaxThreads);
  ~EpochManager();

  EpochManager(const EpochManager&) = delete;
  EpochManager& operator=(const EpochManager&) = delete;

  void enter_critical();
  void exit_critical() noexcept;

  class Guard {
   public:
    explicit Guard(EpochManager& m) : m_(&m) { m_->enter_critical(); }
    ~Guard() { m_->exit_critical(); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    EpochManager* m_;
  };

  Guard guard() { return Guard(*this); }

  template <class T>
  void retire(T* node) {
    retire_raw(node, [](void* p) { delete static_cast<T*>(p); });
  }
  void retire_raw(void* node, void (*deleter)(void*));

  /// Counts allocations for the live estimate; not needed for correctness.
  void note_alloc(std::uint64_t n = 1);

  /// One advance attempt, then frees whatever the caller's backlog allows.
  bool try_advance();

  /// Frees every pending node. Only valid when no thread is inside a critical
  /// section (after workers are joined).
  void drain();

  ReclamationCounters counters() const;
  MemoryReport memory_report() const;
  ReclaimMode mode() const noexcept { return mode_; }

 private:
  struct Retired {
    void* ptr;
    void (*deleter)(void*);
  };
  struct Slot;
  friend struct LeaseTable;

  static constexpr std::uint64_t kQuiescent = ~std::uint64_t{0};

  Slot& local_slot();
  Slot& acquire_slot();
  void release_slot(Slot& slot) noexcept;
  void collect(Slot& slot, std::uint64_t global) noexcept;
  void free_bin(Slot& slot, std::size_t idx) noexcept;
  void collect_orphans(std::uint64_t global) noexcept;

  const ReclaimMode mode_;
  const unsigned advance_every_;
  const std::uint64_t uid_;
  alignas(64) std::atomic<std::uint64_t> global_epoch_{0};
  alignas(64) std::atomic<std::uint64_t> advances_{0};
  std::atomic<std::uint64_t> stalls_{0};
  std::unique_ptr<Slot[]> slots_;
  std::size_t slot_count_;
  std::atomic<std::size_t> slot_hwm_{0};  // slots ever leased: [0, hwm)

  std::mutex orphan_mu_;
  struct Orphan {
    Retired node;
    std::uint64_t epoch;
  };
  std::vector<Orphan> orphans_;
  std::atomic<std::uint64_t> orphan_freed_{0};
};

}  // namespace csetbench

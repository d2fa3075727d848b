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

#include "csetbench/cset.hpp"
#include "csetbench/lockfree_bst.hpp"
#include "csetbench/reclamation.hpp"

namespace csetbench {

/// FIFO ticket lock packed into one word: high half is the next ticket to
/// hand out, low half the ticket now being served. The serving counter is
/// also the version: every acquisition bumps it once on release.
class TicketLock {
 public:
  struct Snapshot {
    std::uint64_t word;
    std::uint32_t next() const noexcept { return static_cast<std::uint32_t>(word >> 32); }
    std::uint32_t version() const noexcept { return static_cast<std::uint32_t>(word); }
    bool locked() const noexcept { return next() != version(); }
  };

  Snapshot snapshot() const noexcept { return {word_.load(std::memory_order_acquire)}; }

  /// Blocking FIFO acquire.
  void lock() noexcept;
  void unlock() noexcept;

  /// Acquires only if the lock is free and still at `version`, i.e. nobody
  /// has held it since the caller observed that version.
  bool try_lock_at(std::uint32_t version) noexcept {
    std::uint64_t expected = pack(version, version);
    return word_.compare_exchange_strong(expected, pack(version + 1, version),
                                         std::memory_order_acq_rel, std::memory_order_relaxed);
  }

 private:
  static constexpr std::uint64_t pack(std::uint32_t next, std::uint32_t serving) noexcept {
    return (static_cast<std::uint64_t>(next) << 32) | serving;
  }

  std::atomic<std::uint64_t> word_{0};
};

/// Tracks the depth of every lock a thread takes and counts acquisitions that
/// are not strictly deeper than the last one held. Off unless enabled.
class LockOrderChecker {
 public:
  static void enable(bool on) noexcept;
  static bool enabled() noexcept;
  static void on_acquire(unsigned depth) noexcept;
  static void on_release(unsigned depth) noexcept;
  static std::uint64_t violations() noexcept;
  static void reset() noexcept;
};

/// External BST with per-node ticket locks and optimistic traversal, in the
/// style of BST-TK.
///
/// Searches take no locks. Updates traverse optimistically, noting each
/// node's lock version before reading its child edge, then lock the parent
/// (insert) or grandparent and parent (remove) with try_lock_at(). A lock
/// that moved since the traversal read it means the edge may have changed, so
/// the operation restarts from the root. A removed parent is left locked
/// forever so late arrivals cannot validate against it.
class TicketBst final : public ConcurrentSet {
 public:
  static constexpr Key kInf0 = LockFreeBst::kInf0;
  static constexpr Key kInf1 = LockFreeBst::kInf1;
  static constexpr Key kInf2 = LockFreeBst::kInf2;

  explicit TicketBst(SetOptions options = {});
  ~TicketBst() override;

  TicketBst(const TicketBst&) = delete;
  TicketBst& operator=(const TicketBst&) = delete;

  bool contains(Key k) override;
  bool insert(Key k) override;
  bool remove(Key k) override;

  std::string_view name() const noexcept override { return "bst-tk"; }
  StructureAudit audit() const override;
  std::vector<Key> keys() const override;
  EpochManager& reclaimer() noexcept override { return reclaimer_; }

  /// Optimistic validations that failed and forced a restart.
  std::uint64_t restarts() const noexcept { return restarts_.load(std::memory_order_relaxed); }

 private:
  struct Node;

  EpochManager reclaimer_;
  Node* root_;
  std::atomic<std::uint64_t> restarts_{0};
};

}  // namespace csetbench

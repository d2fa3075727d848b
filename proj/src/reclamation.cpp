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

#include "csetbench/reclamation.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <array>
#include <cassert>
#include <stdexcept>
#include <unordered_map>

namespace csetbench {

std::string_view to_string(ReclaimMode mode) noexcept {
  return mode == ReclaimMode::kNone ? "none" : "epoch";
}

std::optional<ReclaimMode> parse_reclaim_mode(std::string_view name) noexcept {
  if (name == "none") return ReclaimMode::kNone;
  if (name == "epoch") return ReclaimMode::kEpoch;
  return std::nullopt;
}

std::optional<std::uint64_t> peak_rss_bytes() noexcept {
#if defined(__linux__)
  struct rusage usage {};
  if (::getrusage(RUSAGE_SELF, &usage) == 0 && usage.ru_maxrss > 0)
    return static_cast<std::uint64_t>(usage.ru_maxrss) * 1024;  // reported in KiB
#endif
  return std::nullopt;
}

struct alignas(64) EpochManager::Slot {
  std::atomic<std::uint64_t> announced{kQuiescent};
  std::atomic<bool> in_use{false};

  // owner-only below, except for the counters which are read by counters()
  bool active = false;
  unsigned since_advance = 0;
  std::uint64_t pending = 0;
  std::array<std::vector<Retired>, 3> bins;
  std::array<std::uint64_t, 3> bin_epoch{kQuiescent, kQuiescent, kQuiescent};

  std::atomic<std::uint64_t> allocated{0};
  std::atomic<std::uint64_t> retired{0};
  std::atomic<std::uint64_t> freed{0};
  std::atomic<std::uint64_t> max_pending{0};
  std::atomic<std::uint64_t> max_epoch_batch{0};
};

namespace {

// single-writer counter bump without a locked instruction
inline void bump(std::atomic<std::uint64_t>& c, std::uint64_t n = 1) noexcept {
  c.store(c.load(std::memory_order_relaxed) + n, std::memory_order_relaxed);
}

inline void raise_to(std::atomic<std::uint64_t>& c, std::uint64_t v) noexcept {
  if (v > c.load(std::memory_order_relaxed)) c.store(v, std::memory_order_relaxed);
}

std::atomic<std::uint64_t> next_uid{1};

// Live managers by uid. Never destroyed so thread-exit hooks can always use it.
struct Registry {
  std::mutex mu;
  std::unordered_map<std::uint64_t, EpochManager*> live;
};

Registry& registry() {
  static Registry* r = new Registry;
  return *r;
}

}  // namespace

/// Per-thread table of slot leases; releases them at thread exit.
struct LeaseTable {
  struct Lease {
    std::uint64_t uid;
    EpochManager::Slot* slot;
  };
  std::uint64_t last_uid = 0;
  EpochManager::Slot* last_slot = nullptr;
  std::vector<Lease> leases;

  ~LeaseTable() {
    auto& reg = registry();
    std::lock_guard lk(reg.mu);
    for (const auto& l : leases) {
      auto it = reg.live.find(l.uid);
      if (it != reg.live.end()) it->second->release_slot(*l.slot);
    }
  }
};

namespace {
thread_local LeaseTable t_leases;
}  // namespace

EpochManager::EpochManager(ReclaimMode mode, unsigned advance_every, std::size_t max_threads)
    : mode_(mode),
      advance_every_(std::max(1U, advance_every)),
      uid_(next_uid.fetch_add(1)),
      slots_(std::make_unique<Slot[]>(max_threads)),
      slot_count_(max_threads) {
  auto& reg = registry();
  std::lock_guard lk(reg.mu);
  reg.live.emplace(uid_, this);
}

EpochManager::~EpochManager() {
  {
    auto& reg = registry();
    std::lock_guard lk(reg.mu);
    reg.live.erase(uid_);
  }
  for (std::size_t i = 0; i < slot_count_; ++i)
    for (std::size_t b = 0; b < 3; ++b) free_bin(slots_[i], b);
  for (auto& o : orphans_) o.node.deleter(o.node.ptr);
}

EpochManager::Slot& EpochManager::local_slot() {
  LeaseTable& t = t_leases;
  if (t.last_uid == uid_) return *t.last_slot;
  for (const auto& l : t.leases) {
    if (l.uid == uid_) {
      t.last_uid = l.uid;
      t.last_slot = l.slot;
      return *l.slot;
    }
  }
  return acquire_slot();
}

EpochManager::Slot& EpochManager::acquire_slot() {
  LeaseTable& t = t_leases;
  auto& reg = registry();
  std::lock_guard lk(reg.mu);
  std::erase_if(t.leases, [&](const LeaseTable::Lease& l) { return !reg.live.contains(l.uid); });
  for (std::size_t i = 0; i < slot_count_; ++i) {
    bool expected = false;
    if (slots_[i].in_use.compare_exchange_strong(expected, true, std::memory_order_acq_rel)) {
      if (i + 1 > slot_hwm_.load(std::memory_order_relaxed))
        slot_hwm_.store(i + 1, std::memory_order_release);
      t.leases.push_back({uid_, &slots_[i]});
      t.last_uid = uid_;
      t.last_slot = &slots_[i];
      return slots_[i];
    }
  }
  throw std::runtime_error("epoch manager out of thread slots");
}

void EpochManager::release_slot(Slot& slot) noexcept {
  {
    std::lock_guard lk(orphan_mu_);
    for (std::size_t b = 0; b < 3; ++b) {
      for (const auto& r : slot.bins[b]) orphans_.push_back({r, slot.bin_epoch[b]});
      slot.bins[b].clear();
      slot.bins[b].shrink_to_fit();
      slot.bin_epoch[b] = kQuiescent;
    }
  }
  slot.pending = 0;
  slot.active = false;
  slot.since_advance = 0;
  slot.announced.store(kQuiescent, std::memory_order_release);
  slot.in_use.store(false, std::memory_order_release);
}

void EpochManager::enter_critical() {
  if (mode_ == ReclaimMode::kNone) return;
  Slot& s = local_slot();
  assert(!s.active && "nested enter_critical");
  s.active = true;
  s.announced.store(global_epoch_.load(std::memory_order_seq_cst), std::memory_order_seq_cst);
  std::atomic_thread_fence(std::memory_order_seq_cst);
}

void EpochManager::exit_critical() noexcept {
  if (mode_ == ReclaimMode::kNone) return;
  Slot& s = local_slot();
  s.announced.store(kQuiescent, std::memory_order_release);
  s.active = false;
}

void EpochManager::note_alloc(std::uint64_t n) { bump(local_slot().allocated, n); }

void EpochManager::retire_raw(void* node, void (*deleter)(void*)) {
  Slot& s = local_slot();
  bump(s.retired);
  if (mode_ == ReclaimMode::kNone) return;  // leaked on purpose

  std::atomic_thread_fence(std::memory_order_seq_cst);
  const std::uint64_t e = global_epoch_.load(std::memory_order_seq_cst);
  const std::size_t idx = e % 3;
  if (s.bin_epoch[idx] != e) {
    free_bin(s, idx);  // tagged e-3 or older
    s.bin_epoch[idx] = e;
  }
  s.bins[idx].push_back({node, deleter});
  ++s.pending;
  raise_to(s.max_pending, s.pending);
  raise_to(s.max_epoch_batch, s.bins[idx].size());

  if (++s.since_advance >= advance_every_) {
    s.since_advance = 0;
    try_advance();
  }
}

bool EpochManager::try_advance() {
  if (mode_ == ReclaimMode::kNone) return false;
  std::uint64_t e = global_epoch_.load(std::memory_order_seq_cst);
  std::atomic_thread_fence(std::memory_order_seq_cst);
  bool all_caught_up = true;
  const std::size_t hwm = slot_hwm_.load(std::memory_order_acquire);
  for (std::size_t i = 0; i < hwm; ++i) {
    if (!slots_[i].in_use.load(std::memory_order_acquire)) continue;
    const std::uint64_t a = slots_[i].announced.load(std::memory_order_seq_cst);
    if (a != kQuiescent && a != e) {
      all_caught_up = false;
      break;
    }
  }
  bool advanced = false;
  if (all_caught_up) {
    advanced = global_epoch_.compare_exchange_strong(e, e + 1, std::memory_order_seq_cst);
    if (advanced) advances_.fetch_add(1, std::memory_order_relaxed);
  } else {
    stalls_.fetch_add(1, std::memory_order_relaxed);
  }
  const std::uint64_t now = global_epoch_.load(std::memory_order_seq_cst);
  collect(local_slot(), now);
  collect_orphans(now);
  return advanced;
}

void EpochManager::collect(Slot& slot, std::uint64_t global) noexcept {
  for (std::size_t b = 0; b < 3; ++b)
    if (slot.bin_epoch[b] != kQuiescent && slot.bin_epoch[b] + 2 <= global) free_bin(slot, b);
}

void EpochManager::free_bin(Slot& slot, std::size_t idx) noexcept {
  auto& bin = slot.bins[idx];
  if (bin.empty()) return;
  for (const auto& r : bin) r.deleter(r.ptr);
  bump(slot.freed, bin.size());
  slot.pending -= std::min<std::uint64_t>(slot.pending, bin.size());
  bin.clear();
}

void EpochManager::collect_orphans(std::uint64_t global) noexcept {
  std::unique_lock lk(orphan_mu_, std::try_to_lock);
  if (!lk.owns_lock() || orphans_.empty()) return;
  std::uint64_t freed = 0;
  std::erase_if(orphans_, [&](const Orphan& o) {
    if (o.epoch + 2 > global) return false;
    o.node.deleter(o.node.ptr);
    ++freed;
    return true;
  });
  orphan_freed_.fetch_add(freed, std::memory_order_relaxed);
}

void EpochManager::drain() {
  for (std::size_t i = 0; i < slot_count_; ++i) {
    if (slots_[i].announced.load(std::memory_order_acquire) != kQuiescent)
      throw std::logic_error("drain() while a thread is inside a critical section");
  }
  for (std::size_t i = 0; i < slot_count_; ++i)
    for (std::size_t b = 0; b < 3; ++b) free_bin(slots_[i], b);
  std::lock_guard lk(orphan_mu_);
  for (const auto& o : orphans_) o.node.deleter(o.node.ptr);
  orphan_freed_.fetch_add(orphans_.size(), std::memory_order_relaxed);
  orphans_.clear();
}

ReclamationCounters EpochManager::counters() const {
  ReclamationCounters c;
  for (std::size_t i = 0; i < slot_count_; ++i) {
    const Slot& s = slots_[i];
    c.allocated += s.allocated.load(std::memory_order_relaxed);
    c.retired += s.retired.load(std::memory_order_relaxed);
    c.freed += s.freed.load(std::memory_order_relaxed);
    c.max_pending = std::max(c.max_pending, s.max_pending.load(std::memory_order_relaxed));
    c.max_epoch_batch =
        std::max(c.max_epoch_batch, s.max_epoch_batch.load(std::memory_order_relaxed));
  }
  c.freed += orphan_freed_.load(std::memory_order_relaxed);
  c.live_estimate = static_cast<std::int64_t>(c.allocated) - static_cast<std::int64_t>(c.freed);
  c.epoch = global_epoch_.load(std::memory_order_relaxed);
  c.advances = advances_.load(std::memory_order_relaxed);
  c.stalls = stalls_.load(std::memory_order_relaxed);
  return c;
}

MemoryReport EpochManager::memory_report() const { return {counters(), peak_rss_bytes()}; }

}  // namespace csetbench

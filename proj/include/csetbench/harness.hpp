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

/// The centralized experiment loop.
///
/// One loop drives every registered set: prefill, start barrier, timed (or
/// fixed-count) per-thread workload, join, checksum validation, metrics.
/// Fault toggles reproduce known benchmark-design bugs on purpose.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "csetbench/cset.hpp"
#include "csetbench/prng.hpp"
#include "csetbench/reclamation.hpp"

namespace csetbench {

enum class PrefillStrategy : std::uint8_t { kInsertOnlySingle, kInsertOnlyParallel, kSteadyState };
enum class SplitPolicy : std::uint8_t { kRandomized, kEffectiveAlternating };
enum class OpKind : std::uint8_t { kSearch = 0, kInsert = 1, kDelete = 2 };

std::string_view to_string(PrefillStrategy s) noexcept;
std::optional<PrefillStrategy> parse_prefill_strategy(std::string_view name) noexcept;
std::string_view to_string(SplitPolicy p) noexcept;
std::optional<SplitPolicy> parse_split_policy(std::string_view name) noexcept;
std::string_view to_string(OpKind op) noexcept;

struct FaultToggles {
  bool shared_seed = false;                 // every thread seeded identically
  bool unsigned_last = false;               // update path degenerates to delete-only
  bool single_prng_for_key_and_op = false;  // one generator draws keys and ops
  bool skip_unlink = false;                 // deletes report success without unlinking

  bool any() const noexcept {
    return shared_seed || unsigned_last || single_prng_for_key_and_op || skip_unlink;
  }
  bool operator==(const FaultToggles&) const = default;
};

/// "none" or fault names joined with '+'.
std::string to_string(const FaultToggles& f);
/// Accepts "none", "" or a comma/plus-separated list. Throws std::invalid_argument.
FaultToggles parse_faults(std::string_view text);
std::span<const std::string_view> fault_names() noexcept;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  unsigned threads = 1;
  std::uint64_t duration_ms = 1000;
  double update_rate = 0.2;
  std::optional<double> insert_rate;  // independent rates; both or neither
  std::optional<double> delete_rate;
  std::uint64_t key_range = 2000;
  std::optional<std::uint64_t> initial;  // insert-only prefill target, default r/2
  PrefillStrategy prefill = PrefillStrategy::kSteadyState;
  std::optional<std::uint64_t> prefill_budget;  // steady-state op budget, default 100 r
  SplitPolicy split = SplitPolicy::kRandomized;
  RangeMode range_mode = RangeMode::kModulo;

  PrngKind prng = PrngKind::kMix64;
  std::uint64_t seed = 1;
  std::uint64_t reseed_interval = 0;
  EntropyKind entropy = EntropyKind::kOs;
  std::size_t pregen_length = 0;

  std::string ds = "lf-bst";
  ReclaimMode reclaim = ReclaimMode::kEpoch;
  bool pin_threads = false;
  unsigned pin_cpu_limit = 0;  // restrict pinning to the first N allowed CPUs; 0 = all

  std::optional<std::uint64_t> ops_per_thread;  // fixed-count mode, ignores duration
  bool capture_keys = false;                    // record every drawn key (fixed-count only)
  FaultToggles faults;

  double insert_probability() const noexcept;
  double delete_probability() const noexcept;
  std::uint64_t prefill_target() const noexcept;
  std::uint64_t steady_state_size() const noexcept;
  std::uint64_t effective_prefill_budget() const noexcept;
  GeneratorSpec generator_spec() const noexcept;

  /// Throws ConfigError describing the first problem found.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

struct alignas(64) ThreadStats {
  std::array<std::uint64_t, 3> attempted{};  // indexed by OpKind
  std::array<std::uint64_t, 3> effective{};
  ChecksumLedger ledger;
  int bound_cpu = -1;
  std::uint64_t finish_ns = 0;        // since run start, when the loop exited
  std::uint64_t stop_seen_ns = 0;     // since run start, when the stop flag was observed
  std::vector<Key> captured_keys;

  std::uint64_t total_attempted() const noexcept {
    return attempted[0] + attempted[1] + attempted[2];
  }
};

struct PrefillReport {
  PrefillStrategy strategy = PrefillStrategy::kSteadyState;
  std::uint64_t target = 0;
  std::uint64_t tolerance = 0;
  std::uint64_t final_size = 0;
  std::uint64_t max_size_seen = 0;
  std::uint64_t ops = 0;
  std::uint64_t checks = 0;
  bool converged = false;
  PrefillBaseline baseline;
};

class PrefillError : public std::runtime_error {
 public:
  PrefillError(const std::string& what, PrefillReport report)
      : std::runtime_error(what), report_(report) {}
  const PrefillReport& report() const noexcept { return report_; }

 private:
  PrefillReport report_;
};

struct PinReport {
  bool requested = false;
  bool applied = false;
  std::string warning;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ThreadStats> threads;
  std::uint64_t duration_ns = 0;
  std::uint64_t stop_signal_ns = 0;  // since run start; 0 in fixed-count mode
  std::uint64_t total_ops = 0;
  double throughput = 0.0;  // total_ops per second
  std::array<std::uint64_t, 3> attempted{};
  std::array<std::uint64_t, 3> effective{};
  PrefillReport prefill;
  ReclamationCounters reclamation;
  std::optional<std::uint64_t> peak_rss_bytes;
  ValidationReport validation;
  PinReport pinning;

  bool valid() const noexcept { return validation.pass(); }
};

/// The one throughput formula used everywhere results are produced or
/// re-checked.
double compute_throughput(std::uint64_t total_ops, std::uint64_t duration_ns) noexcept;

/// Tolerance used by the steady-state convergence test: 1% of the target, or
/// two standard deviations of the stationary size when that is larger.
std::uint64_t steady_state_tolerance(std::uint64_t key_range, double insert_fraction) noexcept;

/// State carried between updates by the effective-alternating policy.
struct UpdateSplitState {
  bool next_is_insert = true;
};

/// Picks insert or delete for an update that has already been selected.
/// Randomized policy consumes one draw from `g`.
template <BitSource64 G>
OpKind choose_update(UpdateSplitState& state, SplitPolicy policy, double insert_fraction,
                     const FaultToggles& faults, G& g) {
  if (faults.unsigned_last) return OpKind::kDelete;  // `last` can never go negative
  if (policy == SplitPolicy::kRandomized)
    return next_unit(g) < insert_fraction ? OpKind::kInsert : OpKind::kDelete;
  return state.next_is_insert ? OpKind::kInsert : OpKind::kDelete;
}

/// Alternation flips only when the update actually changed the set.
inline void record_update_outcome(UpdateSplitState& state, OpKind op, bool effective) noexcept {
  if (effective && op != OpKind::kSearch) state.next_is_insert = (op == OpKind::kDelete);
}

/// Key seeds for worker `thread_id`, honoring the shared-seed fault.
std::uint64_t worker_key_seed(const ExperimentConfig& cfg, unsigned thread_id) noexcept;
std::uint64_t worker_op_seed(const ExperimentConfig& cfg, unsigned thread_id) noexcept;

/// Populates an empty set per cfg.prefill. Throws PrefillError when a
/// steady-state prefill exhausts its op budget.
PrefillReport prefill(ConcurrentSet& set, const ExperimentConfig& cfg);

/// Binds the calling thread to the (worker_index mod n)-th allowed CPU,
/// restricted to the first `cpu_limit` when non-zero. Returns the CPU id or
/// nullopt (with `warning` set) if affinity is unavailable.
std::optional<int> pin_current_thread(unsigned worker_index, unsigned cpu_limit,
                                      std::string& warning);

/// Number of CPUs in the process affinity mask.
unsigned available_cpus() noexcept;

/// Runs one experiment. Only one may be in flight per process; a second
/// concurrent call throws std::logic_error.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace csetbench

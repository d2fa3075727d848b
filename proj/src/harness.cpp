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

#include "csetbench/harness.hpp"

#include <pthread.h>
#include <sched.h>

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <exception>
#include <memory>
#include <sstream>
#include <thread>
#include <variant>

#include "csetbench/registry.hpp"

namespace csetbench {
namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kOpStreamSalt = 0x6f70'5f73'7472'6561ULL;
constexpr std::uint64_t kPrefillSalt = 0x7072'6566'696c'6c21ULL;
constexpr unsigned kStopCheckMask = 63;  // poll the stop flag every 64 ops
constexpr unsigned kConvergedChecks = 3;
constexpr unsigned kMaxThreads = 1024;

constexpr std::string_view kFaultNames[] = {"shared_seed", "unsigned_last",
                                            "single_prng_for_key_and_op", "skip_unlink"};

std::uint64_t since(Clock::time_point t0) noexcept {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count());
}

double insert_fraction(const ExperimentConfig& cfg) noexcept {
  const double pi = cfg.insert_probability();
  const double pd = cfg.delete_probability();
  return pi + pd > 0.0 ? pi / (pi + pd) : 0.5;
}

std::string normalize_fault(std::string_view s) {
  std::string out(s);
  std::replace(out.begin(), out.end(), '-', '_');
  return out;
}

struct GeneratorPair {
  AnyGenerator keys;
  std::optional<AnyGenerator> ops;  // empty when the two streams are coupled
};

GeneratorPair make_pair(const ExperimentConfig& cfg, std::uint64_t key_seed,
                        std::uint64_t op_seed) {
  const GeneratorSpec spec = cfg.generator_spec();
  GeneratorPair p{make_generator(spec, key_seed), std::nullopt};
  if (!cfg.faults.single_prng_for_key_and_op) p.ops.emplace(make_generator(spec, op_seed));
  return p;
}

// Calls f(keys, ops) with concrete generator types; ops aliases keys when the
// streams are coupled.
template <class F>
void with_generators(GeneratorPair& p, F&& f) {
  std::visit(
      [&](auto& keys) {
        using G = std::decay_t<decltype(keys)>;
        if (p.ops) {
          f(keys, std::get<G>(*p.ops));
        } else {
          f(keys, keys);
        }
      },
      p.keys);
}

struct RunToken {
  static inline std::atomic<bool> active{false};
  RunToken() {
    if (active.exchange(true, std::memory_order_acq_rel))
      throw std::logic_error("another experiment is already running in this process");
  }
  ~RunToken() { active.store(false, std::memory_order_release); }
  RunToken(const RunToken&) = delete;
  RunToken& operator=(const RunToken&) = delete;
};

std::vector<int> allowed_cpus() {
  std::vector<int> cpus;
  cpu_set_t set;
  CPU_ZERO(&set);
  if (sched_getaffinity(0, sizeof(set), &set) != 0) return cpus;
  for (int c = 0; c < CPU_SETSIZE; ++c)
    if (CPU_ISSET(c, &set)) cpus.push_back(c);
  return cpus;
}

// ---- prefill --------------------------------------------------------------

struct PrefillWorker {
  GeneratorPair gens;
  ChecksumLedger ledger;
  std::uint64_t ops = 0;
};

std::vector<PrefillWorker> prefill_workers(const ExperimentConfig& cfg, unsigned n) {
  std::vector<PrefillWorker> ws;
  ws.reserve(n);
  for (unsigned j = 0; j < n; ++j) {
    ws.push_back({make_pair(cfg, fmix64(worker_key_seed(cfg, j) ^ kPrefillSalt),
                            fmix64(worker_op_seed(cfg, j) ^ kPrefillSalt)),
                  {}, 0});
  }
  return ws;
}

void finish_report(PrefillReport& rep, const std::vector<PrefillWorker>& ws) {
  ChecksumLedger total;
  rep.ops = 0;
  for (const auto& w : ws) {
    total += w.ledger;
    rep.ops += w.ops;
  }
  rep.baseline.key_sum = total.inserted_sum - total.deleted_sum;
  rep.baseline.count = total.inserted_count - total.deleted_count;
  rep.final_size = rep.baseline.count;
  rep.max_size_seen = std::max(rep.max_size_seen, rep.final_size);
}

template <class F>
void run_threads(unsigned n, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (unsigned j = 0; j < n; ++j) {
    threads.emplace_back([&, j] {
      try {
        body(j);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

PrefillReport prefill_insert_only(ConcurrentSet& set, const ExperimentConfig& cfg, unsigned n) {
  PrefillReport rep;
  rep.strategy = cfg.prefill;
  rep.target = cfg.prefill_target();
  const std::uint64_t budget = cfg.effective_prefill_budget();
  const KeyMapper map(cfg.key_range, cfg.range_mode);
  auto ws = prefill_workers(cfg, n);
  std::atomic<std::uint64_t> reserved{0};
  std::atomic<std::uint64_t> draws{0};
  std::atomic<bool> exhausted{false};

  run_threads(n, [&](unsigned j) {
    PrefillWorker& w = ws[j];
    with_generators(w.gens, [&](auto& keys, auto&) {
      while (reserved.fetch_add(1, std::memory_order_relaxed) < rep.target) {
        while (true) {
          if (exhausted.load(std::memory_order_relaxed)) return;
          const Key k = map(keys.next_u64());
          ++w.ops;
          if (draws.fetch_add(1, std::memory_order_relaxed) >= budget) {
            exhausted.store(true, std::memory_order_relaxed);
            return;
          }
          if (set.insert(k)) {
            w.ledger.record_insert(k);
            break;
          }
        }
      }
    });
  });

  finish_report(rep, ws);
  rep.checks = 1;
  rep.converged = rep.final_size == rep.target;
  if (!rep.converged) {
    throw PrefillError("insert-only prefill reached " + std::to_string(rep.final_size) + " of " +
                           std::to_string(rep.target) + " keys within the op budget of " +
                           std::to_string(budget),
                       rep);
  }
  return rep;
}

PrefillReport prefill_steady_state(ConcurrentSet& set, const ExperimentConfig& cfg) {
  PrefillReport rep;
  rep.strategy = PrefillStrategy::kSteadyState;
  rep.target = cfg.steady_state_size();
  const double ins_frac = insert_fraction(cfg);
  rep.tolerance = steady_state_tolerance(cfg.key_range, ins_frac);
  const std::uint64_t budget = cfg.effective_prefill_budget();
  const unsigned n = cfg.threads;
  const std::uint64_t per_round = std::max<std::uint64_t>(64, cfg.key_range / 10 / n);
  const KeyMapper map(cfg.key_range, cfg.range_mode);
  auto ws = prefill_workers(cfg, n);

  struct Control {
    std::vector<PrefillWorker>* ws;
    PrefillReport* rep;
    std::uint64_t budget;
    unsigned in_band = 0;
    bool done = false;
    bool failed = false;
  } ctl{&ws, &rep, budget};

  auto on_round = [&ctl]() noexcept {
    std::int64_t size = 0;
    std::uint64_t ops = 0;
    for (const auto& w : *ctl.ws) {
      size += static_cast<std::int64_t>(w.ledger.inserted_count) -
              static_cast<std::int64_t>(w.ledger.deleted_count);
      ops += w.ops;
    }
    PrefillReport& r = *ctl.rep;
    ++r.checks;
    r.max_size_seen = std::max<std::uint64_t>(r.max_size_seen, static_cast<std::uint64_t>(size));
    const std::int64_t gap = size - static_cast<std::int64_t>(r.target);
    ctl.in_band = (std::abs(gap) <= static_cast<std::int64_t>(r.tolerance)) ? ctl.in_band + 1 : 0;
    if (ctl.in_band >= kConvergedChecks) {
      ctl.done = true;
    } else if (ops >= ctl.budget) {
      ctl.failed = true;
    }
  };
  std::barrier sync(static_cast<std::ptrdiff_t>(n), on_round);

  run_threads(n, [&](unsigned j) {
    PrefillWorker& w = ws[j];
    // Alternation pins the size near its start and unsigned_last drains it;
    // both are measured-phase behaviors, so prefill always splits randomly.
    // Seeding and stream coupling still apply.
    const FaultToggles kNoFaults{};
    UpdateSplitState split;
    with_generators(w.gens, [&](auto& keys, auto& ops) {
      while (!ctl.done && !ctl.failed) {
        for (std::uint64_t i = 0; i < per_round; ++i) {
          const Key k = map(keys.next_u64());
          const OpKind op = choose_update(split, SplitPolicy::kRandomized, ins_frac, kNoFaults, ops);
          bool eff;
          if (op == OpKind::kInsert) {
            eff = set.insert(k);
            if (eff) w.ledger.record_insert(k);
          } else {
            eff = set.remove(k);
            if (eff) w.ledger.record_delete(k);
          }
          record_update_outcome(split, op, eff);
        }
        w.ops += per_round;
        sync.arrive_and_wait();
      }
    });
  });

  finish_report(rep, ws);
  rep.converged = ctl.done;
  if (!rep.converged) {
    std::ostringstream msg;
    msg << "steady-state prefill did not converge: size " << rep.final_size << " (max seen "
        << rep.max_size_seen << ") vs expected " << rep.target << " +/- " << rep.tolerance
        << " after " << rep.ops << " ops (budget " << budget << ")";
    throw PrefillError(msg.str(), rep);
  }
  return rep;
}

// ---- workers --------------------------------------------------------------

struct RunShared {
  const ExperimentConfig* cfg;
  ConcurrentSet* set;
  std::atomic<unsigned> ready{0};
  std::atomic<bool> go{false};
  std::atomic<bool> stop{false};
  Clock::time_point t0;
};

template <class G>
void worker_loop(RunShared& sh, ThreadStats& st, G& keys, G& ops) {
  const ExperimentConfig& cfg = *sh.cfg;
  ConcurrentSet& set = *sh.set;
  const KeyMapper map(cfg.key_range, cfg.range_mode);
  const double u = cfg.update_rate;
  const double ins_frac = insert_fraction(cfg);
  const bool fixed = cfg.ops_per_thread.has_value();
  const std::uint64_t limit = cfg.ops_per_thread.value_or(0);
  const bool capture = cfg.capture_keys;
  if (capture) st.captured_keys.reserve(limit);
  UpdateSplitState split;

  for (std::uint64_t n = 0;; ++n) {
    if (fixed) {
      if (n == limit) break;
    } else if ((n & kStopCheckMask) == 0 && sh.stop.load(std::memory_order_acquire)) {
      st.stop_seen_ns = since(sh.t0);
      break;
    }
    const Key k = map(keys.next_u64());
    if (capture) st.captured_keys.push_back(k);

    OpKind op = OpKind::kSearch;
    if (u >= 1.0 || (u > 0.0 && next_unit(ops) < u))
      op = choose_update(split, cfg.split, ins_frac, cfg.faults, ops);

    const auto idx = static_cast<std::size_t>(op);
    ++st.attempted[idx];
    bool eff;
    switch (op) {
      case OpKind::kSearch:
        eff = set.contains(k);
        break;
      case OpKind::kInsert:
        eff = set.insert(k);
        if (eff) st.ledger.record_insert(k);
        break;
      case OpKind::kDelete:
        eff = set.remove(k);
        if (eff) st.ledger.record_delete(k);
        break;
    }
    if (eff) ++st.effective[idx];
    if (op != OpKind::kSearch) record_update_outcome(split, op, eff);
  }
  st.finish_ns = since(sh.t0);
}

}  // namespace

// ---- names ----------------------------------------------------------------

std::string_view to_string(PrefillStrategy s) noexcept {
  switch (s) {
    case PrefillStrategy::kInsertOnlySingle: return "insert-only-single";
    case PrefillStrategy::kInsertOnlyParallel: return "insert-only-parallel";
    case PrefillStrategy::kSteadyState: return "steady-state";
  }
  return "?";
}

std::optional<PrefillStrategy> parse_prefill_strategy(std::string_view name) noexcept {
  for (auto s : {PrefillStrategy::kInsertOnlySingle, PrefillStrategy::kInsertOnlyParallel,
                 PrefillStrategy::kSteadyState})
    if (to_string(s) == name) return s;
  return std::nullopt;
}

std::string_view to_string(SplitPolicy p) noexcept {
  return p == SplitPolicy::kRandomized ? "randomized" : "effective-alternating";
}

std::optional<SplitPolicy> parse_split_policy(std::string_view name) noexcept {
  if (name == "randomized") return SplitPolicy::kRandomized;
  if (name == "effective-alternating") return SplitPolicy::kEffectiveAlternating;
  return std::nullopt;
}

std::string_view to_string(OpKind op) noexcept {
  switch (op) {
    case OpKind::kSearch: return "search";
    case OpKind::kInsert: return "insert";
    case OpKind::kDelete: return "delete";
  }
  return "?";
}

std::span<const std::string_view> fault_names() noexcept { return kFaultNames; }

std::string to_string(const FaultToggles& f) {
  const bool on[] = {f.shared_seed, f.unsigned_last, f.single_prng_for_key_and_op, f.skip_unlink};
  std::string out;
  for (std::size_t i = 0; i < std::size(kFaultNames); ++i) {
    if (!on[i]) continue;
    if (!out.empty()) out += '+';
    out += kFaultNames[i];
  }
  return out.empty() ? "none" : out;
}

FaultToggles parse_faults(std::string_view text) {
  FaultToggles f;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = text.find_first_of(",+", pos);
    const std::string_view item =
        text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    const std::string name = normalize_fault(item);
    if (name.empty() || name == "none" || name == "off") {
      // nothing
    } else if (name == "shared_seed") {
      f.shared_seed = true;
    } else if (name == "unsigned_last") {
      f.unsigned_last = true;
    } else if (name == "single_prng_for_key_and_op" || name == "single_prng") {
      f.single_prng_for_key_and_op = true;
    } else if (name == "skip_unlink") {
      f.skip_unlink = true;
    } else {
      throw std::invalid_argument("unknown fault '" + std::string(item) + "'");
    }
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return f;
}

// ---- config ---------------------------------------------------------------

double ExperimentConfig::insert_probability() const noexcept {
  return insert_rate ? *insert_rate : update_rate / 2.0;
}

double ExperimentConfig::delete_probability() const noexcept {
  return delete_rate ? *delete_rate : update_rate / 2.0;
}

std::uint64_t ExperimentConfig::prefill_target() const noexcept {
  return initial ? *initial : key_range / 2;
}

std::uint64_t ExperimentConfig::steady_state_size() const noexcept {
  return static_cast<std::uint64_t>(
      std::llround(static_cast<double>(key_range) * insert_fraction(*this)));
}

std::uint64_t ExperimentConfig::effective_prefill_budget() const noexcept {
  return prefill_budget ? *prefill_budget : 100 * key_range;
}

GeneratorSpec ExperimentConfig::generator_spec() const noexcept {
  return {prng, reseed_interval, entropy, pregen_length};
}

void ExperimentConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (threads < 1 || threads > kMaxThreads)
    throw ConfigError("threads must be in [1, " + std::to_string(kMaxThreads) + "]");
  if (!in_unit(update_rate)) throw ConfigError("update rate out of [0,1]");
  if (insert_rate.has_value() != delete_rate.has_value())
    throw ConfigError("independent rates need both an insert rate and a delete rate");
  if (insert_rate) {
    if (!in_unit(*insert_rate) || !in_unit(*delete_rate))
      throw ConfigError("insert/delete rate out of [0,1]");
    if (*insert_rate + *delete_rate > 1.0 + 1e-12)
      throw ConfigError("insert rate + delete rate exceeds 1");
    if (std::abs(update_rate - (*insert_rate + *delete_rate)) > 1e-9)
      throw ConfigError("update rate must equal insert rate + delete rate");
  }
  if (key_range < 1 || key_range > kMaxUserKey)
    throw ConfigError("key range out of [1, " + std::to_string(kMaxUserKey) + "]");
  if (range_mode == RangeMode::kMask && (key_range & (key_range - 1)) != 0)
    throw ConfigError("mask range mode needs a power-of-two key range");
  if (initial && *initial > key_range) throw ConfigError("initial size exceeds key range");
  if (prefill_budget && *prefill_budget == 0) throw ConfigError("prefill budget must be positive");
  if (ops_per_thread && *ops_per_thread == 0) throw ConfigError("ops per thread must be positive");
  if (!ops_per_thread && duration_ms == 0) throw ConfigError("duration must be positive");
  if (capture_keys && !ops_per_thread) throw ConfigError("key capture needs a fixed op count");
  if (reseed_interval != 0 && pregen_length != 0)
    throw ConfigError("reseeding and pre-generated tables are mutually exclusive");
  const auto names = registered_sets();
  if (std::find(names.begin(), names.end(), ds) == names.end())
    throw ConfigError("unknown data structure '" + ds + "'");
}

// ---- helpers --------------------------------------------------------------

double compute_throughput(std::uint64_t total_ops, std::uint64_t duration_ns) noexcept {
  if (total_ops == 0 || duration_ns == 0) return 0.0;
  return static_cast<double>(total_ops) * 1e9 / static_cast<double>(duration_ns);
}

std::uint64_t steady_state_tolerance(std::uint64_t key_range, double insert_fraction) noexcept {
  const double r = static_cast<double>(key_range);
  const double target = r * insert_fraction;
  const double one_percent = 0.01 * target;
  const double two_sd = 2.0 * std::sqrt(r * insert_fraction * (1.0 - insert_fraction));
  return static_cast<std::uint64_t>(std::ceil(std::max(one_percent, two_sd)));
}

std::uint64_t worker_key_seed(const ExperimentConfig& cfg, unsigned thread_id) noexcept {
  return derive_thread_seed(cfg.seed, thread_id,
                            cfg.faults.shared_seed ? SeedPolicy::kShared : SeedPolicy::kDistinct);
}

std::uint64_t worker_op_seed(const ExperimentConfig& cfg, unsigned thread_id) noexcept {
  return fmix64(worker_key_seed(cfg, thread_id) ^ kOpStreamSalt);
}

unsigned available_cpus() noexcept {
  const auto n = allowed_cpus().size();
  return n == 0 ? std::max(1u, std::thread::hardware_concurrency()) : static_cast<unsigned>(n);
}

std::optional<int> pin_current_thread(unsigned worker_index, unsigned cpu_limit,
                                      std::string& warning) {
  std::vector<int> cpus = allowed_cpus();
  if (cpus.empty()) {
    warning = "cannot read the process CPU affinity mask; pinning skipped";
    return std::nullopt;
  }
  if (cpu_limit != 0 && cpu_limit < cpus.size()) cpus.resize(cpu_limit);
  const int cpu = cpus[worker_index % cpus.size()];
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  if (const int rc = pthread_setaffinity_np(pthread_self(), sizeof(set), &set); rc != 0) {
    warning = "pthread_setaffinity_np failed (error " + std::to_string(rc) + "); pinning skipped";
    return std::nullopt;
  }
  return cpu;
}

PrefillReport prefill(ConcurrentSet& set, const ExperimentConfig& cfg) {
  switch (cfg.prefill) {
    case PrefillStrategy::kInsertOnlySingle: return prefill_insert_only(set, cfg, 1);
    case PrefillStrategy::kInsertOnlyParallel: return prefill_insert_only(set, cfg, cfg.threads);
    case PrefillStrategy::kSteadyState: return prefill_steady_state(set, cfg);
  }
  throw std::logic_error("unknown prefill strategy");
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunToken token;

  ExperimentResult res;
  res.config = cfg;
  // the delete fault targets the measured phase; prefill must reach its size
  auto set = make_set(cfg.ds, SetOptions{cfg.reclaim, false});
  res.prefill = prefill(*set, cfg);
  set->set_skip_unlink(cfg.faults.skip_unlink);

  const unsigned n = cfg.threads;
  std::vector<GeneratorPair> gens;
  gens.reserve(n);
  for (unsigned j = 0; j < n; ++j)
    gens.push_back(make_pair(cfg, worker_key_seed(cfg, j), worker_op_seed(cfg, j)));
  res.threads.resize(n);
  std::vector<std::string> pin_warnings(n);
  std::vector<std::exception_ptr> errors(n);

  RunShared sh;
  sh.cfg = &cfg;
  sh.set = set.get();

  std::vector<std::thread> workers;
  workers.reserve(n);
  for (unsigned j = 0; j < n; ++j) {
    workers.emplace_back([&, j] {
      ThreadStats& st = res.threads[j];
      try {
        if (cfg.pin_threads) {
          if (auto cpu = pin_current_thread(j, cfg.pin_cpu_limit, pin_warnings[j])) st.bound_cpu = *cpu;
        }
        sh.ready.fetch_add(1, std::memory_order_acq_rel);
        sh.go.wait(false, std::memory_order_acquire);
        with_generators(gens[j], [&](auto& keys, auto& ops) { worker_loop(sh, st, keys, ops); });
      } catch (...) {
        errors[j] = std::current_exception();
        sh.stop.store(true, std::memory_order_release);
      }
    });
  }

  while (sh.ready.load(std::memory_order_acquire) < n) std::this_thread::yield();
  sh.t0 = Clock::now();
  sh.go.store(true, std::memory_order_release);
  sh.go.notify_all();
  if (!cfg.ops_per_thread) {
    std::this_thread::sleep_until(sh.t0 + std::chrono::milliseconds(cfg.duration_ms));
    sh.stop.store(true, std::memory_order_release);
    res.stop_signal_ns = since(sh.t0);
  }
  for (auto& w : workers) w.join();

  for (unsigned j = 0; j < n; ++j) {
    if (!errors[j]) continue;
    try {
      std::rethrow_exception(errors[j]);
    } catch (const std::exception& e) {
      throw std::runtime_error("worker " + std::to_string(j) + " failed: " + e.what());
    } catch (...) {
      throw std::runtime_error("worker " + std::to_string(j) + " failed with a non-standard exception");
    }
  }

  std::vector<ChecksumLedger> ledgers;
  ledgers.reserve(n);
  for (const auto& st : res.threads) {
    ledgers.push_back(st.ledger);
    res.duration_ns = std::max(res.duration_ns, st.finish_ns);
    for (std::size_t k = 0; k < 3; ++k) {
      res.attempted[k] += st.attempted[k];
      res.effective[k] += st.effective[k];
    }
    res.total_ops += st.total_attempted();
  }
  res.throughput = compute_throughput(res.total_ops, res.duration_ns);
  res.validation = validate_checksum(ledgers, res.prefill.baseline, *set);

  res.pinning.requested = cfg.pin_threads;
  if (cfg.pin_threads) {
    res.pinning.applied = true;
    for (const auto& w : pin_warnings) {
      if (w.empty()) continue;
      res.pinning.applied = false;
      if (res.pinning.warning.empty()) res.pinning.warning = w;
    }
  }

  set->reclaimer().drain();
  res.reclamation = set->reclaimer().counters();
  res.peak_rss_bytes = peak_rss_bytes();
  return res;
}

}  // namespace csetbench

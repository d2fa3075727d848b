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

#include "csetbench/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "csetbench/prng_analysis.hpp"
#include "csetbench/registry.hpp"

namespace csetbench {
namespace {

using nlohmann::json;

// ---- scalar parsing -------------------------------------------------------

std::uint64_t parse_u64(std::string_view flag, std::string_view s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw UsageError("--" + std::string(flag) + ": expected a non-negative integer, got '" +
                     std::string(s) + "'");
  return v;
}

double parse_double(std::string_view flag, std::string_view s) {
  const std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size() || !std::isfinite(v))
    throw UsageError("--" + std::string(flag) + ": expected a number, got '" + tmp + "'");
  return v;
}

double parse_rate(std::string_view flag, std::string_view s) {
  const double v = parse_double(flag, s);
  if (v < 0.0 || v > 1.0) throw UsageError("--" + std::string(flag) + ": rate out of [0,1]");
  return v;
}

unsigned parse_unsigned(std::string_view flag, std::string_view s) {
  const std::uint64_t v = parse_u64(flag, s);
  if (v > 0xffffffffULL) throw UsageError("--" + std::string(flag) + ": value too large");
  return static_cast<unsigned>(v);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t end = s.find(',', pos);
    out.emplace_back(s.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

template <class T, class Parse>
T parse_named(std::string_view flag, std::string_view s, Parse parse) {
  if (auto v = parse(s)) return *v;
  throw UsageError("--" + std::string(flag) + ": unknown value '" + std::string(s) + "'");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string_view range_mode_name(RangeMode m) noexcept { return m == RangeMode::kMask ? "mask" : "modulo"; }

std::optional<RangeMode> parse_range_mode(std::string_view s) noexcept {
  if (s == "modulo") return RangeMode::kModulo;
  if (s == "mask") return RangeMode::kMask;
  return std::nullopt;
}

std::optional<OutputFormat> parse_format(std::string_view s) noexcept {
  if (s == "json") return OutputFormat::kJson;
  if (s == "csv") return OutputFormat::kCsv;
  return std::nullopt;
}

// ---- flag collection ------------------------------------------------------

// Every value flag is collected as a raw string; validation happens in one
// place so error messages name the flag.
struct Flags {
  std::map<std::string, std::string, std::less<>> values;
  std::vector<std::string> inject;
  bool pin = false;
  bool capture = false;

  bool has(std::string_view name) const { return values.find(name) != values.end(); }
  const std::string& get(std::string_view name) const { return values.find(name)->second; }
};

void add_value(CLI::App* app, Flags& f, const std::string& name, const std::string& help) {
  app->add_option_function<std::string>(
      "--" + name, [&f, name](const std::string& v) { f.values[name] = v; }, help);
}

void add_experiment_flags(CLI::App* app, Flags& f, bool sweep) {
  const std::string list = sweep ? " (comma-separated axis)" : "";
  add_value(app, f, "threads", "worker threads" + list);
  add_value(app, f, "duration-ms", "measured phase length in milliseconds");
  add_value(app, f, "update-rate", "fraction of operations that are updates" + list);
  add_value(app, f, "insert-rate", "independent insert fraction");
  add_value(app, f, "delete-rate", "independent delete fraction");
  add_value(app, f, "key-range", "keys are drawn from [1, r]" + list);
  add_value(app, f, "initial", "insert-only prefill target (default r/2)");
  add_value(app, f, "prefill", "insert-only-single | insert-only-parallel | steady-state");
  add_value(app, f, "prefill-budget", "steady-state prefill op budget (default 100 r)");
  add_value(app, f, "split", "randomized | effective-alternating");
  add_value(app, f, "range-mode", "modulo | mask");
  add_value(app, f, "ds", "data structure name" + list);
  add_value(app, f, "prng", "fnv1a-stream | xorshift-kiss | mix64 | lcg64" + list);
  add_value(app, f, "seed", "master seed (env CSETBENCH_SEED sets the default)");
  add_value(app, f, "reseed-interval", "reseed every N draws; 0 disables");
  add_value(app, f, "entropy", "reseeding entropy: os | fixed");
  add_value(app, f, "pregen-length", "replay a pre-generated table of N values; 0 disables");
  add_value(app, f, "reclaim", "none | epoch" + list);
  add_value(app, f, "pin-cpu-limit", "pin into the first N allowed CPUs only");
  add_value(app, f, "ops-per-thread", "fixed op count per worker instead of a duration");
  add_value(app, f, "output", "json | csv");
  add_value(app, f, "out", "output path (default stdout)");
  add_value(app, f, "repeats", "runs per configuration");
  if (sweep) add_value(app, f, "faults", "fault axis, e.g. none,unsigned_last,shared_seed+skip_unlink");
  app->add_option("--inject", f.inject, "fault(s) to inject, comma-separated")->delimiter(',');
  app->add_flag("--pin", f.pin, "pin worker j to CPU j mod n");
  app->add_flag("--capture-keys", f.capture, "record every drawn key (needs --ops-per-thread)");
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("CSETBENCH_SEED")) return parse_u64("seed (CSETBENCH_SEED)", env);
  return ExperimentConfig{}.seed;
}

// Scalar fields shared by run and sweep; axis flags are applied by the caller
// when sweeping.
ExperimentConfig build_config(const Flags& f, bool sweep) {
  ExperimentConfig cfg;
  cfg.seed = default_seed();

  if (!sweep && f.has("threads")) cfg.threads = parse_unsigned("threads", f.get("threads"));
  if (f.has("duration-ms")) cfg.duration_ms = parse_u64("duration-ms", f.get("duration-ms"));

  const bool has_u = f.has("update-rate");
  const bool has_i = f.has("insert-rate");
  const bool has_d = f.has("delete-rate");
  if (has_u && has_i && has_d)
    throw UsageError("--update-rate cannot be combined with both --insert-rate and --delete-rate");
  if (has_i != has_d) throw UsageError("--insert-rate and --delete-rate must be given together");
  if (has_i) {
    cfg.insert_rate = parse_rate("insert-rate", f.get("insert-rate"));
    cfg.delete_rate = parse_rate("delete-rate", f.get("delete-rate"));
    cfg.update_rate = *cfg.insert_rate + *cfg.delete_rate;
    if (cfg.update_rate > 1.0) throw UsageError("insert rate + delete rate exceeds 1");
  } else if (has_u && !sweep) {
    cfg.update_rate = parse_rate("update-rate", f.get("update-rate"));
  }

  if (!sweep && f.has("key-range")) cfg.key_range = parse_u64("key-range", f.get("key-range"));
  if (f.has("initial")) cfg.initial = parse_u64("initial", f.get("initial"));
  if (f.has("prefill"))
    cfg.prefill = parse_named<PrefillStrategy>("prefill", f.get("prefill"), parse_prefill_strategy);
  if (f.has("prefill-budget")) cfg.prefill_budget = parse_u64("prefill-budget", f.get("prefill-budget"));
  if (f.has("split")) cfg.split = parse_named<SplitPolicy>("split", f.get("split"), parse_split_policy);
  if (f.has("range-mode"))
    cfg.range_mode = parse_named<RangeMode>("range-mode", f.get("range-mode"), parse_range_mode);
  if (!sweep && f.has("ds")) cfg.ds = f.get("ds");
  if (!sweep && f.has("prng"))
    cfg.prng = parse_named<PrngKind>("prng", f.get("prng"), parse_prng_kind);
  if (f.has("seed")) cfg.seed = parse_u64("seed", f.get("seed"));
  if (f.has("reseed-interval")) cfg.reseed_interval = parse_u64("reseed-interval", f.get("reseed-interval"));
  if (f.has("entropy"))
    cfg.entropy = parse_named<EntropyKind>("entropy", f.get("entropy"), parse_entropy_kind);
  if (f.has("pregen-length")) cfg.pregen_length = parse_u64("pregen-length", f.get("pregen-length"));
  if (!sweep && f.has("reclaim"))
    cfg.reclaim = parse_named<ReclaimMode>("reclaim", f.get("reclaim"), parse_reclaim_mode);
  cfg.pin_threads = f.pin;
  if (f.has("pin-cpu-limit")) {
    cfg.pin_cpu_limit = parse_unsigned("pin-cpu-limit", f.get("pin-cpu-limit"));
    if (!cfg.pin_threads) throw UsageError("--pin-cpu-limit requires --pin");
  }
  if (f.has("ops-per-thread")) cfg.ops_per_thread = parse_u64("ops-per-thread", f.get("ops-per-thread"));
  cfg.capture_keys = f.capture;

  std::string joined;
  for (const auto& s : f.inject) joined += (joined.empty() ? "" : ",") + s;
  try {
    cfg.faults = parse_faults(joined);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--inject: ") + e.what());
  }
  return cfg;
}

void check_config(const ExperimentConfig& cfg) {
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

OutputFormat output_format(const Flags& f, OutputFormat dflt) {
  return f.has("output") ? parse_named<OutputFormat>("output", f.get("output"), parse_format) : dflt;
}

unsigned repeats(const Flags& f, unsigned dflt) {
  if (!f.has("repeats")) return dflt;
  const unsigned r = parse_unsigned("repeats", f.get("repeats"));
  if (r == 0) throw UsageError("--repeats must be at least 1");
  return r;
}

SweepSpec build_sweep(const Flags& f) {
  SweepSpec s;
  s.base = build_config(f, true);
  s.repeats = repeats(f, 3);
  auto axis = [&](std::string_view name, auto parse) {
    using T = decltype(parse(std::string_view{}));
    std::vector<T> out;
    if (!f.has(name)) return out;
    for (const auto& item : split_list(f.get(name))) out.push_back(parse(item));
    return out;
  };
  s.threads = axis("threads", [](std::string_view v) { return parse_unsigned("threads", v); });
  if (f.has("update-rate") && s.base.insert_rate)
    throw UsageError("--update-rate axis cannot be combined with independent insert/delete rates");
  s.update_rates = axis("update-rate", [](std::string_view v) { return parse_rate("update-rate", v); });
  s.key_ranges = axis("key-range", [](std::string_view v) { return parse_u64("key-range", v); });
  s.ds = axis("ds", [](std::string_view v) { return std::string(v); });
  s.prngs = axis("prng", [](std::string_view v) {
    return parse_named<PrngKind>("prng", v, parse_prng_kind);
  });
  s.reclaims = axis("reclaim", [](std::string_view v) {
    return parse_named<ReclaimMode>("reclaim", v, parse_reclaim_mode);
  });
  s.faults = axis("faults", [&](std::string_view v) {
    try {
      FaultToggles t = parse_faults(v);
      // --inject applies to every cell on top of the axis value
      t.shared_seed |= s.base.faults.shared_seed;
      t.unsigned_last |= s.base.faults.unsigned_last;
      t.single_prng_for_key_and_op |= s.base.faults.single_prng_for_key_and_op;
      t.skip_unlink |= s.base.faults.skip_unlink;
      return t;
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--faults: ") + e.what());
    }
  });
  for (const auto& cell : s.cells()) check_config(cell);
  return s;
}

// ---- JSON -----------------------------------------------------------------

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json by_kind(const std::array<std::uint64_t, 3>& a) {
  return {{"search", a[0]}, {"insert", a[1]}, {"delete", a[2]}};
}

json ledger_to_json(const ChecksumLedger& l) {
  return {{"inserted_sum", to_string(l.inserted_sum)},
          {"deleted_sum", to_string(l.deleted_sum)},
          {"inserted_count", l.inserted_count},
          {"deleted_count", l.deleted_count}};
}

// ---- output plumbing ------------------------------------------------------

bool is_stdout(const std::string& dest) { return dest.empty() || dest == "-"; }

// Runs `write` against the destination; removes a partial file on failure.
template <class F>
void with_output(const std::string& dest, std::ostream& console, F&& write) {
  if (is_stdout(dest)) {
    write(console);
    console.flush();
    return;
  }
  const std::filesystem::path path(dest);
  try {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open '" + dest + "' for writing");
    write(file);
    file.flush();
    if (!file) throw std::runtime_error("write to '" + dest + "' failed");
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(path, ec);
    throw;
  }
}

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// ---- commands -------------------------------------------------------------

int cmd_run(const RunCommand& cmd, std::ostream& out, std::ostream& err) {
  std::vector<ExperimentResult> results;
  for (unsigned rep = 0; rep < cmd.repeats; ++rep) {
    ExperimentConfig cfg = cmd.config;
    if (cmd.repeats > 1) cfg.seed = cell_seed(cmd.config.seed, 0, rep);
    try {
      results.push_back(run_experiment(cfg));
    } catch (const PrefillError& e) {
      err << "prefill failed: " << e.what() << '\n';
      return static_cast<int>(ExitCode::kPrefillNonConvergence);
    }
  }

  std::vector<double> tps;
  for (const auto& r : results) tps.push_back(r.throughput);
  const double med = median(tps);
  with_output(cmd.out, out, [&](std::ostream& os) {
    if (cmd.format == OutputFormat::kCsv) {
      os << sweep_csv_header() << '\n';
      for (unsigned rep = 0; rep < results.size(); ++rep) {
        SweepRow row{0, rep, results[rep].config, results[rep],
                     results[rep].valid() ? "ok" : "checksum-fail", "", med};
        os << sweep_csv_row(row) << '\n';
      }
    } else if (results.size() == 1) {
      os << result_to_json(results.front()).dump(2) << '\n';
    } else {
      json doc = {{"schema_version", kSchemaVersion}, {"median_throughput", med}};
      doc["runs"] = json::array();
      for (const auto& r : results) doc["runs"].push_back(result_to_json(r));
      os << doc.dump(2) << '\n';
    }
  });

  bool ok = true;
  for (const auto& r : results) {
    if (r.valid()) continue;
    ok = false;
    err << "checksum validation failed: final sum " << to_string(r.validation.final_sum)
        << " vs expected " << to_string(r.validation.expected_sum) << ", final count "
        << r.validation.final_count << " vs expected " << to_string(r.validation.expected_count);
    if (!r.validation.structure_ok) err << ", structure: " << r.validation.structure_problem;
    err << '\n';
  }
  if (!results.empty() && !results.front().pinning.warning.empty())
    err << "warning: " << results.front().pinning.warning << '\n';
  return static_cast<int>(ok ? ExitCode::kOk : ExitCode::kValidationFailed);
}

int cmd_sweep(const SweepCommand& cmd, std::ostream& out, std::ostream& err) {
  SweepOutcome outcome;
  with_output(cmd.out, out, [&](std::ostream& os) {
    if (cmd.format == OutputFormat::kCsv) {
      outcome = run_sweep(cmd.spec, &os);
      return;
    }
    outcome = run_sweep(cmd.spec, nullptr);
    json doc = {{"schema_version", kSchemaVersion}, {"rows", json::array()}};
    for (const auto& row : outcome.rows) {
      json j = {{"cell", row.cell},
                {"repeat", row.repeat},
                {"status", row.status},
                {"detail", row.detail},
                {"cell_median_throughput", row.cell_median_throughput}};
      j["result"] = row.result ? result_to_json(*row.result) : json(nullptr);
      if (!row.result) j["config"] = config_to_json(row.config);
      doc["rows"].push_back(std::move(j));
    }
    os << doc.dump(2) << '\n';
  });
  for (const auto& row : outcome.rows)
    if (row.status != "ok") err << "cell " << row.cell << " repeat " << row.repeat << ": " << row.status
                                << (row.detail.empty() ? "" : " (" + row.detail + ")") << '\n';
  if (outcome.any_checksum_failure || outcome.any_error)
    return static_cast<int>(ExitCode::kValidationFailed);
  if (outcome.any_prefill_failure) return static_cast<int>(ExitCode::kPrefillNonConvergence);
  return 0;
}

int cmd_analyze(const AnalyzeCommand& cmd, std::ostream& out) {
  Prng g(cmd.prng, cmd.seed);
  BitSumTracker tracker(cmd.bits);
  std::vector<std::int64_t> lo(cmd.bits.size(), 0), hi(cmd.bits.size(), 0);
  for (std::uint64_t k = 0; k < cmd.count; ++k) {
    tracker.observe(g.next_u64());
    const auto sums = tracker.sums();
    for (std::size_t i = 0; i < sums.size(); ++i) {
      lo[i] = std::min(lo[i], sums[i]);
      hi[i] = std::max(hi[i], sums[i]);
    }
  }
  Prng pg(cmd.prng, cmd.seed);
  const double score = cmd.count >= 2 ? parity_alternation_score(pg, cmd.count) : 0.0;

  json doc = {{"schema_version", kSchemaVersion},
              {"prng", to_string(cmd.prng)},
              {"seed", cmd.seed},
              {"count", cmd.count},
              {"parity_alternation_score", score},
              {"bits", json::array()}};
  for (std::size_t i = 0; i < cmd.bits.size(); ++i)
    doc["bits"].push_back({{"bit", cmd.bits[i]},
                           {"final_sum", tracker.sums()[i]},
                           {"min", lo[i]},
                           {"max", hi[i]}});
  if (!cmd.out.empty()) {
    Prng sg(cmd.prng, cmd.seed);
    const auto series = run_bit_sums(sg, cmd.count, std::span<const unsigned>(cmd.bits));
    export_series_csv(series, std::filesystem::path(cmd.out));
    doc["series_csv"] = cmd.out;
  }
  out << doc.dump(2) << '\n';
  return 0;
}

int cmd_list(std::ostream& out) {
  auto line = [&out](std::string_view title, const auto& items) {
    out << title << ':';
    for (const auto& i : items) out << ' ' << i;
    out << '\n';
  };
  line("data structures", registered_sets());
  std::vector<std::string_view> prngs;
  for (auto k : all_prng_kinds()) prngs.push_back(to_string(k));
  line("prngs", prngs);
  line("faults", fault_names());
  line("prefill", std::vector<std::string_view>{to_string(PrefillStrategy::kInsertOnlySingle),
                                                to_string(PrefillStrategy::kInsertOnlyParallel),
                                                to_string(PrefillStrategy::kSteadyState)});
  line("split", std::vector<std::string_view>{to_string(SplitPolicy::kRandomized),
                                              to_string(SplitPolicy::kEffectiveAlternating)});
  line("reclaim", std::vector<std::string_view>{to_string(ReclaimMode::kNone),
                                                to_string(ReclaimMode::kEpoch)});
  out << "available cpus: " << available_cpus() << '\n';
  return 0;
}

}  // namespace

// ---- public ---------------------------------------------------------------

std::vector<ExperimentConfig> SweepSpec::cells() const {
  auto or_base = [](const auto& axis, auto base) {
    using T = std::decay_t<decltype(base)>;
    return axis.empty() ? std::vector<T>{base} : std::vector<T>(axis.begin(), axis.end());
  };
  const auto ds_axis = or_base(ds, base.ds);
  const auto prng_axis = or_base(prngs, base.prng);
  const auto reclaim_axis = or_base(reclaims, base.reclaim);
  const auto fault_axis = or_base(faults, base.faults);
  const auto range_axis = or_base(key_ranges, base.key_range);
  const auto rate_axis = or_base(update_rates, base.update_rate);
  const auto thread_axis = or_base(threads, base.threads);

  std::vector<ExperimentConfig> out;
  for (const auto& d : ds_axis)
    for (auto p : prng_axis)
      for (auto rm : reclaim_axis)
        for (const auto& fl : fault_axis)
          for (auto r : range_axis)
            for (auto u : rate_axis)
              for (auto t : thread_axis) {
                ExperimentConfig c = base;
                c.ds = d;
                c.prng = p;
                c.reclaim = rm;
                c.faults = fl;
                c.key_range = r;
                c.update_rate = u;
                c.threads = t;
                out.push_back(std::move(c));
              }
  return out;
}

Command parse_args(const std::vector<std::string>& args) {
  CLI::App app{"csetbench: concurrent set microbenchmark", "csetbench"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Flags run_flags, sweep_flags;
  CLI::App* run = app.add_subcommand("run", "run one experiment");
  add_experiment_flags(run, run_flags, false);
  CLI::App* sweep = app.add_subcommand("sweep", "run a parameter sweep");
  add_experiment_flags(sweep, sweep_flags, true);

  AnalyzeCommand analyze;
  std::string analyze_prng = std::string(to_string(analyze.prng));
  std::string analyze_bits;
  CLI::App* an = app.add_subcommand("analyze-prng", "bitwise running-sum analysis of a generator");
  an->add_option("--prng", analyze_prng, "generator kind");
  an->add_option("--seed", analyze.seed, "seed");
  an->add_option("--count", analyze.count, "number of draws");
  an->add_option("--bits", analyze_bits, "comma-separated bit indices (default 0-7)");
  an->add_option("--out", analyze.out, "series CSV path");
  app.add_subcommand("list", "list data structures, generators and faults");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::string usage = app.help();
    for (CLI::App* sub : app.get_subcommands())
      if (sub->parsed()) usage = sub->help();
    throw HelpRequested(usage);
  } catch (const CLI::ParseError& e) {
    std::string usage = app.help();
    for (CLI::App* sub : app.get_subcommands())
      if (sub->parsed()) usage = sub->help();
    throw UsageError(std::string(e.what()) + "\n\n" + usage);
  }

  if (run->parsed()) {
    RunCommand cmd;
    cmd.config = build_config(run_flags, false);
    check_config(cmd.config);
    cmd.format = output_format(run_flags, OutputFormat::kJson);
    cmd.out = run_flags.has("out") ? run_flags.get("out") : "";
    cmd.repeats = repeats(run_flags, 1);
    return cmd;
  }
  if (sweep->parsed()) {
    SweepCommand cmd;
    cmd.spec = build_sweep(sweep_flags);
    cmd.format = output_format(sweep_flags, OutputFormat::kCsv);
    cmd.out = sweep_flags.has("out") ? sweep_flags.get("out") : "";
    return cmd;
  }
  if (an->parsed()) {
    analyze.prng = parse_named<PrngKind>("prng", analyze_prng, parse_prng_kind);
    if (!analyze_bits.empty()) {
      analyze.bits.clear();
      for (const auto& b : split_list(analyze_bits)) {
        const unsigned v = parse_unsigned("bits", b);
        if (v > 63) throw UsageError("--bits: bit index out of [0,63]");
        analyze.bits.push_back(v);
      }
    }
    if (analyze.count == 0) throw UsageError("--count must be at least 1");
    return analyze;
  }
  return ListCommand{};
}

std::vector<std::string> config_to_args(const ExperimentConfig& cfg) {
  std::vector<std::string> a{"run"};
  auto add = [&a](std::string flag, std::string value) {
    a.push_back("--" + std::move(flag));
    a.push_back(std::move(value));
  };
  add("threads", std::to_string(cfg.threads));
  add("duration-ms", std::to_string(cfg.duration_ms));
  if (cfg.insert_rate) {
    add("insert-rate", fmt_double(*cfg.insert_rate));
    add("delete-rate", fmt_double(*cfg.delete_rate));
  } else {
    add("update-rate", fmt_double(cfg.update_rate));
  }
  add("key-range", std::to_string(cfg.key_range));
  if (cfg.initial) add("initial", std::to_string(*cfg.initial));
  add("prefill", std::string(to_string(cfg.prefill)));
  if (cfg.prefill_budget) add("prefill-budget", std::to_string(*cfg.prefill_budget));
  add("split", std::string(to_string(cfg.split)));
  add("range-mode", std::string(range_mode_name(cfg.range_mode)));
  add("prng", std::string(to_string(cfg.prng)));
  add("seed", std::to_string(cfg.seed));
  add("reseed-interval", std::to_string(cfg.reseed_interval));
  add("entropy", std::string(to_string(cfg.entropy)));
  add("pregen-length", std::to_string(cfg.pregen_length));
  add("ds", cfg.ds);
  add("reclaim", std::string(to_string(cfg.reclaim)));
  if (cfg.pin_threads) {
    a.emplace_back("--pin");
    if (cfg.pin_cpu_limit != 0) add("pin-cpu-limit", std::to_string(cfg.pin_cpu_limit));
  }
  if (cfg.ops_per_thread) add("ops-per-thread", std::to_string(*cfg.ops_per_thread));
  if (cfg.capture_keys) a.emplace_back("--capture-keys");
  if (cfg.faults.any()) {
    std::string s = to_string(cfg.faults);
    std::replace(s.begin(), s.end(), '+', ',');
    add("inject", s);
  }
  return a;
}

std::uint64_t cell_seed(std::uint64_t master, std::size_t cell, unsigned repeat) noexcept {
  return fmix64(fmix64(master ^ (static_cast<std::uint64_t>(cell) + 1) * kWeylGamma) ^
                (static_cast<std::uint64_t>(repeat) + 1) * kLcgMultiplier);
}

json config_to_json(const ExperimentConfig& cfg) {
  return {{"threads", cfg.threads},
          {"duration_ms", cfg.duration_ms},
          {"update_rate", cfg.update_rate},
          {"insert_rate", opt(cfg.insert_rate)},
          {"delete_rate", opt(cfg.delete_rate)},
          {"insert_probability", cfg.insert_probability()},
          {"delete_probability", cfg.delete_probability()},
          {"key_range", cfg.key_range},
          {"initial", opt(cfg.initial)},
          {"prefill", to_string(cfg.prefill)},
          {"prefill_budget", cfg.effective_prefill_budget()},
          {"split", to_string(cfg.split)},
          {"range_mode", range_mode_name(cfg.range_mode)},
          {"prng", to_string(cfg.prng)},
          {"seed", cfg.seed},
          {"reseed_interval", cfg.reseed_interval},
          {"entropy", to_string(cfg.entropy)},
          {"pregen_length", cfg.pregen_length},
          {"ds", cfg.ds},
          {"reclaim", to_string(cfg.reclaim)},
          {"pin_threads", cfg.pin_threads},
          {"pin_cpu_limit", cfg.pin_cpu_limit},
          {"ops_per_thread", opt(cfg.ops_per_thread)},
          {"capture_keys", cfg.capture_keys},
          {"faults",
           {{"shared_seed", cfg.faults.shared_seed},
            {"unsigned_last", cfg.faults.unsigned_last},
            {"single_prng_for_key_and_op", cfg.faults.single_prng_for_key_and_op},
            {"skip_unlink", cfg.faults.skip_unlink}}}};
}

json result_to_json(const ExperimentResult& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["config"] = config_to_json(r.config);
  j["duration_ns"] = r.duration_ns;
  j["stop_signal_ns"] = r.stop_signal_ns;
  j["total_ops"] = r.total_ops;
  j["throughput"] = r.throughput;
  j["attempted"] = by_kind(r.attempted);
  j["effective"] = by_kind(r.effective);

  j["threads"] = json::array();
  for (const auto& t : r.threads) {
    json tj = {{"attempted", by_kind(t.attempted)},
               {"effective", by_kind(t.effective)},
               {"ledger", ledger_to_json(t.ledger)},
               {"bound_cpu", t.bound_cpu},
               {"finish_ns", t.finish_ns},
               {"stop_seen_ns", t.stop_seen_ns}};
    if (r.config.capture_keys) tj["captured_keys"] = t.captured_keys;
    j["threads"].push_back(std::move(tj));
  }

  const PrefillReport& p = r.prefill;
  j["prefill"] = {{"strategy", to_string(p.strategy)},
                  {"target", p.target},
                  {"tolerance", p.tolerance},
                  {"final_size", p.final_size},
                  {"max_size_seen", p.max_size_seen},
                  {"ops", p.ops},
                  {"checks", p.checks},
                  {"converged", p.converged},
                  {"key_sum", to_string(p.baseline.key_sum)},
                  {"count", p.baseline.count}};

  const ReclamationCounters& c = r.reclamation;
  j["reclamation"] = {{"mode", to_string(r.config.reclaim)},
                      {"allocated", c.allocated},
                      {"retired", c.retired},
                      {"freed", c.freed},
                      {"live_estimate", c.live_estimate},
                      {"epoch", c.epoch},
                      {"advances", c.advances},
                      {"stalls", c.stalls},
                      {"max_pending", c.max_pending},
                      {"max_epoch_batch", c.max_epoch_batch}};
  j["peak_rss_bytes"] = opt(r.peak_rss_bytes);

  const ValidationReport& v = r.validation;
  j["validation"] = {{"final_sum", to_string(v.final_sum)},
                     {"expected_sum", to_string(v.expected_sum)},
                     {"final_count", v.final_count},
                     {"expected_count", to_string(v.expected_count)},
                     {"structure_ok", v.structure_ok},
                     {"structure_problem", v.structure_problem},
                     {"checksum_match", v.checksum_match()},
                     {"count_match", v.count_match()}};
  j["checksum_pass"] = r.valid();
  j["pinning"] = {{"requested", r.pinning.requested},
                  {"applied", r.pinning.applied},
                  {"warning", r.pinning.warning}};
  return j;
}

void emit_result(const ExperimentResult& result, OutputFormat format, const std::string& destination) {
  with_output(destination, std::cout, [&](std::ostream& os) {
    if (format == OutputFormat::kJson) {
      os << result_to_json(result).dump(2) << '\n';
    } else {
      SweepRow row{0, 0, result.config, result, result.valid() ? "ok" : "checksum-fail", "",
                   result.throughput};
      os << sweep_csv_header() << '\n' << sweep_csv_row(row) << '\n';
    }
  });
}

std::string sweep_csv_header() {
  return "cell,repeat,seed,ds,prng,reclaim,faults,split,prefill,threads,update_rate,insert_rate,"
         "delete_rate,key_range,duration_ms,ops_per_thread,status,search_attempted,"
         "insert_attempted,delete_attempted,search_effective,insert_effective,delete_effective,"
         "total_ops,duration_ns,throughput,cell_median_throughput,prefill_size,final_size,"
         "checksum_pass,peak_rss_bytes,retired,freed,detail";
}

std::string sweep_csv_row(const SweepRow& row) {
  const ExperimentConfig& c = row.config;
  std::ostringstream os;
  os << row.cell << ',' << row.repeat << ',' << c.seed << ',' << csv_escape(c.ds) << ','
     << to_string(c.prng) << ',' << to_string(c.reclaim) << ',' << to_string(c.faults) << ','
     << to_string(c.split) << ',' << to_string(c.prefill) << ',' << c.threads << ','
     << fmt_double(c.update_rate) << ',' << fmt_double(c.insert_probability()) << ','
     << fmt_double(c.delete_probability()) << ',' << c.key_range << ',' << c.duration_ms << ','
     << (c.ops_per_thread ? std::to_string(*c.ops_per_thread) : "") << ',' << row.status << ',';
  if (row.result) {
    const ExperimentResult& r = *row.result;
    for (auto v : r.attempted) os << v << ',';
    for (auto v : r.effective) os << v << ',';
    os << r.total_ops << ',' << r.duration_ns << ',' << fmt_double(r.throughput) << ','
       << fmt_double(row.cell_median_throughput) << ',' << r.prefill.final_size << ','
       << r.validation.final_count << ',' << (r.valid() ? "true" : "false") << ','
       << (r.peak_rss_bytes ? std::to_string(*r.peak_rss_bytes) : "") << ','
       << r.reclamation.retired << ',' << r.reclamation.freed << ',';
  } else {
    os << ",,,,,,,,," << fmt_double(row.cell_median_throughput) << ",,,false,,,,";
  }
  os << csv_escape(row.detail);
  return os.str();
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

SweepOutcome run_sweep(const SweepSpec& spec, std::ostream* csv) {
  SweepOutcome outcome;
  if (csv != nullptr) *csv << sweep_csv_header() << '\n' << std::flush;
  const auto cells = spec.cells();
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const std::size_t first = outcome.rows.size();
    std::vector<double> tps;
    for (unsigned rep = 0; rep < spec.repeats; ++rep) {
      SweepRow row;
      row.cell = ci;
      row.repeat = rep;
      row.config = cells[ci];
      row.config.seed = cell_seed(spec.base.seed, ci, rep);
      try {
        row.result = run_experiment(row.config);
        row.status = row.result->valid() ? "ok" : "checksum-fail";
        if (!row.result->valid()) {
          outcome.any_checksum_failure = true;
          row.detail = row.result->validation.structure_ok ? "checksum mismatch"
                                                           : row.result->validation.structure_problem;
        }
        tps.push_back(row.result->throughput);
      } catch (const PrefillError& e) {
        row.status = "prefill-fail";
        row.detail = e.what();
        outcome.any_prefill_failure = true;
      } catch (const std::exception& e) {
        row.status = "error";
        row.detail = e.what();
        outcome.any_error = true;
      }
      outcome.rows.push_back(std::move(row));
    }
    const double med = median(tps);
    for (std::size_t i = first; i < outcome.rows.size(); ++i) {
      outcome.rows[i].cell_median_throughput = med;
      if (csv != nullptr) *csv << sweep_csv_row(outcome.rows[i]) << '\n';
    }
    if (csv != nullptr) csv->flush();
  }
  return outcome;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    const Command cmd = parse_args(args);
    return std::visit(
        [&](const auto& c) -> int {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, RunCommand>) return cmd_run(c, out, err);
          else if constexpr (std::is_same_v<T, SweepCommand>) return cmd_sweep(c, out, err);
          else if constexpr (std::is_same_v<T, AnalyzeCommand>) return cmd_analyze(c, out);
          else return cmd_list(out);
        },
        cmd);
  } catch (const HelpRequested& e) {
    out << e.what();
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  }
}

}  // namespace csetbench

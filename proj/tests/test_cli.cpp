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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "csetbench/cli.hpp"

namespace csetbench {
namespace {

using nlohmann::json;

std::vector<std::string> words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::string_view line) {
  std::ostringstream out, err;
  const int code = run_cli(words(line), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& row) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : row) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::size_t column(std::string_view name) {
  const auto h = fields(sweep_csv_header());
  return std::find(h.begin(), h.end(), name) - h.begin();
}

TEST(ParseArgs, PaperParameterSet) {
  const auto cmd = parse_args(
      words("run --ds lf-bst --threads 8 --duration-ms 3000 --update-rate 0.5 --key-range 2000000 --seed 42"));
  const auto run = std::get<RunCommand>(cmd);
  EXPECT_EQ(run.config.ds, "lf-bst");
  EXPECT_EQ(run.config.threads, 8u);
  EXPECT_EQ(run.config.duration_ms, 3000u);
  EXPECT_EQ(run.config.update_rate, 0.5);
  EXPECT_EQ(run.config.key_range, 2'000'000u);
  EXPECT_EQ(run.config.seed, 42u);
  EXPECT_EQ(run.format, OutputFormat::kJson);
}

TEST(ParseArgs, RateOutOfRange) {
  try {
    parse_args(words("run --update-rate 1.5"));
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("rate out of [0,1]"), std::string::npos) << e.what();
  }
  const auto r = cli("run --update-rate 1.5");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("rate out of [0,1]"), std::string::npos);
}

TEST(ParseArgs, InjectFaults) {
  const auto a = std::get<RunCommand>(parse_args(words("run --inject unsigned_last --ds lf-bst")));
  EXPECT_TRUE(a.config.faults.unsigned_last);
  EXPECT_FALSE(a.config.faults.shared_seed);
  const auto b =
      std::get<RunCommand>(parse_args(words("run --inject shared_seed,skip_unlink --inject single_prng")));
  EXPECT_TRUE(b.config.faults.shared_seed);
  EXPECT_TRUE(b.config.faults.skip_unlink);
  EXPECT_TRUE(b.config.faults.single_prng_for_key_and_op);
  EXPECT_THROW(parse_args(words("run --inject nonsense")), UsageError);
}

TEST(ParseArgs, ContradictoryRates) {
  try {
    parse_args(words("run --update-rate 0.5 --insert-rate 0.3 --delete-rate 0.2"));
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("--update-rate cannot be combined"), std::string::npos);
  }
  EXPECT_THROW(parse_args(words("run --insert-rate 0.3")), UsageError);
  EXPECT_THROW(parse_args(words("run --insert-rate 0.7 --delete-rate 0.6")), UsageError);
  const auto ok = std::get<RunCommand>(parse_args(words("run --insert-rate 0.25 --delete-rate 0.5")));
  EXPECT_EQ(ok.config.update_rate, 0.75);
}

TEST(ParseArgs, UnknownFlagShowsUsage) {
  try {
    parse_args(words("run --frobnicate 3"));
    FAIL();
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("frobnicate"), std::string::npos);
    EXPECT_NE(msg.find("--threads"), std::string::npos);
  }
  EXPECT_THROW(parse_args({}), UsageError);
  EXPECT_THROW(parse_args(words("launch")), UsageError);
}

TEST(ParseArgs, OtherErrors) {
  EXPECT_THROW(parse_args(words("run --threads 0")), UsageError);
  EXPECT_THROW(parse_args(words("run --threads -2")), UsageError);
  EXPECT_THROW(parse_args(words("run --key-range abc")), UsageError);
  EXPECT_THROW(parse_args(words("run --ds skiplist")), UsageError);
  EXPECT_THROW(parse_args(words("run --prng mt")), UsageError);
  EXPECT_THROW(parse_args(words("run --pin-cpu-limit 2")), UsageError);
  EXPECT_THROW(parse_args(words("run --output xml")), UsageError);
  EXPECT_THROW(parse_args(words("run --key-range 10 --initial 11")), UsageError);
  EXPECT_THROW(parse_args(words("run --capture-keys")), UsageError);
  EXPECT_THROW(parse_args(words("sweep --threads 1,x")), UsageError);
  EXPECT_THROW(parse_args(words("analyze-prng --bits 64")), UsageError);
}

TEST(ParseArgs, SeedFromEnvironment) {
  ::setenv("CSETBENCH_SEED", "777", 1);
  EXPECT_EQ(std::get<RunCommand>(parse_args(words("run"))).config.seed, 777u);
  EXPECT_EQ(std::get<RunCommand>(parse_args(words("run --seed 5"))).config.seed, 5u);
  ::setenv("CSETBENCH_SEED", "oops", 1);
  EXPECT_THROW(parse_args(words("run")), UsageError);
  ::unsetenv("CSETBENCH_SEED");
  EXPECT_EQ(std::get<RunCommand>(parse_args(words("run"))).config.seed, ExperimentConfig{}.seed);
}

TEST(ParseArgs, SweepAxes) {
  const auto s = std::get<SweepCommand>(parse_args(
      words("sweep --threads 1,2,4 --update-rate 0.2,0.5 --ds lf-bst,bst-tk --faults none,unsigned_last "
            "--inject shared_seed --repeats 2")))
                      .spec;
  EXPECT_EQ(s.threads, (std::vector<unsigned>{1, 2, 4}));
  EXPECT_EQ(s.update_rates, (std::vector<double>{0.2, 0.5}));
  EXPECT_EQ(s.repeats, 2u);
  ASSERT_EQ(s.faults.size(), 2u);
  EXPECT_TRUE(s.faults[0].shared_seed);
  EXPECT_FALSE(s.faults[0].unsigned_last);
  EXPECT_TRUE(s.faults[1].unsigned_last);
  const auto cells = s.cells();
  ASSERT_EQ(cells.size(), 3u * 2 * 2 * 2);
  EXPECT_EQ(cells[0].threads, 1u);
  EXPECT_EQ(cells[1].threads, 2u);
  EXPECT_EQ(cells[3].update_rate, 0.5);
  const auto d = std::get<SweepCommand>(parse_args(words("sweep"))).spec;
  EXPECT_EQ(d.repeats, 3u);
  EXPECT_EQ(d.cells().size(), 1u);
}

TEST(ParseArgs, AnalyzeDefaults) {
  const auto a = std::get<AnalyzeCommand>(parse_args(words("analyze-prng")));
  EXPECT_EQ(a.prng, PrngKind::kFnv1aStream);
  EXPECT_EQ(a.bits.size(), 8u);
  EXPECT_TRUE(std::holds_alternative<ListCommand>(parse_args(words("list"))));
}

ExperimentConfig random_config(std::mt19937_64& rng) {
  auto pick = [&](auto... v) {
    const std::array<std::common_type_t<decltype(v)...>, sizeof...(v)> a{v...};
    return a[rng() % a.size()];
  };
  auto rate = [&] { return static_cast<double>(rng() % 1001) / 1000.0; };
  ExperimentConfig c;
  c.threads = 1 + rng() % 64;
  c.duration_ms = 1 + rng() % 100'000;
  if (rng() & 1) {
    const double i = rate() / 2, d = rate() / 2;
    c.insert_rate = i;
    c.delete_rate = d;
    c.update_rate = i + d;
  } else {
    c.update_rate = rate();
  }
  c.range_mode = (rng() & 1) ? RangeMode::kMask : RangeMode::kModulo;
  c.key_range = c.range_mode == RangeMode::kMask ? std::uint64_t{1} << (rng() % 40)
                                                 : 1 + rng() % 10'000'000;
  if (rng() & 1) c.initial = rng() % (c.key_range + 1);
  c.prefill = pick(PrefillStrategy::kInsertOnlySingle, PrefillStrategy::kInsertOnlyParallel,
                   PrefillStrategy::kSteadyState);
  if (rng() & 1) c.prefill_budget = 1 + rng() % 1'000'000'000;
  c.split = pick(SplitPolicy::kRandomized, SplitPolicy::kEffectiveAlternating);
  c.prng = all_prng_kinds()[rng() % all_prng_kinds().size()];
  c.seed = rng();
  c.entropy = pick(EntropyKind::kOs, EntropyKind::kFixedCounter);
  switch (rng() % 3) {
    case 0: c.reseed_interval = 1 + rng() % 10'000'000; break;
    case 1: c.pregen_length = 1 + rng() % 100'000; break;
    default: break;
  }
  c.ds = (rng() & 1) ? "lf-bst" : "bst-tk";
  c.reclaim = pick(ReclaimMode::kEpoch, ReclaimMode::kNone);
  c.pin_threads = rng() & 1;
  if (c.pin_threads && (rng() & 1)) c.pin_cpu_limit = 1 + rng() % 16;
  if (rng() & 1) {
    c.ops_per_thread = 1 + rng() % 1'000'000;
    c.capture_keys = rng() & 1;
  }
  c.faults.shared_seed = rng() & 1;
  c.faults.unsigned_last = rng() & 1;
  c.faults.single_prng_for_key_and_op = rng() & 1;
  c.faults.skip_unlink = rng() & 1;
  return c;
}

TEST(ParseArgs, ConfigFlagsRoundTrip) {
  ::unsetenv("CSETBENCH_SEED");
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const ExperimentConfig c = random_config(rng);
    ASSERT_NO_THROW(c.validate());
    const auto args = config_to_args(c);
    const auto back = std::get<RunCommand>(parse_args(args)).config;
    ASSERT_TRUE(back == c) << "iteration " << i << ": " << config_to_json(c).dump() << "\nvs\n"
                           << config_to_json(back).dump();
  }
}

TEST(CellSeed, DistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::size_t cell = 0; cell < 50; ++cell)
    for (unsigned rep = 0; rep < 10; ++rep) seen.insert(cell_seed(1, cell, rep));
  EXPECT_EQ(seen.size(), 500u);
  EXPECT_EQ(cell_seed(7, 3, 2), cell_seed(7, 3, 2));
  EXPECT_NE(cell_seed(7, 3, 2), cell_seed(8, 3, 2));
}

TEST(Median, Basics) {
  EXPECT_EQ(median({}), 0.0);
  EXPECT_EQ(median({3.0}), 3.0);
  EXPECT_EQ(median({5.0, 1.0, 3.0}), 3.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
}

TEST(Emit, ZeroOpResult) {
  ExperimentResult r;
  r.threads.resize(2);
  const json j = result_to_json(r);
  EXPECT_EQ(j["schema_version"], kSchemaVersion);
  EXPECT_EQ(j["throughput"].get<double>(), 0.0);
  EXPECT_TRUE(j["checksum_pass"].get<bool>());
  EXPECT_EQ(j["total_ops"], 0u);
  EXPECT_EQ(j["threads"].size(), 2u);
}

TEST(Emit, JsonThroughputRecomputes) {
  ::unsetenv("CSETBENCH_SEED");
  const auto r = cli("run --threads 3 --duration-ms 150 --update-rate 0.5 --key-range 5000");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  std::uint64_t ops = 0, dur = 0;
  for (const auto& t : j["threads"]) {
    for (const auto& k : {"search", "insert", "delete"}) ops += t["attempted"][k].get<std::uint64_t>();
    dur = std::max(dur, t["finish_ns"].get<std::uint64_t>());
  }
  EXPECT_EQ(ops, j["total_ops"].get<std::uint64_t>());
  EXPECT_EQ(dur, j["duration_ns"].get<std::uint64_t>());
  EXPECT_EQ(j["throughput"].get<double>(), static_cast<double>(ops) * 1e9 / static_cast<double>(dur));
  EXPECT_TRUE(j["checksum_pass"].get<bool>());
  EXPECT_EQ(j["config"]["threads"], 3);
  EXPECT_EQ(j["validation"]["final_sum"].get<std::string>(),
            j["validation"]["expected_sum"].get<std::string>());
}

TEST(Emit, WritesFileAndRemovesPartial) {
  const auto dir = std::filesystem::temp_directory_path() / "csetbench_cli_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "r.json";
  const auto ok = cli("run --duration-ms 20 --out " + path.string());
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(ok.out.empty());
  std::ifstream in(path);
  EXPECT_FALSE(json::parse(in).is_discarded());

  const auto bad = dir / "missing" / "r.json";
  EXPECT_NE(cli("run --duration-ms 20 --out " + bad.string()).code, 0);
  EXPECT_FALSE(std::filesystem::exists(bad));
  std::filesystem::remove_all(dir);
}

TEST(Sweep, TwoThreadCountsTwoRepeats) {
  const auto r = cli("sweep --threads 1,2 --repeats 2 --duration-ms 30 --key-range 500");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls[0], sweep_csv_header());
  for (std::size_t i = 1; i < ls.size(); ++i) EXPECT_EQ(fields(ls[i]).size(), fields(ls[0]).size());
  EXPECT_EQ(fields(ls[1])[column("threads")], "1");
  EXPECT_EQ(fields(ls[3])[column("threads")], "2");
}

TEST(Sweep, MedianColumnPerCell) {
  const auto r = cli("sweep --repeats 3 --duration-ms 30 --key-range 500");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 4u);
  std::vector<double> tps;
  for (std::size_t i = 1; i < 4; ++i) tps.push_back(std::stod(fields(ls[i])[column("throughput")]));
  for (std::size_t i = 1; i < 4; ++i)
    EXPECT_EQ(std::stod(fields(ls[i])[column("cell_median_throughput")]), median(tps));
}

TEST(Sweep, SingleThreadCellsReproduce) {
  const std::string line =
      "sweep --threads 1 --update-rate 0.1,0.9 --ops-per-thread 20000 --repeats 2 --seed 9 --key-range 1000";
  const auto a = cli(line), b = cli(line);
  ASSERT_EQ(a.code, 0);
  const auto la = lines(a.out), lb = lines(b.out);
  ASSERT_EQ(la.size(), lb.size());
  for (std::size_t i = 1; i < la.size(); ++i) {
    const auto fa = fields(la[i]), fb = fields(lb[i]);
    for (auto col : {"seed", "search_attempted", "insert_attempted", "delete_attempted", "search_effective",
                     "insert_effective", "delete_effective", "total_ops", "prefill_size", "final_size"})
      EXPECT_EQ(fa[column(col)], fb[column(col)]) << col;
  }
  EXPECT_NE(fields(la[1])[column("seed")], fields(la[2])[column("seed")]);
}

TEST(Sweep, FailedCellRecordedAndSweepContinues) {
  const auto r = cli("sweep --faults none,skip_unlink --repeats 1 --duration-ms 30 --update-rate 0.5");
  EXPECT_EQ(r.code, 2);
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 3u);
  EXPECT_EQ(fields(ls[1])[column("status")], "ok");
  EXPECT_EQ(fields(ls[2])[column("status")], "checksum-fail");
  EXPECT_EQ(fields(ls[2])[column("checksum_pass")], "false");
}

TEST(ExitCodes, AllFour) {
  EXPECT_EQ(cli("list").code, 0);
  EXPECT_EQ(cli("run --help").code, 0);
  EXPECT_EQ(cli("run --bogus").code, 1);
  EXPECT_EQ(cli("run --duration-ms 50 --update-rate 0.5 --inject skip_unlink").code, 2);
  const auto p = cli("run --prng fnv1a-stream --inject single_prng --threads 1 --key-range 4000 --duration-ms 10");
  EXPECT_EQ(p.code, 3);
  EXPECT_NE(p.err.find("prefill"), std::string::npos);
}

TEST(Analyze, FnvSummary) {
  const auto r = cli("analyze-prng --prng fnv1a-stream --count 10000 --bits 0,1");
  ASSERT_EQ(r.code, 0);
  const json j = json::parse(r.out);
  EXPECT_EQ(j["parity_alternation_score"].get<double>(), 1.0);
  EXPECT_GE(j["bits"][0]["min"].get<int>(), -1);
  EXPECT_LE(j["bits"][0]["max"].get<int>(), 1);
}

}  // namespace
}  // namespace csetbench

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

/// Command-line front end: argument parsing, single runs, sweeps and result
/// emission.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "csetbench/harness.hpp"

namespace csetbench {

inline constexpr int kSchemaVersion = 1;

enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kValidationFailed = 2,
  kPrefillNonConvergence = 3,
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HelpRequested : public UsageError {
 public:
  using UsageError::UsageError;
};

enum class OutputFormat : std::uint8_t { kJson, kCsv };

struct RunCommand {
  ExperimentConfig config;
  OutputFormat format = OutputFormat::kJson;
  std::string out;  // empty or "-" means stdout
  unsigned repeats = 1;
};

struct SweepSpec {
  ExperimentConfig base;
  std::vector<unsigned> threads;
  std::vector<double> update_rates;
  std::vector<std::uint64_t> key_ranges;
  std::vector<std::string> ds;
  std::vector<PrngKind> prngs;
  std::vector<ReclaimMode> reclaims;
  std::vector<FaultToggles> faults;
  unsigned repeats = 3;

  /// Cross product in a fixed order (threads varies fastest). An empty axis
  /// contributes the base value. Seeds are left at base.seed.
  std::vector<ExperimentConfig> cells() const;
};

struct SweepCommand {
  SweepSpec spec;
  OutputFormat format = OutputFormat::kCsv;
  std::string out;
};

struct AnalyzeCommand {
  PrngKind prng = PrngKind::kFnv1aStream;
  std::uint64_t seed = 1;
  std::uint64_t count = 1'000'000;
  std::vector<unsigned> bits{0, 1, 2, 3, 4, 5, 6, 7};
  std::string out;  // series CSV; empty skips the export
};

struct ListCommand {};

using Command = std::variant<RunCommand, SweepCommand, AnalyzeCommand, ListCommand>;

/// `args` excludes the program name. Throws UsageError with usage text.
Command parse_args(const std::vector<std::string>& args);

/// Flags that parse back into exactly `cfg`, starting with "run".
std::vector<std::string> config_to_args(const ExperimentConfig& cfg);

/// Per-cell, per-repeat seed.
std::uint64_t cell_seed(std::uint64_t master, std::size_t cell, unsigned repeat) noexcept;

nlohmann::json config_to_json(const ExperimentConfig& cfg);
nlohmann::json result_to_json(const ExperimentResult& result);

/// Writes `result` as JSON (or one CSV row with header) to `destination`;
/// a partially written file is removed on failure.
void emit_result(const ExperimentResult& result, OutputFormat format,
                 const std::string& destination);

/// One CSV row per cell-repeat. `status` is "ok", "checksum-fail",
/// "prefill-fail" or "error".
struct SweepRow {
  std::size_t cell = 0;
  unsigned repeat = 0;
  ExperimentConfig config;
  std::optional<ExperimentResult> result;
  std::string status;
  std::string detail;
  double cell_median_throughput = 0.0;
};

std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRow& row);

/// Median over the given values; 0 when empty.
double median(std::vector<double> values);

struct SweepOutcome {
  std::vector<SweepRow> rows;
  bool any_checksum_failure = false;
  bool any_prefill_failure = false;
  bool any_error = false;
};

/// Runs every cell-repeat sequentially. Rows are streamed to `csv` (if not
/// null) one cell at a time, each row carrying its cell's median throughput.
SweepOutcome run_sweep(const SweepSpec& spec, std::ostream* csv);

/// Full CLI: parses, dispatches and returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace csetbench

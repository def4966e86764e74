#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cnv/config.hpp"

namespace cnv {

/// Version tag embedded in every report.
std::string_view version_tag();

/// Runs body(0) ... body(count - 1) on up to `threads` worker threads
/// (0 = hardware concurrency). Indices are claimed dynamically; callers write
/// results into index-keyed slots, so the outcome does not depend on the
/// schedule. If bodies throw, the exception of the smallest failing index is
/// rethrown after all workers finish.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

/// Replicate key combining the population size and the replicate index, so
/// studies over several N never share a stream.
std::uint64_t replicate_key(std::int64_t n, std::size_t index);

/// Result of one experiment: the report document, named CSV files and the
/// overall verdict of its checks.
struct ExperimentOutput {
  nlohmann::json report;
  std::vector<std::pair<std::string, std::string>> files;
  bool passed = true;
};

struct RunOptions {
  unsigned threads = 0;
};

ExperimentOutput run_simulate(const ScenarioConfig& config, const RunOptions& options = {});
ExperimentOutput run_convergence_study(const ScenarioConfig& config, const RunOptions& options = {});
ExperimentOutput run_verify(const ScenarioConfig& config, const RunOptions& options = {});
ExperimentOutput run_moments(const ScenarioConfig& config, const RunOptions& options = {});
ExperimentOutput run_spectrum(const ScenarioConfig& config, const RunOptions& options = {});
ExperimentOutput adjudicate_case2(const ScenarioConfig& config, const RunOptions& options = {});
ExperimentOutput run_toy(const ScenarioConfig& config, const RunOptions& options = {});
ExperimentOutput run_all_or_nothing(const ScenarioConfig& config, const RunOptions& options = {});

/// Dispatches on config.experiment.
ExperimentOutput run_experiment(const ScenarioConfig& config, const RunOptions& options = {});

/// Writes report.json and the CSV files into `dir` (created if needed).
void write_outputs(const ExperimentOutput& output, const std::filesystem::path& dir);

/// %.17g formatting used for every CSV number.
std::string format_number(double value);

/// Command-line entry point.
///   cnvsim <simulate|converge|verify-identities|moments|spectrum|
///           adjudicate-case2|toy|all-or-nothing>
///          [--config PATH] [--seed U64] [--out DIR] [--replicates INT]
///          [--threads INT] [--check]
/// The output directory is --out, else $CNVSIM_OUT, else the config's
/// output_dir. Exit codes: 0 success, 1 validation error, 2 failed checks
/// (verify-identities always checks; other subcommands with --check).
int cli_main(int argc, const char* const* argv);

}  // namespace cnv

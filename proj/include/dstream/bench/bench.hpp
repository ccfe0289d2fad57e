#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dstream/sim/trace.hpp"

// Experiment driver shared by the CLI and the tests: builds app configs from
// key=value options, runs repetitions with stepped seeds, checks each run
// against its app's reference oracle, and emits rows in a fixed CSV schema.
namespace dstream::bench {

struct ExperimentSpec {
  std::string app = "wordcount";
  int repetitions = 1;
  std::uint64_t seed = 1;
  /// App-specific knobs; unknown keys are rejected when the experiment runs.
  std::map<std::string, std::string> options;
};

/// key=value lines, blank lines and '#' comments ignored. `app`,
/// `repetitions` and `seed` configure the spec itself.
ExperimentSpec parse_spec_lines(const std::vector<std::string>& lines);
ExperimentSpec parse_spec_file(const std::string& path);
/// Apply one "key=value" assignment on top of a parsed spec.
void apply_override(ExperimentSpec& spec, const std::string& assignment);

struct ResultRow {
  std::string app;
  std::string variant;
  int ranks = 0;
  double alpha = 0.0;
  double granularity = 0.0;  ///< app's batching/element-size knob; 0 if n/a
  std::uint64_t seed = 0;
  int rep = 0;
  double makespan_us = 0.0;
  double compute_us = 0.0;
  double send_us = 0.0;
  double recv_us = 0.0;
  double io_us = 0.0;
  double idle_us = 0.0;
  bool oracle_pass = false;
};

inline constexpr std::string_view kCsvHeader =
    "app,variant,ranks,alpha,granularity,seed,rep,makespan_us,compute_us,send_us,recv_us,"
    "io_us,idle_us,oracle_pass";

std::string to_csv(const ResultRow& row);
void write_csv(const std::string& path, const std::vector<ResultRow>& rows);

struct Summary {
  int rows = 0;
  int oracle_failures = 0;
  double mean_makespan_us = 0.0;
  double stddev_makespan_us = 0.0;  ///< sample stddev; 0 for fewer than 2 rows
};
Summary summarize(const std::vector<ResultRow>& rows);

/// $DS_RESULTS_DIR when set, else the working directory; created on demand.
std::string results_dir();
/// Joins onto results_dir() unless `filename` is already absolute.
std::string resolve_result_path(const std::string& filename);

/// Interval CSV `rank,start_us,end_us,category,tag` for timeline plots.
void export_gantt(const sim::EventTrace& trace, const std::string& path);

struct RunOutcome {
  std::vector<ResultRow> rows;
  sim::EventTrace first_trace;  ///< trace of repetition 0
};

/// Runs all repetitions of one experiment. Throws ValidationError or
/// UsageError for bad specs; simulation failures surface as oracle_pass =
/// false rather than exceptions.
RunOutcome run_experiment(const ExperimentSpec& spec);

}  // namespace dstream::bench

#pragma once

#include <cstdint>
#include <vector>

#include "dstream/sim/runtime.hpp"

// Streaming workload-trace analysis: a producer group emits synthetic task
// durations as they "finish" and a single analysis rank keeps running
// statistics on the fly, so the summary is ready the moment the last
// producer terminates instead of after a collect-then-postprocess pass.
namespace dstream::apps::workload {

struct WorkloadConfig {
  int producer_ranks = 6;
  std::uint64_t records_per_producer = 200;
  double mean_us = 50.0;  ///< mean of the exponential task-duration draw
  std::uint64_t seed = 1;
  double per_record_us = 0.1;  ///< analysis cost per record
  int batch_records = 32;      ///< durations per stream element
  sim::SimConfig sim;

  int total_ranks() const { return producer_ranks + 1; }
  int analysis_rank() const { return producer_ranks; }
  void validate() const;
};

struct WorkloadStats {
  std::uint64_t count = 0;
  double min_us = 0.0;
  double max_us = 0.0;
  double mean_us = 0.0;
  double median_us = 0.0;  ///< even counts average the two middle values
};

struct WorkloadResult {
  WorkloadStats stats;
  std::vector<std::uint64_t> per_producer;  ///< records seen from each producer
  sim::RunReport report;
};

WorkloadResult run_workload(const WorkloadConfig& config);

/// The durations producer `index` will emit, in emission order.
std::vector<double> producer_durations(const WorkloadConfig& config, int index);

/// All durations in producer-major order; the offline oracle input.
std::vector<double> synthetic_durations(const WorkloadConfig& config);

/// Sort-based reference statistics.
WorkloadStats offline_stats(std::vector<double> durations);

}  // namespace dstream::apps::workload

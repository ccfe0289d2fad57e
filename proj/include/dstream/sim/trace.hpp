#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dstream::sim {

/// Internal time unit: nanoseconds. Public interfaces speak microseconds.
using Ticks = std::int64_t;

inline constexpr double kTicksPerUs = 1000.0;

inline Ticks us_to_ticks(double us) {
  return static_cast<Ticks>(std::llround(us * kTicksPerUs));
}
inline double ticks_to_us(Ticks t) { return static_cast<double>(t) / kTicksPerUs; }

/// One timed interval on one rank. Tags: "compute:<op>", "send", "recv",
/// "idle", "io".
struct TraceRecord {
  int rank;
  Ticks t_start;
  Ticks t_end;
  std::string tag;
};

class EventTrace {
 public:
  EventTrace() = default;
  explicit EventTrace(std::vector<TraceRecord> records) : records_(std::move(records)) {}

  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t size() const noexcept { return records_.size(); }

  void append(TraceRecord r) { records_.push_back(std::move(r)); }

  /// CSV rows `rank,t_start,t_end,tag`, times as integer microseconds,
  /// rows in lexicographic (rank, t_start, t_end, tag) order.
  void write_csv(std::ostream& os) const;
  void write_csv_file(const std::string& path) const;
  static EventTrace read_csv_file(const std::string& path);

 private:
  std::vector<TraceRecord> records_;
};

struct RankTotals {
  double compute_us = 0.0;
  double idle_us = 0.0;
  double send_us = 0.0;
  double recv_us = 0.0;
  double io_us = 0.0;

  double span_us() const { return compute_us + idle_us + send_us + recv_us + io_us; }
};

struct TraceSummary {
  std::vector<RankTotals> per_rank;
  double makespan_us = 0.0;
};

/// Per-rank totals by tag category plus the overall makespan. Throws
/// ProtocolError if any rank's records overlap or run backwards.
TraceSummary summarize_trace(const EventTrace& trace);

}  // namespace dstream::sim

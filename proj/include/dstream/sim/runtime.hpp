#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dstream/envelope.hpp"
#include "dstream/group.hpp"
#include "dstream/sim/noise.hpp"
#include "dstream/sim/trace.hpp"

namespace dstream::sim {

class Runtime;

/// How simulated time advances.
///  Virtual: deterministic discrete-event clock; one rank executes at a
///           time and the scheduler always resumes the rank with the lowest
///           effective timestamp, so identical seeds give identical traces.
///  Wall:    ranks run as free threads and costs become real sleeps; useful
///           to sanity-check that the programming model also works without
///           the deterministic scheduler. Results are not reproducible.
enum class TimeMode { Virtual, Wall };

struct SimConfig {
  /// 0 means "use the layout's rank count"; any other value must match it.
  int total_ranks = 0;
  TimeMode time_mode = TimeMode::Virtual;
  std::uint64_t rng_seed = 1;

  /// Multiplicative slowdown noise applied to every work() call.
  NoiseSpec noise{};

  /// Transport cost model, all in microseconds.
  double latency_us = 1.0;        ///< delivery = send end + latency
  double send_cost_us = 0.5;      ///< sender-side fixed cost per message
  double cost_per_byte_us = 0.0;  ///< sender-side cost proportional to size
  double recv_cost_us = 0.5;      ///< receiver-side fixed cost per message

  /// Max data envelopes in flight per (producer, stream) before the
  /// producer blocks. Termination markers are exempt.
  int inflight_window = 64;

  bool capture_trace = true;
  double max_wall_seconds = 300.0;  ///< watchdog for hung runs

  void validate() const;
};

/// Outcome of a whole simulated run.
struct RunReport {
  /// Empty string means the run completed cleanly.
  std::string failure;
  /// Per-rank: 0 finished, 1 threw, 2 aborted by a peer failure,
  /// 3 involved in a deadlock.
  std::vector<int> exit_status;
  std::vector<std::string> rank_errors;

  EventTrace trace;  ///< empty when capture_trace is off
  std::vector<RankTotals> totals;
  double makespan_us = 0.0;
  std::uint64_t undelivered_envelopes = 0;
  /// Peak unconsumed data envelopes over all (producer, stream) pairs;
  /// never exceeds SimConfig::inflight_window.
  int max_in_flight = 0;

  bool ok() const { return failure.empty(); }
};

/// Handle passed to rank programs. All calls are only valid on the owning
/// rank's thread during run(). Rank programs must not hold a lock shared
/// with other ranks across any call on this handle: under virtual time only
/// one rank executes at a time, so a parked lock holder stalls every rank
/// that touches the lock.
class RankContext {
 public:
  int rank() const noexcept { return rank_; }
  int world_size() const noexcept;
  const GroupLayout& layout() const noexcept;
  const SimConfig& config() const noexcept;
  /// Group this rank belongs to.
  const std::string& group() const;

  /// Current clock in microseconds.
  double now_us() const;
  /// Advance the clock by cost_us times the sampled slowdown.
  /// Returns the actual elapsed time. Trace tag is "compute:<label>".
  double work(double cost_us, std::string_view label = "work");
  /// Like work() but traced as "io" and exempt from slowdown noise.
  double io_work(double cost_us);

  /// Deterministic per-rank random stream (independent of noise sampling).
  std::uint64_t rng_u64();
  double rng_unit();

  /// Addressed point-to-point messages, matched by (source, tag) on the
  /// receiver. Used by collectives and control logic, not by streams.
  void send_message(int dest_rank, std::uint64_t tag, std::vector<std::byte> payload);
  std::vector<std::byte> recv_message(int src_rank, std::uint64_t tag);

  // Transport plane used by the stream layer. Applications should go
  // through dstream/stream.hpp instead of calling these directly.

  /// Collective over the union of both groups; all members must call it in
  /// the same order. Returns the channel id.
  std::uint64_t channel_create_sync(const std::string& producer_group,
                                    const std::string& consumer_group);
  /// Collective over the channel's two groups; detaches all of its streams.
  void channel_free_sync(std::uint64_t channel_uid);
  /// Not synchronized; the stream id is derived from the channel id and the
  /// per-rank attach occurrence, so matching attach order implies matching
  /// ids without a barrier.
  std::uint64_t stream_attach(std::uint64_t channel_uid, const StreamElementType& type);

  struct ChannelGroups {
    std::string producer_group;
    std::string consumer_group;
  };
  ChannelGroups channel_groups(std::uint64_t channel_uid) const;
  StreamElementType stream_type(std::uint64_t stream_uid) const;

  void register_layout(const std::string& tag);
  bool layout_registered(const std::string& tag) const;

  /// Sender side. Charges send cost, enforces the in-flight window for data
  /// envelopes, and enqueues delivery at cost end + latency.
  void stream_send(int consumer_rank, Envelope env);

  /// Receiver side. Blocking waits until an envelope for the stream is
  /// available; non-blocking returns nullopt unless one has already been
  /// delivered at or before the current clock.
  std::optional<Envelope> stream_pop(std::uint64_t stream_uid, bool blocking);

 private:
  friend class Runtime;
  RankContext(Runtime* rt, int rank) : rt_(rt), rank_(rank) {}
  Runtime* rt_;
  int rank_;
};

using RankProgram = std::function<void(RankContext&)>;

/// Execute one program per rank (same callable, dispatching on
/// ctx.rank()/ctx.group()) under the configured time mode and return the
/// consolidated report. Never throws for failures inside rank programs;
/// those are reported through RunReport.
RunReport run(const GroupLayout& layout, const SimConfig& config, const RankProgram& program);

}  // namespace dstream::sim

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dstream/envelope.hpp"
#include "dstream/sim/runtime.hpp"

namespace dstream {

/// One element as seen by a consumer-side operator.
struct StreamElement {
  int producer_rank = -1;
  std::uint64_t seq_no = 0;
  const std::vector<std::byte>& payload;
};

/// Consumer-side callback applied to each element on the fly, in arrival
/// order (first-come-first-served across producers, FIFO per producer).
/// Accumulation state lives in the closure.
using Operator = std::function<void(const StreamElement&)>;

struct SendTicket {
  std::uint64_t stream_id = 0;
  std::uint64_t seq_no = 0;
  int consumer_rank = -1;
};

struct OperateSummary {
  std::uint64_t elements_processed = 0;  ///< data elements handled by this call
  bool terminated = false;               ///< markers received from every producer
};

namespace detail {
struct StreamLocal;
}

class Stream;

/// Rank-local handle to a producer-group -> consumer-group link. Obtained
/// collectively via create_channel; identity is synchronized across both
/// groups. Handles are confined to their owning rank.
class Channel {
 public:
  std::uint64_t uid() const noexcept { return uid_; }
  const std::string& producer_group() const noexcept { return producer_group_; }
  const std::string& consumer_group() const noexcept { return consumer_group_; }
  /// True when the owning rank is in the producer group.
  bool producer_side() const noexcept { return producer_side_; }
  bool freed() const noexcept { return freed_; }

 private:
  friend Channel create_channel(sim::RankContext&, const std::string&, const std::string&);
  friend Stream attach(Channel&, const StreamElementType&, Operator);
  friend void free_channel(Channel&);

  sim::RankContext* ctx_ = nullptr;
  std::uint64_t uid_ = 0;
  std::string producer_group_;
  std::string consumer_group_;
  bool producer_side_ = false;
  bool freed_ = false;
  std::vector<std::shared_ptr<detail::StreamLocal>> locals_;
};

/// Rank-local handle to one stream on a channel. Producer ranks inject with
/// isend/isend_to and close with terminate; consumer ranks drain with
/// operate/operate_poll. Copies share state.
class Stream {
 public:
  std::uint64_t uid() const noexcept;
  const StreamElementType& element_type() const noexcept;

  /// Inject one element, routed round-robin over the consumer group
  /// (starting at this producer's index into the group, so concurrent
  /// producers spread load). Asynchronous: returns once the element is in
  /// flight; blocks only when the in-flight window is full.
  SendTicket isend(std::vector<std::byte> element);
  /// Inject one element to an explicit consumer rank.
  SendTicket isend_to(int consumer_rank, std::vector<std::byte> element);
  /// Send a termination marker to every consumer and close the local side.
  void terminate();

  /// Apply the attached operator to every element until a marker from every
  /// producer has arrived. Returns the count processed by this call.
  OperateSummary operate();
  /// Apply the operator to whatever has already been delivered; never blocks.
  OperateSummary operate_poll();

  /// Producer side: local terminate sent. Consumer side: full quorum seen.
  bool closed() const;
  /// Consumer side only: markers seen from every producer.
  bool fully_terminated() const;
  std::uint64_t elements_processed() const;

 private:
  friend Stream attach(Channel&, const StreamElementType&, Operator);
  sim::RankContext* ctx_ = nullptr;
  std::shared_ptr<detail::StreamLocal> local_;
};

/// Collective over both groups: every member rank must call with identical
/// arguments. The groups must be distinct (and are disjoint by layout).
Channel create_channel(sim::RankContext& ctx, const std::string& producer_group,
                       const std::string& consumer_group);

/// Not synchronized; ranks must attach streams to a channel in the same
/// order. `op` is required on consumer-group ranks and ignored on producers.
Stream attach(Channel& channel, const StreamElementType& type, Operator op = nullptr);

/// Collective over both groups. Every locally attached stream must be closed
/// (terminated locally on producers, fully terminated and drained on
/// consumers); a still-open stream is a usage error.
void free_channel(Channel& channel);

}  // namespace dstream

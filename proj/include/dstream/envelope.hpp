#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dstream {

/// Fixed element shape of a stream. `element_bytes` is the granularity knob:
/// it sets how much data moves per injection and therefore the
/// pipelining/overhead trade-off.
struct StreamElementType {
  std::size_t element_bytes = 0;
  std::string layout_tag;  ///< schema name, registered before attach

  StreamElementType() = default;
  StreamElementType(std::size_t bytes, std::string tag)
      : element_bytes(bytes), layout_tag(std::move(tag)) {}
};

/// Wire unit: one stream element or a termination marker.
struct Envelope {
  enum class Kind : std::uint8_t { Data, Terminate };

  std::uint64_t stream_id = 0;
  int producer_rank = -1;
  /// Monotone counter per (producer, stream), counted over data envelopes.
  std::uint64_t seq_no = 0;
  /// Monotone counter per (producer, stream, destination); used for the
  /// gap/duplicate check on the consumer side. Termination markers take the
  /// next value so they order strictly after all data from their producer.
  std::uint64_t pair_seq = 0;
  Kind kind = Kind::Data;
  std::vector<std::byte> payload;  ///< empty for Terminate
};

}  // namespace dstream

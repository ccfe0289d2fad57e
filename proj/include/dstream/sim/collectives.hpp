#pragma once

#include <cstdint>
#include <vector>

#include "dstream/sim/runtime.hpp"

// Deterministic collectives over an ordered member list, built on addressed
// point-to-point messages. Reductions follow a fixed binomial tree on member
// indices with a fixed combine order, so floating-point results are bitwise
// reproducible for a given member list regardless of timing.
//
// Every member must call the same collective with the same members and tag.
// Back-to-back collectives may reuse a tag (per-pair FIFO keeps them
// matched); concurrently outstanding collectives must use distinct tags.
namespace dstream::sim {

void barrier(RankContext& ctx, const std::vector<int>& members, std::uint64_t tag);

/// Root's `data` is sent to everyone; on non-roots `data` is replaced.
void broadcast(RankContext& ctx, const std::vector<int>& members, std::size_t root_index,
               std::vector<std::byte>& data, std::uint64_t tag);

/// Returns per-member payloads in member order on the root, empty elsewhere.
std::vector<std::vector<std::byte>> gather(RankContext& ctx, const std::vector<int>& members,
                                           std::size_t root_index,
                                           const std::vector<std::byte>& mine,
                                           std::uint64_t tag);

/// Returns per-member payloads in member order on every member.
std::vector<std::vector<std::byte>> allgather(RankContext& ctx,
                                              const std::vector<int>& members,
                                              const std::vector<std::byte>& mine,
                                              std::uint64_t tag);

double reduce_sum(RankContext& ctx, const std::vector<int>& members, std::size_t root_index,
                  double value, std::uint64_t tag);
double allreduce_sum(RankContext& ctx, const std::vector<int>& members, double value,
                     std::uint64_t tag);
std::uint64_t allreduce_sum(RankContext& ctx, const std::vector<int>& members,
                            std::uint64_t value, std::uint64_t tag);
std::uint64_t allreduce_max(RankContext& ctx, const std::vector<int>& members,
                            std::uint64_t value, std::uint64_t tag);

}  // namespace dstream::sim

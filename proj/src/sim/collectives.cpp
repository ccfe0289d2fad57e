#include "dstream/sim/collectives.hpp"

#include <algorithm>
#include <functional>

#include "dstream/bytes.hpp"
#include "dstream/errors.hpp"

namespace dstream::sim {

namespace {

std::size_t my_index(const RankContext& ctx, const std::vector<int>& members) {
  auto it = std::find(members.begin(), members.end(), ctx.rank());
  if (it == members.end())
    throw UsageError("collective: rank " + std::to_string(ctx.rank()) +
                     " is not in the member list");
  return static_cast<std::size_t>(it - members.begin());
}

std::size_t check_root(const std::vector<int>& members, std::size_t root_index) {
  if (root_index >= members.size())
    throw UsageError("collective: root index out of range");
  return root_index;
}

// Reduce-to-root over the virtual ring (root at virtual index 0). The
// accumulator is combined with children in ascending mask order, which fixes
// the floating-point evaluation order.
void tree_reduce(RankContext& ctx, const std::vector<int>& members, std::size_t root_index,
                 std::vector<std::byte>& acc, std::uint64_t tag,
                 const std::function<void(std::vector<std::byte>&, const std::vector<std::byte>&)>&
                     combine) {
  std::size_t n = members.size();
  std::size_t me = my_index(ctx, members);
  std::size_t v = (me + n - check_root(members, root_index)) % n;
  auto real = [&](std::size_t vr) { return members[(vr + root_index) % n]; };
  for (std::size_t mask = 1; mask < n; mask <<= 1) {
    if (v & mask) {
      ctx.send_message(real(v - mask), tag, acc);
      return;
    }
    if (v + mask < n) {
      auto theirs = ctx.recv_message(real(v + mask), tag);
      combine(acc, theirs);
    }
  }
}

void tree_broadcast(RankContext& ctx, const std::vector<int>& members, std::size_t root_index,
                    std::vector<std::byte>& data, std::uint64_t tag) {
  std::size_t n = members.size();
  std::size_t me = my_index(ctx, members);
  std::size_t v = (me + n - check_root(members, root_index)) % n;
  auto real = [&](std::size_t vr) { return members[(vr + root_index) % n]; };
  std::size_t mask = 1;
  while (mask < n) {
    if (v & mask) {
      data = ctx.recv_message(real(v - mask), tag);
      break;
    }
    mask <<= 1;
  }
  mask >>= 1;
  while (mask > 0) {
    if (v + mask < n) ctx.send_message(real(v + mask), tag, data);
    mask >>= 1;
  }
}

}  // namespace

void barrier(RankContext& ctx, const std::vector<int>& members, std::uint64_t tag) {
  std::vector<std::byte> token(1);
  tree_reduce(ctx, members, 0, token, tag,
              [](std::vector<std::byte>&, const std::vector<std::byte>&) {});
  tree_broadcast(ctx, members, 0, token, tag);
}

void broadcast(RankContext& ctx, const std::vector<int>& members, std::size_t root_index,
               std::vector<std::byte>& data, std::uint64_t tag) {
  tree_broadcast(ctx, members, root_index, data, tag);
}

std::vector<std::vector<std::byte>> gather(RankContext& ctx, const std::vector<int>& members,
                                           std::size_t root_index,
                                           const std::vector<std::byte>& mine,
                                           std::uint64_t tag) {
  std::size_t n = members.size();
  std::size_t me = my_index(ctx, members);
  check_root(members, root_index);
  if (me != root_index) {
    ctx.send_message(members[root_index], tag, mine);
    return {};
  }
  std::vector<std::vector<std::byte>> out(n);
  out[root_index] = mine;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == root_index) continue;
    out[i] = ctx.recv_message(members[i], tag);
  }
  return out;
}

std::vector<std::vector<std::byte>> allgather(RankContext& ctx,
                                              const std::vector<int>& members,
                                              const std::vector<std::byte>& mine,
                                              std::uint64_t tag) {
  auto parts = gather(ctx, members, 0, mine, tag);
  std::vector<std::byte> packed;
  if (my_index(ctx, members) == 0) {
    bytes::put_u32(packed, static_cast<std::uint32_t>(parts.size()));
    for (const auto& p : parts) {
      bytes::put_u64(packed, p.size());
      bytes::put_blob(packed, p.data(), p.size());
    }
  }
  tree_broadcast(ctx, members, 0, packed, tag);
  bytes::Reader rd(packed);
  std::size_t count = rd.u32();
  std::vector<std::vector<std::byte>> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t len = rd.u64();
    out[i] = rd.blob(len);
  }
  return out;
}

double reduce_sum(RankContext& ctx, const std::vector<int>& members, std::size_t root_index,
                  double value, std::uint64_t tag) {
  std::vector<std::byte> acc;
  bytes::put_f64(acc, value);
  tree_reduce(ctx, members, root_index, acc, tag,
              [](std::vector<std::byte>& a, const std::vector<std::byte>& b) {
                double x = bytes::Reader(a).f64() + bytes::Reader(b).f64();
                a.clear();
                bytes::put_f64(a, x);
              });
  return bytes::Reader(acc).f64();
}

double allreduce_sum(RankContext& ctx, const std::vector<int>& members, double value,
                     std::uint64_t tag) {
  std::vector<std::byte> acc;
  bytes::put_f64(acc, reduce_sum(ctx, members, 0, value, tag));
  tree_broadcast(ctx, members, 0, acc, tag);
  return bytes::Reader(acc).f64();
}

std::uint64_t allreduce_sum(RankContext& ctx, const std::vector<int>& members,
                            std::uint64_t value, std::uint64_t tag) {
  std::vector<std::byte> acc;
  bytes::put_u64(acc, value);
  tree_reduce(ctx, members, 0, acc, tag,
              [](std::vector<std::byte>& a, const std::vector<std::byte>& b) {
                std::uint64_t x = bytes::Reader(a).u64() + bytes::Reader(b).u64();
                a.clear();
                bytes::put_u64(a, x);
              });
  tree_broadcast(ctx, members, 0, acc, tag);
  return bytes::Reader(acc).u64();
}

std::uint64_t allreduce_max(RankContext& ctx, const std::vector<int>& members,
                            std::uint64_t value, std::uint64_t tag) {
  std::vector<std::byte> acc;
  bytes::put_u64(acc, value);
  tree_reduce(ctx, members, 0, acc, tag,
              [](std::vector<std::byte>& a, const std::vector<std::byte>& b) {
                std::uint64_t x = std::max(bytes::Reader(a).u64(), bytes::Reader(b).u64());
                a.clear();
                bytes::put_u64(a, x);
              });
  tree_broadcast(ctx, members, 0, acc, tag);
  return bytes::Reader(acc).u64();
}

}  // namespace dstream::sim

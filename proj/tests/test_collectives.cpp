#include <atomic>
#include <mutex>
#include <vector>

#include "doctest.h"
#include "dstream/bytes.hpp"
#include "dstream/sim/collectives.hpp"

using namespace dstream;
using namespace dstream::sim;

namespace {

// Reference for the fixed combine order of the binomial reduction: node v
// folds in child v+mask for ascending mask. Must match tree_reduce bitwise.
double tree_sum_reference(std::vector<double> vals) {
  for (std::size_t mask = 1; mask < vals.size(); mask <<= 1)
    for (std::size_t v = 0; v + mask < vals.size(); v += 2 * mask) vals[v] += vals[v + mask];
  return vals.empty() ? 0.0 : vals[0];
}

}  // namespace

TEST_CASE("allreduce sum is bitwise reproducible and timing independent") {
  const int P = 11;
  auto layout = GroupLayout::single_group(P);
  std::vector<int> members;
  std::vector<double> vals;
  for (int r = 0; r < P; ++r) {
    members.push_back(r);
    vals.push_back(0.1 * (r + 1) + 1.0 / (r + 3));
  }
  double expected = tree_sum_reference(vals);

  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    SimConfig cfg;
    cfg.rng_seed = seed;
    cfg.noise = NoiseSpec::exponential(2.0);  // skews timing between seeds
    std::vector<double> got(P);
    auto report = run(layout, cfg, [&](RankContext& ctx) {
      ctx.work(1.0 + 10.0 * ctx.rng_unit(), "jitter");
      got[ctx.rank()] = allreduce_sum(ctx, members, vals[ctx.rank()], 5);
    });
    REQUIRE(report.ok());
    for (int r = 0; r < P; ++r) CHECK(got[r] == expected);  // exact, not approx
  }
}

TEST_CASE("reduce to a nonzero root") {
  const int P = 6;
  auto layout = GroupLayout::single_group(P);
  std::vector<int> members{0, 1, 2, 3, 4, 5};
  std::vector<double> got(P, -1.0);
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    got[ctx.rank()] = reduce_sum(ctx, members, 2, 1.5, 9);
  });
  REQUIRE(report.ok());
  CHECK(got[2] == doctest::Approx(9.0));
}

TEST_CASE("broadcast from arbitrary root") {
  const int P = 5;
  auto layout = GroupLayout::single_group(P);
  std::vector<int> members{0, 1, 2, 3, 4};
  std::mutex mu;
  std::vector<std::uint64_t> got(P, 0);
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    std::vector<std::byte> data;
    if (ctx.rank() == 3) bytes::put_u64(data, 777);
    broadcast(ctx, members, 3, data, 12);
    std::lock_guard lk(mu);
    got[ctx.rank()] = bytes::Reader(data).u64();
  });
  REQUIRE(report.ok());
  for (int r = 0; r < P; ++r) CHECK(got[r] == 777);
}

TEST_CASE("gather and allgather keep member order with variable sizes") {
  const int P = 4;
  auto layout = GroupLayout::single_group(P);
  std::vector<int> members{0, 1, 2, 3};
  std::atomic<int> checked{0};
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    std::vector<std::byte> mine(static_cast<std::size_t>(ctx.rank() + 1),
                                static_cast<std::byte>(ctx.rank()));
    auto parts = allgather(ctx, members, mine, 20);
    REQUIRE(parts.size() == 4);
    for (int i = 0; i < 4; ++i) {
      CHECK(parts[i].size() == static_cast<std::size_t>(i + 1));
      CHECK(std::to_integer<int>(parts[i][0]) == i);
    }
    ++checked;

    auto rooted = gather(ctx, members, 1, mine, 21);
    if (ctx.rank() == 1) {
      REQUIRE(rooted.size() == 4);
      CHECK(rooted[3].size() == 4);
    } else {
      CHECK(rooted.empty());
    }
  });
  REQUIRE(report.ok());
  CHECK(checked == 4);
}

TEST_CASE("integer allreduce variants") {
  const int P = 7;
  auto layout = GroupLayout::single_group(P);
  std::vector<int> members{0, 1, 2, 3, 4, 5, 6};
  std::vector<std::uint64_t> sums(P), maxes(P);
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    auto r = static_cast<std::uint64_t>(ctx.rank());
    sums[ctx.rank()] = allreduce_sum(ctx, members, r + 1, 30);
    maxes[ctx.rank()] = allreduce_max(ctx, members, r * 10, 31);
  });
  REQUIRE(report.ok());
  for (int r = 0; r < P; ++r) {
    CHECK(sums[r] == 28);
    CHECK(maxes[r] == 60);
  }
}

TEST_CASE("collectives over a member subset") {
  auto layout = GroupLayout::split_tail(6, "crew", "rest", 2);
  std::vector<int> members{0, 1, 2, 3};
  std::vector<double> got(6, -1.0);
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    if (ctx.rank() <= 3) got[ctx.rank()] = allreduce_sum(ctx, members, 2.0, 40);
  });
  REQUIRE(report.ok());
  for (int r = 0; r <= 3; ++r) CHECK(got[r] == doctest::Approx(8.0));
  CHECK(got[4] == -1.0);

  // barrier aligns clocks to the latest member
  std::vector<double> after(4, 0.0);
  auto rep2 = run(layout, SimConfig{}, [&](RankContext& ctx) {
    if (ctx.rank() > 3) return;
    ctx.work(100.0 * (ctx.rank() + 1), "stagger");
    barrier(ctx, members, 50);
    after[ctx.rank()] = ctx.now_us();
  });
  REQUIRE(rep2.ok());
  for (int r = 0; r <= 3; ++r) CHECK(after[r] >= 400.0);
}

TEST_CASE("non member calling a collective is an error") {
  auto layout = GroupLayout::single_group(3);
  std::vector<int> members{0, 1};
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    barrier(ctx, members, 60);  // rank 2 is not a member
  });
  CHECK(!report.ok());
  CHECK(report.rank_errors[2].find("not in the member list") != std::string::npos);
}

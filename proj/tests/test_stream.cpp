#include <atomic>
#include <map>
#include <mutex>
#include <vector>

#include "doctest.h"
#include "dstream/bytes.hpp"
#include "dstream/errors.hpp"
#include "dstream/stream.hpp"

using namespace dstream;
using namespace dstream::sim;

namespace {

std::vector<std::byte> element_u64(std::uint64_t v) {
  std::vector<std::byte> out;
  bytes::put_u64(out, v);
  return out;
}

const StreamElementType kU64{8, "u64"};

}  // namespace

TEST_CASE("thousand elements arrive in seq order exactly once") {
  auto layout = GroupLayout::split_tail(2, "prod", "cons", 1);
  std::vector<std::uint64_t> seen;
  std::mutex mu;
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    if (ctx.group() == "prod") {
      auto s = attach(ch, kU64);
      for (std::uint64_t i = 0; i < 1000; ++i) {
        auto ticket = s.isend(element_u64(i));
        CHECK(ticket.seq_no == i);
      }
      s.terminate();
    } else {
      auto s = attach(ch, kU64, [&](const StreamElement& e) {
        std::lock_guard lk(mu);
        seen.push_back(e.seq_no);
        CHECK(bytes::Reader(e.payload).u64() == e.seq_no);
        CHECK(e.producer_rank == 0);
      });
      auto summary = s.operate();
      CHECK(summary.elements_processed == 1000);
      CHECK(summary.terminated);
    }
    free_channel(ch);
  });
  REQUIRE(report.ok());
  REQUIRE(seen.size() == 1000);
  for (std::uint64_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i);
  CHECK(report.undelivered_envelopes == 0);
}

TEST_CASE("two producers three elements each") {
  auto layout = GroupLayout::split_tail(3, "prod", "cons", 1);
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    if (ctx.group() == "prod") {
      auto s = attach(ch, kU64);
      for (std::uint64_t i = 0; i < 3; ++i) s.isend(element_u64(i));
      s.terminate();
    } else {
      auto s = attach(ch, kU64, [](const StreamElement&) {});
      auto summary = s.operate();
      CHECK(summary.elements_processed == 6);
      CHECK(summary.terminated);
    }
    free_channel(ch);
  });
  REQUIRE(report.ok());
}

TEST_CASE("empty stream terminates cleanly") {
  auto layout = GroupLayout::split_tail(3, "prod", "cons", 1);
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    if (ctx.group() == "prod") {
      auto s = attach(ch, kU64);
      s.terminate();
    } else {
      auto s = attach(ch, kU64, [](const StreamElement&) {});
      auto summary = s.operate();
      CHECK(summary.elements_processed == 0);
      CHECK(summary.terminated);
    }
    free_channel(ch);
  });
  REQUIRE(report.ok());
}

TEST_CASE("partial termination leaves stream open") {
  // producer 1 terminates late, gated by a raw message from the consumer
  auto layout = GroupLayout::split_tail(3, "prod", "cons", 1);
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    if (ctx.rank() == 0) {
      auto s = attach(ch, kU64);
      s.terminate();
    } else if (ctx.rank() == 1) {
      auto s = attach(ch, kU64);
      ctx.recv_message(2, 77);
      s.isend(element_u64(42));
      s.terminate();
    } else {
      auto s = attach(ch, kU64, [](const StreamElement&) {});
      ctx.work(50.0, "wait");  // rank 0's marker has long arrived
      auto poll = s.operate_poll();
      CHECK(poll.elements_processed == 0);
      CHECK(!poll.terminated);
      CHECK(!s.fully_terminated());
      ctx.send_message(1, 77, std::vector<std::byte>(1));
      auto summary = s.operate();
      CHECK(summary.elements_processed == 1);
      CHECK(summary.terminated);
      CHECK(s.fully_terminated());
    }
    free_channel(ch);
  });
  REQUIRE(report.ok());
}

TEST_CASE("round robin spreads elements over consumers") {
  auto layout = GroupLayout::split_tail(3, "prod", "cons", 2);
  std::mutex mu;
  std::map<int, std::vector<std::uint64_t>> by_consumer;
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    if (ctx.group() == "prod") {
      auto s = attach(ch, kU64);
      for (std::uint64_t i = 0; i < 6; ++i) s.isend(element_u64(i));
      s.terminate();
    } else {
      auto s = attach(ch, kU64, [&](const StreamElement& e) {
        std::lock_guard lk(mu);
        by_consumer[ctx.rank()].push_back(bytes::Reader(e.payload).u64());
      });
      s.operate();
    }
    free_channel(ch);
  });
  REQUIRE(report.ok());
  // producer 0 starts its cycle at consumer index 0 (= rank 1)
  CHECK(by_consumer[1] == std::vector<std::uint64_t>{0, 2, 4});
  CHECK(by_consumer[2] == std::vector<std::uint64_t>{1, 3, 5});
}

TEST_CASE("addressed sends go to one consumer") {
  auto layout = GroupLayout::split_tail(3, "prod", "cons", 2);
  std::mutex mu;
  std::map<int, int> counts;
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    if (ctx.group() == "prod") {
      auto s = attach(ch, kU64);
      for (std::uint64_t i = 0; i < 5; ++i) s.isend_to(2, element_u64(i));
      s.terminate();
    } else {
      auto s = attach(ch, kU64, [&](const StreamElement&) {
        std::lock_guard lk(mu);
        counts[ctx.rank()]++;
      });
      s.operate();
    }
    free_channel(ch);
  });
  REQUIRE(report.ok());
  CHECK(counts[1] == 0);
  CHECK(counts[2] == 5);
}

TEST_CASE("delayed producer's elements come last") {
  auto layout = GroupLayout::split_tail(3, "prod", "cons", 1);
  std::vector<int> arrival_producers;
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    if (ctx.group() == "prod") {
      auto s = attach(ch, kU64);
      if (ctx.rank() == 1) ctx.work(10000.0, "delay");
      for (std::uint64_t i = 0; i < 4; ++i) s.isend(element_u64(i));
      s.terminate();
    } else {
      auto s = attach(ch, kU64, [&](const StreamElement& e) {
        arrival_producers.push_back(e.producer_rank);
      });
      s.operate();
    }
    free_channel(ch);
  });
  REQUIRE(report.ok());
  REQUIRE(arrival_producers.size() == 8);
  CHECK(arrival_producers == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1});
}

TEST_CASE("in flight window caps buffering and wakes producers") {
  auto layout = GroupLayout::split_tail(2, "prod", "cons", 1);
  SimConfig cfg;
  cfg.inflight_window = 4;
  auto report = run(layout, cfg, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    if (ctx.group() == "prod") {
      auto s = attach(ch, kU64);
      for (std::uint64_t i = 0; i < 100; ++i) s.isend(element_u64(i));
      s.terminate();
    } else {
      auto s = attach(ch, kU64, [&](const StreamElement&) {});
      s.operate();
    }
    free_channel(ch);
  });
  REQUIRE(report.ok());
  CHECK(report.max_in_flight <= 4);
  CHECK(report.max_in_flight >= 1);
}

TEST_CASE("usage errors on the producer side") {
  auto layout = GroupLayout::split_tail(2, "prod", "cons", 1);
  std::atomic<int> caught{0};
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    if (ctx.group() == "prod") {
      auto s = attach(ch, kU64);
      try {
        s.isend(std::vector<std::byte>(3));  // wrong size
      } catch (const UsageError&) {
        ++caught;
      }
      s.isend(element_u64(1));
      s.terminate();
      try {
        s.isend(element_u64(2));  // send after terminate
      } catch (const UsageError&) {
        ++caught;
      }
      try {
        s.terminate();  // double terminate
      } catch (const UsageError&) {
        ++caught;
      }
      try {
        s.operate();  // operate on producer
      } catch (const UsageError&) {
        ++caught;
      }
    } else {
      auto s = attach(ch, kU64, [](const StreamElement&) {});
      s.operate();
      try {
        s.isend(element_u64(9));  // isend on consumer
      } catch (const UsageError&) {
        ++caught;
      }
    }
    free_channel(ch);
  });
  REQUIRE(report.ok());
  CHECK(caught == 5);
}

TEST_CASE("channel lifecycle errors") {
  auto layout = GroupLayout::split_tail(2, "prod", "cons", 1);
  std::atomic<int> caught{0};
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    auto s = ctx.group() == "prod"
                 ? attach(ch, kU64)
                 : attach(ch, kU64, [](const StreamElement&) {});
    if (ctx.group() == "prod") {
      try {
        free_channel(ch);  // stream still open locally
      } catch (const UsageError&) {
        ++caught;
      }
      s.terminate();
    } else {
      s.operate();
    }
    free_channel(ch);
    try {
      free_channel(ch);  // double free
    } catch (const UsageError&) {
      ++caught;
    }
    try {
      attach(ch, kU64, [](const StreamElement&) {});  // attach after free
    } catch (const UsageError&) {
      ++caught;
    }
    if (ctx.group() == "prod") {
      try {
        s.isend(element_u64(3));  // stream dead after free
      } catch (const UsageError&) {
        ++caught;
      }
    }
  });
  REQUIRE(report.ok());
  CHECK(caught == 6);
}

TEST_CASE("misc attach rules") {
  auto layout = GroupLayout::split_tail(2, "prod", "cons", 1);
  std::atomic<int> caught{0};
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    try {
      create_channel(ctx, "prod", "prod");  // same group both sides
    } catch (const UsageError&) {
      ++caught;
    }
    auto ch = create_channel(ctx, "prod", "cons");
    try {
      attach(ch, StreamElementType{8, "never-registered"});
    } catch (const UsageError&) {
      ++caught;
    }
    ctx.register_layout("u64");
    if (ctx.group() == "cons") {
      try {
        attach(ch, kU64);  // consumer without operator
      } catch (const UsageError&) {
        ++caught;
      }
    }
    auto a = ctx.group() == "prod" ? attach(ch, kU64)
                                   : attach(ch, kU64, [](const StreamElement&) {});
    auto b = ctx.group() == "prod" ? attach(ch, kU64)
                                   : attach(ch, kU64, [](const StreamElement&) {});
    CHECK(a.uid() != b.uid());
    for (auto* s : {&a, &b}) {
      if (ctx.group() == "prod")
        s->terminate();
      else
        s->operate();
    }
    free_channel(ch);
  });
  REQUIRE(report.ok());
  CHECK(caught == 5);
}

TEST_CASE("unconsumed envelopes are counted at exit") {
  auto layout = GroupLayout::split_tail(2, "prod", "cons", 1);
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    ctx.register_layout("u64");
    auto ch = create_channel(ctx, "prod", "cons");
    if (ctx.group() == "prod") {
      auto s = attach(ch, kU64);
      for (std::uint64_t i = 0; i < 3; ++i) s.isend(element_u64(i));
      s.terminate();
    } else {
      attach(ch, kU64, [](const StreamElement&) {});
      // never operates; envelopes stay queued
    }
  });
  REQUIRE(report.ok());
  CHECK(report.undelivered_envelopes == 4);  // 3 data + 1 marker
}

TEST_CASE("mismatched channel creation deadlocks with a report") {
  auto layout = GroupLayout(3, {{"a", {0}}, {"b", {1}}, {"c", {2}}});
  auto report = run(layout, SimConfig{}, [&](RankContext& ctx) {
    if (ctx.rank() == 0) {
      create_channel(ctx, "a", "b");
    } else if (ctx.rank() == 1) {
      create_channel(ctx, "b", "c");  // wrong pairing
    } else {
      create_channel(ctx, "b", "c");
    }
  });
  CHECK(!report.ok());
  CHECK(report.failure.find("deadlock") != std::string::npos);
  CHECK(report.failure.find("chan:") != std::string::npos);
}

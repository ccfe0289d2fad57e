#include <algorithm>

#include "doctest.h"
#include "dstream/apps/workload.hpp"
#include "dstream/errors.hpp"

using namespace dstream;
using namespace dstream::apps::workload;

TEST_CASE("streamed statistics match the offline sort") {
  WorkloadConfig config;
  config.producer_ranks = 6;
  config.records_per_producer = 200;
  config.seed = 17;

  WorkloadResult result = run_workload(config);
  REQUIRE_MESSAGE(result.report.ok(), result.report.failure);

  WorkloadStats oracle = offline_stats(synthetic_durations(config));
  CHECK(result.stats.count == 1200);
  CHECK(result.stats.count == oracle.count);
  CHECK(result.stats.min_us == oracle.min_us);
  CHECK(result.stats.max_us == oracle.max_us);
  CHECK(result.stats.median_us == oracle.median_us);
  CHECK(result.stats.mean_us == doctest::Approx(oracle.mean_us).epsilon(1e-12));

  REQUIRE(result.per_producer.size() == 6);
  for (std::uint64_t n : result.per_producer) CHECK(n == 200);
}

TEST_CASE("workload runs are deterministic, including under noise") {
  WorkloadConfig config;
  config.producer_ranks = 4;
  config.records_per_producer = 150;
  config.sim.noise = sim::NoiseSpec::exponential(0.5);

  WorkloadResult a = run_workload(config);
  WorkloadResult b = run_workload(config);
  REQUIRE_MESSAGE(a.report.ok(), a.report.failure);
  CHECK(a.report.makespan_us == b.report.makespan_us);
  CHECK(a.stats.median_us == b.stats.median_us);

  WorkloadStats oracle = offline_stats(synthetic_durations(config));
  CHECK(a.stats.min_us == oracle.min_us);
  CHECK(a.stats.median_us == oracle.median_us);
}

TEST_CASE("task durations vary across producers but not across calls") {
  WorkloadConfig config;
  std::vector<double> p0 = producer_durations(config, 0);
  std::vector<double> p1 = producer_durations(config, 1);
  CHECK(p0 != p1);
  CHECK(p0 == producer_durations(config, 0));
  for (double d : p0) CHECK(d > 0.0);
}

TEST_CASE("offline stats handle edge cases") {
  WorkloadStats empty = offline_stats({});
  CHECK(empty.count == 0);

  WorkloadStats one = offline_stats({3.5});
  CHECK(one.count == 1);
  CHECK(one.min_us == 3.5);
  CHECK(one.median_us == 3.5);

  WorkloadStats even = offline_stats({4.0, 1.0, 3.0, 2.0});
  CHECK(even.median_us == 2.5);
  CHECK(even.mean_us == 2.5);
  CHECK(even.min_us == 1.0);
  CHECK(even.max_us == 4.0);

  WorkloadStats odd = offline_stats({5.0, 1.0, 9.0});
  CHECK(odd.median_us == 5.0);
}

TEST_CASE("workload config validation") {
  WorkloadConfig ok;
  ok.validate();
  CHECK(ok.total_ranks() == 7);
  CHECK(ok.analysis_rank() == 6);

  auto expect_reject = [](auto mutate) {
    WorkloadConfig config;
    mutate(config);
    CHECK_THROWS_AS(config.validate(), ValidationError);
  };
  expect_reject([](WorkloadConfig& c) { c.producer_ranks = 0; });
  expect_reject([](WorkloadConfig& c) { c.mean_us = 0.0; });
  expect_reject([](WorkloadConfig& c) { c.per_record_us = -0.5; });
  expect_reject([](WorkloadConfig& c) { c.batch_records = 0; });
  expect_reject([](WorkloadConfig& c) { c.sim.total_ranks = 2; });
}

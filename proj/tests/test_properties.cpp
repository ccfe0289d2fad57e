#include <doctest.h>

#include "support/protocol_cases.hpp"

// Randomized end-to-end checks of the stream protocol: random layouts,
// topologies, element sizes, send patterns, windows and noise, with
// exactly-once / FIFO / routing / integrity invariants checked after every
// run. The acceptance gate reruns the same generator at a higher count.

TEST_CASE("randomized protocol cases hold the stream invariants") {
  protocol_cases::Outcome outcome = protocol_cases::run_property_cases(0x9701, 250);
  INFO(outcome.first_failure);
  CHECK(outcome.cases_run == 250);
  CHECK(outcome.failures == 0);
}

TEST_CASE("property generator is reproducible") {
  protocol_cases::Outcome a = protocol_cases::run_property_cases(77, 10);
  protocol_cases::Outcome b = protocol_cases::run_property_cases(77, 10);
  CHECK(a.failures == 0);
  CHECK(b.failures == 0);
  CHECK(a.cases_run == b.cases_run);
}

TEST_CASE("property checker flags seeded faults") {
  using namespace protocol_cases::detail;
  CaseSpec spec;
  spec.total_ranks = 2;
  spec.left_size = 1;
  spec.channels = 1;

  auto clean = [&] {
    CaseResult r;
    r.logs.resize(2);
    r.producer_counts[0] = {2, 0};
    r.producer_counts[1] = {0, 0};
    r.logs[0].sends = {SendRec{0, 0, 1, 10}, SendRec{0, 1, 1, 11}};
    r.logs[1].deliveries = {Delivery{0, 0, 0, 10, true}, Delivery{0, 0, 1, 11, true}};
    return r;
  };
  CHECK(check_case(spec, clean()).empty());

  CaseResult fifo = clean();
  std::swap(fifo.logs[1].deliveries[0], fifo.logs[1].deliveries[1]);
  CHECK(check_case(spec, fifo).find("FIFO") != std::string::npos);

  CaseResult lost = clean();
  lost.logs[1].deliveries.pop_back();
  CHECK(check_case(spec, lost).find("lost element") != std::string::npos);

  CaseResult misrouted = clean();
  misrouted.logs[0].sends[1].consumer_rank = 0;
  CHECK(check_case(spec, misrouted).find("misrouted") != std::string::npos);

  CaseResult corrupt = clean();
  corrupt.logs[1].deliveries[1].integrity = false;
  CHECK(check_case(spec, corrupt).find("corrupt") != std::string::npos);

  CaseResult dup = clean();
  dup.logs[1].deliveries[1] = dup.logs[1].deliveries[0];
  std::string why = check_case(spec, dup);
  CHECK(!why.empty());
}

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "dstream/errors.hpp"
#include "dstream/perf/model.hpp"
#include "dstream/sim/noise.hpp"
#include "dstream/sim/trace.hpp"
#include "support/perf_reference.hpp"

using namespace dstream;
using perf::BetaModel;
using perf::PerfParams;

namespace {

bool close_rel(double a, double b, double rel = 1e-12) {
  double scale = std::max({std::abs(a), std::abs(b), 1.0});
  return std::abs(a - b) <= rel * scale;
}

PerfParams random_params(sim::Rng& rng) {
  PerfParams p;
  p.t_w0 = rng.next_uniform(0.0, 200.0);
  p.t_w1 = rng.next_uniform(0.0, 200.0);
  p.t_w1_prime = rng.next_uniform(0.0, 200.0);
  p.t_sigma = rng.next_uniform(0.0, 50.0);
  p.alpha = rng.next_uniform(0.02, 0.98);
  p.beta = rng.next_uniform(0.0, 1.0);
  if (rng.next_u64() % 4 == 0) {
    p.data_volume_d = 0.0;
    p.granularity_s = rng.next_uniform(1.0, 1000.0);
  } else {
    p.data_volume_d = rng.next_uniform(1.0, 1e7);
    p.granularity_s = rng.next_uniform(0.0, 1.0) * p.data_volume_d;
    if (p.granularity_s <= 0.0) p.granularity_s = p.data_volume_d;
  }
  p.overhead_o = rng.next_uniform(0.0, 0.05);
  return p;
}

}  // namespace

TEST_CASE("conventional and ideal-overlap predictions match the reference") {
  sim::Rng rng(101);
  for (int i = 0; i < 20000; ++i) {
    PerfParams p = random_params(rng);
    CHECK(close_rel(perf::predict_conventional(p),
                    perf_reference::conventional(p.t_w0, p.t_sigma, p.t_w1)));
    CHECK(close_rel(perf::predict_decoupled_max(p),
                    perf_reference::decoupled_max(p.t_w0, p.t_sigma, p.t_w1_prime, p.alpha)));
  }
}

TEST_CASE("degraded prediction matches the reference over random parameters") {
  sim::Rng rng(202);
  for (int i = 0; i < 100000; ++i) {
    PerfParams p = random_params(rng);
    double beta0 = rng.next_uniform(0.0, 1.0);
    auto pred = perf::predict_decoupled(p, BetaModel::constant(beta0));
    double want = perf_reference::decoupled(p.t_w0, p.t_sigma, p.t_w1_prime, p.alpha, beta0,
                                            p.data_volume_d, p.granularity_s, p.overhead_o);
    CHECK(close_rel(pred.t_decoupled, want));
    CHECK(close_rel(pred.t_conventional, perf_reference::conventional(p.t_w0, p.t_sigma, p.t_w1)));
    CHECK(close_rel(pred.speedup, pred.t_conventional / pred.t_decoupled));
    CHECK(pred.breakdown.beta == beta0);
  }
}

TEST_CASE("affine beta model matches the reference and clamps to [0, 1]") {
  sim::Rng rng(303);
  for (int i = 0; i < 20000; ++i) {
    PerfParams p = random_params(rng);
    if (p.data_volume_d == 0.0) continue;
    double beta0 = rng.next_uniform(0.0, 1.0);
    double k = rng.next_uniform(-beta0, 3.0);
    BetaModel model = BetaModel::affine(beta0, k);
    double beta = perf_reference::beta_affine(beta0, k, p.granularity_s, p.data_volume_d);
    auto pred = perf::predict_decoupled(p, model);
    CHECK(close_rel(pred.breakdown.beta, beta));
    CHECK(close_rel(pred.t_decoupled,
                    perf_reference::decoupled(p.t_w0, p.t_sigma, p.t_w1_prime, p.alpha, beta,
                                              p.data_volume_d, p.granularity_s, p.overhead_o)));
    CHECK(pred.breakdown.beta >= 0.0);
    CHECK(pred.breakdown.beta <= 1.0);
  }
}

TEST_CASE("beta endpoints reduce to the two closed forms") {
  sim::Rng rng(404);
  for (int i = 0; i < 20000; ++i) {
    PerfParams p = random_params(rng);
    p.overhead_o = 0.0;
    auto worst = perf::predict_decoupled(p, BetaModel::constant(1.0));
    CHECK(close_rel(worst.t_decoupled,
                    p.t_w0 / (1.0 - p.alpha) + p.t_sigma + p.t_w1_prime / p.alpha));
    auto best = perf::predict_decoupled(p, BetaModel::constant(0.0));
    CHECK(close_rel(best.t_decoupled, p.t_w1_prime / p.alpha));
  }
}

TEST_CASE("zero overhead collapses the overhead term regardless of placement") {
  sim::Rng rng(505);
  for (int i = 0; i < 20000; ++i) {
    PerfParams p = random_params(rng);
    p.overhead_o = 0.0;
    double beta0 = rng.next_uniform(0.0, 1.0);
    auto inside = perf::predict_decoupled(p, BetaModel::constant(beta0), false);
    auto outside = perf::predict_decoupled(p, BetaModel::constant(beta0), true);
    double plain =
        perf_reference::decoupled_no_overhead(p.t_w0, p.t_sigma, p.t_w1_prime, p.alpha, beta0);
    CHECK(close_rel(inside.t_decoupled, plain));
    CHECK(close_rel(outside.t_decoupled, plain));
    CHECK(inside.breakdown.overhead_term == 0.0);
  }
}

TEST_CASE("overhead-outside variant matches its own reference") {
  sim::Rng rng(606);
  for (int i = 0; i < 20000; ++i) {
    PerfParams p = random_params(rng);
    double beta0 = rng.next_uniform(0.0, 1.0);
    auto pred = perf::predict_decoupled(p, BetaModel::constant(beta0), true);
    CHECK(close_rel(pred.t_decoupled, perf_reference::decoupled_overhead_outside(
                                          p.t_w0, p.t_sigma, p.t_w1_prime, p.alpha, beta0,
                                          p.data_volume_d, p.granularity_s, p.overhead_o)));
    auto inside = perf::predict_decoupled(p, BetaModel::constant(beta0), false);
    CHECK(pred.t_decoupled >= inside.t_decoupled - 1e-12 * std::max(1.0, pred.t_decoupled));
  }
}

TEST_CASE("worst-case overlap is never better than the ideal-overlap bound") {
  sim::Rng rng(707);
  for (int i = 0; i < 20000; ++i) {
    PerfParams p = random_params(rng);
    p.overhead_o = 0.0;
    auto worst = perf::predict_decoupled(p, BetaModel::constant(1.0));
    double ideal = perf::predict_decoupled_max(p);
    CHECK(worst.t_decoupled >= ideal - 1e-12 * std::max(1.0, worst.t_decoupled));
  }
}

TEST_CASE("prediction is monotone in work, imbalance, and overhead") {
  sim::Rng rng(808);
  for (int i = 0; i < 5000; ++i) {
    PerfParams p = random_params(rng);
    double beta0 = rng.next_uniform(0.0, 1.0);
    BetaModel model = BetaModel::constant(beta0);
    double base = perf::predict_decoupled(p, model).t_decoupled;

    PerfParams q = p;
    q.t_w0 += rng.next_uniform(0.0, 100.0);
    CHECK(perf::predict_decoupled(q, model).t_decoupled >= base - 1e-12);

    q = p;
    q.t_w1_prime += rng.next_uniform(0.0, 100.0);
    CHECK(perf::predict_decoupled(q, model).t_decoupled >= base - 1e-12);

    q = p;
    q.t_sigma += rng.next_uniform(0.0, 100.0);
    CHECK(perf::predict_decoupled(q, model).t_decoupled >= base - 1e-12);

    q = p;
    q.overhead_o += rng.next_uniform(0.0, 0.1);
    CHECK(perf::predict_decoupled(q, model).t_decoupled >= base - 1e-12);
  }
}

TEST_CASE("parameter validation rejects out-of-range values") {
  PerfParams good;
  good.t_w0 = 1.0;
  good.t_w1 = 1.0;
  good.t_w1_prime = 1.0;
  good.alpha = 0.5;
  CHECK_NOTHROW(good.validate());

  auto expect_reject = [&](auto mutate) {
    PerfParams p = good;
    mutate(p);
    CHECK_THROWS_AS(p.validate(), ValidationError);
  };
  expect_reject([](PerfParams& p) { p.t_w0 = -1.0; });
  expect_reject([](PerfParams& p) { p.t_w1 = -0.5; });
  expect_reject([](PerfParams& p) { p.t_w1_prime = -2.0; });
  expect_reject([](PerfParams& p) { p.t_sigma = -0.1; });
  expect_reject([](PerfParams& p) { p.alpha = 0.0; });
  expect_reject([](PerfParams& p) { p.alpha = 1.0; });
  expect_reject([](PerfParams& p) { p.alpha = -0.2; });
  expect_reject([](PerfParams& p) { p.beta = 1.5; });
  expect_reject([](PerfParams& p) { p.beta = -0.5; });
  expect_reject([](PerfParams& p) { p.granularity_s = 0.0; });
  expect_reject([](PerfParams& p) {
    p.data_volume_d = 10.0;
    p.granularity_s = 11.0;
  });
  expect_reject([](PerfParams& p) { p.overhead_o = -1.0; });
  expect_reject([](PerfParams& p) { p.total_ranks = -3; });
  expect_reject([](PerfParams& p) { p.t_w0 = std::nan(""); });

  CHECK_THROWS_AS(BetaModel::constant(1.2).validate(), ValidationError);
  CHECK_THROWS_AS(BetaModel::affine(0.1, -0.5).validate(), ValidationError);
  CHECK_NOTHROW(BetaModel::affine(0.5, -0.5).validate());
  CHECK_NOTHROW(BetaModel::affine(0.2, 5.0).validate());
}

TEST_CASE("alpha sweep finds the balance point and prefers smaller alpha on ties") {
  PerfParams p;
  p.t_w0 = 90.0;
  p.t_w1_prime = 10.0;
  p.t_sigma = 0.0;

  SUBCASE("balance point of the ideal-overlap shape") {
    // With beta = 0 the producer branch vanishes and smaller alpha always
    // wins, so use beta = 1: t(a) = 90/(1-a) + 10/a, minimized at a = 0.25.
    std::vector<double> grid;
    for (int i = 1; i <= 99; ++i) grid.push_back(i / 100.0);
    auto sweep = perf::sweep_alpha(p, BetaModel::constant(1.0), grid);
    CHECK(sweep.best == doctest::Approx(0.25));
    CHECK(sweep.rows.size() == 99);
    CHECK(std::is_sorted(sweep.rows.begin(), sweep.rows.end(),
                         [](const auto& a, const auto& b) { return a.alpha < b.alpha; }));
  }

  SUBCASE("flat objective resolves ties toward the smaller alpha") {
    PerfParams flat;
    flat.t_w0 = 0.0;
    flat.t_w1_prime = 0.0;
    flat.t_sigma = 10.0;
    auto sweep = perf::sweep_alpha(flat, BetaModel::constant(1.0), {0.75, 0.25, 0.5});
    CHECK(sweep.best == 0.25);
  }

  SUBCASE("per-alpha consumer cost callback is honored") {
    auto cost = [](double a) { return 5.0 + 20.0 * a; };
    auto sweep = perf::sweep_alpha(p, BetaModel::constant(0.5), {0.2, 0.4}, cost);
    REQUIRE(sweep.rows.size() == 2);
    CHECK(close_rel(sweep.rows[0].prediction.breakdown.consumer_term, cost(0.2) / 0.2));
    CHECK(close_rel(sweep.rows[1].prediction.breakdown.consumer_term, cost(0.4) / 0.4));
  }

  SUBCASE("grid validation") {
    CHECK_THROWS_AS(perf::sweep_alpha(p, BetaModel::constant(1.0), {}), UsageError);
    CHECK_THROWS_AS(perf::sweep_alpha(p, BetaModel::constant(1.0), {0.5, 1.0}), ValidationError);
    CHECK_THROWS_AS(perf::sweep_alpha(p, BetaModel::constant(1.0), {0.0}), ValidationError);
  }
}

TEST_CASE("granularity sweep locates the interior optimum of the affine model") {
  PerfParams p;
  p.t_w0 = 100.0;
  p.t_sigma = 5.0;
  p.t_w1_prime = 40.0;
  p.alpha = 0.25;
  p.data_volume_d = 1e6;
  p.overhead_o = 0.001;
  BetaModel model = BetaModel::affine(0.1, 0.9);

  std::vector<double> grid;
  for (int i = 1; i <= 100; ++i) grid.push_back(100.0 * i);
  auto sweep = perf::sweep_granularity(p, model, grid);

  std::vector<double> fine;
  for (int i = 1; i <= 1000; ++i) fine.push_back(10.0 * i);
  double best_fine = 0.0;
  double best_val = 0.0;
  for (double s : fine) {
    double beta = perf_reference::beta_affine(0.1, 0.9, s, p.data_volume_d);
    double v = perf_reference::decoupled(p.t_w0, p.t_sigma, p.t_w1_prime, p.alpha, beta,
                                         p.data_volume_d, s, p.overhead_o);
    if (best_fine == 0.0 || v < best_val) {
      best_fine = s;
      best_val = v;
    }
  }

  CHECK(sweep.best > grid.front());
  CHECK(sweep.best < grid.back());
  CHECK(std::abs(sweep.best - best_fine) <= 100.0);

  SUBCASE("grid validation") {
    CHECK_THROWS_AS(perf::sweep_granularity(p, model, {}), UsageError);
    CHECK_THROWS_AS(perf::sweep_granularity(p, model, {0.0}), ValidationError);
    CHECK_THROWS_AS(perf::sweep_granularity(p, model, {2e6}), ValidationError);
    PerfParams no_volume = p;
    no_volume.data_volume_d = 0.0;
    no_volume.granularity_s = 1.0;
    CHECK_THROWS_AS(perf::sweep_granularity(no_volume, model, {1.0}), ValidationError);
  }
}

TEST_CASE("beta estimation from planted traces") {
  using sim::EventTrace;
  using sim::TraceRecord;

  SUBCASE("single producer record cut at the first consumer receive") {
    EventTrace t;
    t.append(TraceRecord{0, 0, 1000, "compute:map"});
    t.append(TraceRecord{1, 300, 310, "recv"});
    CHECK(perf::estimate_beta(t, "map", {1}) == doctest::Approx(0.3));
  }

  SUBCASE("multiple producer records weight by overlap") {
    EventTrace t;
    t.append(TraceRecord{0, 0, 100, "compute:map"});
    t.append(TraceRecord{0, 200, 300, "compute:map"});
    t.append(TraceRecord{1, 250, 260, "recv"});
    CHECK(perf::estimate_beta(t, "map", {1}) == doctest::Approx(0.75));
  }

  SUBCASE("consumer compute also marks the start of processing") {
    EventTrace t;
    t.append(TraceRecord{0, 0, 1000, "compute:map"});
    t.append(TraceRecord{2, 400, 450, "compute:reduce"});
    CHECK(perf::estimate_beta(t, "map", {2}) == doctest::Approx(0.4));
  }

  SUBCASE("consumer active from the start gives full overlap") {
    EventTrace t;
    t.append(TraceRecord{0, 0, 1000, "compute:map"});
    t.append(TraceRecord{1, 0, 5, "recv"});
    CHECK(perf::estimate_beta(t, "map", {1}) == 0.0);
  }

  SUBCASE("consumer that never processes gives no overlap") {
    EventTrace t;
    t.append(TraceRecord{0, 0, 1000, "compute:map"});
    t.append(TraceRecord{1, 0, 1000, "idle"});
    t.append(TraceRecord{1, 1000, 1001, "send"});
    CHECK(perf::estimate_beta(t, "map", {1}) == 1.0);
  }

  SUBCASE("producer ranks outside the consumer group do not trigger the cut") {
    EventTrace t;
    t.append(TraceRecord{0, 0, 1000, "compute:map"});
    t.append(TraceRecord{0, 0, 0, "recv"});
    t.append(TraceRecord{3, 600, 610, "recv"});
    CHECK(perf::estimate_beta(t, "map", {3}) == doctest::Approx(0.6));
  }

  SUBCASE("missing producer records is an error") {
    EventTrace t;
    t.append(TraceRecord{1, 0, 10, "recv"});
    CHECK_THROWS_AS(perf::estimate_beta(t, "map", {1}), ValidationError);
    CHECK_THROWS_AS(perf::estimate_beta(t, "map", {-1}), ValidationError);
  }
}

TEST_CASE("suitability report covers the five categories in a fixed order") {
  perf::OpProfile reduce;
  reduce.time_variance_cv = 0.6;
  reduce.complexity_shrinks_on_fewer_ranks = true;
  reduce.continuous_data_flow = true;
  reduce.orthogonal = false;
  reduce.needs_special_hardware = false;

  auto lines = perf::suitability_report(reduce);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0].category == "orthogonal operations with little data dependency");
  CHECK(lines[1].category == "high complexity that shrinks on fewer processes");
  CHECK(lines[2].category == "large execution time variance");
  CHECK(lines[3].category == "continuous data flow throughout execution");
  CHECK(lines[4].category == "benefits from special-purpose compute units");

  CHECK_FALSE(lines[0].pass);
  CHECK(lines[1].pass);
  CHECK(lines[2].pass);
  CHECK(lines[3].pass);
  CHECK_FALSE(lines[4].pass);
  for (const auto& line : lines) CHECK_FALSE(line.rationale.empty());

  perf::OpProfile dull;
  auto dull_lines = perf::suitability_report(dull);
  for (const auto& line : dull_lines) CHECK_FALSE(line.pass);

  perf::OpProfile borderline;
  borderline.time_variance_cv = perf::kVarianceCvThreshold;
  CHECK_FALSE(perf::suitability_report(borderline)[2].pass);
  borderline.time_variance_cv = perf::kVarianceCvThreshold + 0.01;
  CHECK(perf::suitability_report(borderline)[2].pass);

  auto again = perf::suitability_report(reduce);
  for (size_t i = 0; i < lines.size(); ++i) {
    CHECK(again[i].pass == lines[i].pass);
    CHECK(again[i].rationale == lines[i].rationale);
  }
}

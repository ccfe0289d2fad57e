#include <cmath>

#include "doctest.h"
#include "dstream/errors.hpp"
#include "dstream/sim/noise.hpp"

using dstream::ValidationError;
using dstream::sim::NoiseSpec;
using dstream::sim::Rng;

TEST_CASE("rng determinism and derivation") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    auto x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
    all_equal = all_equal && (x == y);
    any_diff = any_diff || (x != z);
  }
  CHECK(all_equal);
  CHECK(any_diff);
  CHECK(Rng::derive(1, 0) != Rng::derive(1, 1));
  CHECK(Rng::derive(1, 0) != Rng::derive(2, 0));
  CHECK(Rng::derive(7, 3) == Rng::derive(7, 3));
}

TEST_CASE("unit draws stay in [0,1)") {
  Rng r(7);
  for (int i = 0; i < 10000; ++i) {
    double u = r.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("distribution moments are roughly right") {
  Rng r(123);
  const int n = 200000;

  double sum = 0;
  for (int i = 0; i < n; ++i) sum += r.next_uniform(2.0, 6.0);
  CHECK(sum / n == doctest::Approx(4.0).epsilon(0.01));

  sum = 0;
  for (int i = 0; i < n; ++i) sum += r.next_exponential(3.0);
  CHECK(sum / n == doctest::Approx(3.0).epsilon(0.02));

  sum = 0;
  double sq = 0;
  for (int i = 0; i < n; ++i) {
    double x = r.next_normal(10.0, 2.0);
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  CHECK(mean == doctest::Approx(10.0).epsilon(0.01));
  CHECK(std::sqrt(sq / n - mean * mean) == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("noise sampling") {
  Rng r(5);
  CHECK(NoiseSpec::none().sample(r) == 0.0);

  auto uni = NoiseSpec::uniform(0.25, 0.25);
  CHECK(uni.sample(r) == doctest::Approx(0.25));

  auto norm = NoiseSpec::normal(0.1, 5.0);  // huge cv: negative raw draws happen
  bool saw_zero_clamp = false;
  double min_seen = 1e9;
  for (int i = 0; i < 2000; ++i) {
    double s = norm.sample(r);
    CHECK(s >= 0.0);
    min_seen = std::min(min_seen, s);
    saw_zero_clamp = saw_zero_clamp || s == 0.0;
  }
  CHECK(saw_zero_clamp);
  CHECK(min_seen == 0.0);
}

TEST_CASE("noise parse round trips") {
  CHECK(NoiseSpec::parse("none").kind == NoiseSpec::Kind::None);
  auto u = NoiseSpec::parse("uniform:0.5,1.5");
  CHECK(u.kind == NoiseSpec::Kind::Uniform);
  CHECK(u.a == doctest::Approx(0.5));
  CHECK(u.b == doctest::Approx(1.5));
  auto e = NoiseSpec::parse("exponential:0.3");
  CHECK(e.kind == NoiseSpec::Kind::Exponential);
  CHECK(e.a == doctest::Approx(0.3));
  auto nm = NoiseSpec::parse("normal:1.0,0.5");
  CHECK(nm.kind == NoiseSpec::Kind::Normal);
  CHECK(nm.b == doctest::Approx(0.5));
  CHECK(NoiseSpec::parse(nm.describe()).b == doctest::Approx(0.5));

  CHECK_THROWS_AS(NoiseSpec::parse("weibull:1"), ValidationError);
  CHECK_THROWS_AS(NoiseSpec::parse("uniform:3,1"), ValidationError);
  CHECK_THROWS_AS(NoiseSpec::parse("uniform:1"), ValidationError);
}

#include "dstream/sim/noise.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dstream/errors.hpp"

namespace dstream::sim {

namespace {
std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

double Rng::next_exponential(double mean) {
  double u = next_unit();
  return -mean * std::log1p(-u);
}

double Rng::next_normal(double mean, double stddev) {
  // Box-Muller; one draw discarded to keep the call->sample mapping simple.
  double u1 = next_unit();
  double u2 = next_unit();
  while (u1 <= 0.0) u1 = next_unit();
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (0x632be59bd9b4e019ULL * (salt + 1));
  splitmix64(x);
  return splitmix64(x);
}

void NoiseSpec::validate() const {
  switch (kind) {
    case Kind::None:
      return;
    case Kind::Uniform:
      if (a < 0.0 || b < a)
        throw ValidationError("NoiseSpec: uniform requires 0 <= lo <= hi");
      return;
    case Kind::Exponential:
      if (a < 0.0) throw ValidationError("NoiseSpec: exponential mean must be >= 0");
      return;
    case Kind::Normal:
      if (b < 0.0) throw ValidationError("NoiseSpec: normal cv must be >= 0");
      return;
  }
}

double NoiseSpec::sample(Rng& rng) const {
  double s = 0.0;
  switch (kind) {
    case Kind::None:
      return 0.0;
    case Kind::Uniform:
      s = rng.next_uniform(a, b);
      break;
    case Kind::Exponential:
      s = rng.next_exponential(a);
      break;
    case Kind::Normal:
      s = rng.next_normal(a, b * a);
      break;
  }
  return s < 0.0 ? 0.0 : s;
}

std::string NoiseSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::None:
      os << "none";
      break;
    case Kind::Uniform:
      os << "uniform:" << a << "," << b;
      break;
    case Kind::Exponential:
      os << "exponential:" << a;
      break;
    case Kind::Normal:
      os << "normal:" << a << "," << b;
      break;
  }
  return os.str();
}

NoiseSpec NoiseSpec::parse(const std::string& text) {
  auto colon = text.find(':');
  std::string name = text.substr(0, colon);
  std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto two = [&]() -> std::pair<double, double> {
    auto comma = args.find(',');
    if (comma == std::string::npos)
      throw ValidationError("NoiseSpec: expected two parameters in '" + text + "'");
    return {std::stod(args.substr(0, comma)), std::stod(args.substr(comma + 1))};
  };
  NoiseSpec spec;
  if (name == "none" || name.empty()) {
    spec = none();
  } else if (name == "uniform") {
    auto [lo, hi] = two();
    spec = uniform(lo, hi);
  } else if (name == "exponential" || name == "exp") {
    spec = exponential(std::stod(args));
  } else if (name == "normal") {
    auto [mean, cv] = two();
    spec = normal(mean, cv);
  } else {
    throw ValidationError("NoiseSpec: unknown distribution '" + name + "'");
  }
  spec.validate();
  return spec;
}

}  // namespace dstream::sim

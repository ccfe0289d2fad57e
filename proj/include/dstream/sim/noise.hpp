#pragma once

#include <cstdint>
#include <string>

namespace dstream::sim {

/// Deterministic per-rank random stream. Hand-rolled distributions so results
/// are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64();
  /// Uniform double in [0, 1).
  double next_unit();
  /// Uniform double in [lo, hi].
  double next_uniform(double lo, double hi);
  /// Exponential with the given mean.
  double next_exponential(double mean);
  /// Normal via Box-Muller.
  double next_normal(double mean, double stddev);

  /// Stable per-rank seed derivation.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt);

 private:
  std::uint64_t state_;
};

/// Multiplicative slowdown applied per work unit: elapsed = nominal * (1 + sample).
/// Samples are clamped at zero so time never runs backwards.
struct NoiseSpec {
  enum class Kind { None, Uniform, Exponential, Normal };

  Kind kind = Kind::None;
  double a = 0.0;  ///< uniform: lo; exponential: mean; normal: mean
  double b = 0.0;  ///< uniform: hi; normal: cv (stddev = cv * mean)

  static NoiseSpec none() { return {}; }
  static NoiseSpec uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
  static NoiseSpec exponential(double mean) { return {Kind::Exponential, mean, 0.0}; }
  static NoiseSpec normal(double mean, double cv) { return {Kind::Normal, mean, cv}; }

  void validate() const;
  double sample(Rng& rng) const;

  std::string describe() const;
  /// Parse "none", "uniform:lo,hi", "exponential:mean", "normal:mean,cv".
  static NoiseSpec parse(const std::string& text);
};

}  // namespace dstream::sim

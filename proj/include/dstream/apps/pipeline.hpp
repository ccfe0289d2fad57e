#pragma once

#include <cstdint>

#include "dstream/perf/model.hpp"
#include "dstream/sim/runtime.hpp"

// Synthetic two-operator benchmark with planted costs, used to check the
// analytical estimates against the simulator. The conventional variant runs
// both operators phase-by-phase on every rank, with the sync cost standing
// in for the redistribution between phases; the decoupled variant splits the
// ranks into a producer and a consumer group linked by a stream whose
// element size is the granularity knob.
namespace dstream::apps::pipeline {

enum class Variant { Conventional, Decoupled };

struct PipelineConfig {
  int total_ranks = 32;
  double alpha = 0.25;  ///< consumer share of the ranks
  Variant variant = Variant::Decoupled;

  std::uint64_t data_bytes = 1u << 20;  ///< total volume streamed
  std::uint64_t element_bytes = 4096;   ///< granularity (bytes per element)

  /// Phase times normalized to all ranks participating, i.e. the time each
  /// phase takes in the conventional layout.
  double t_w0_us = 400.0;
  double t_w1_prime_us = 4000.0;
  double t_sigma_us = 20.0;  ///< per-producer cost after its last element

  sim::SimConfig sim;

  int consumer_ranks() const;
  int producer_ranks() const { return total_ranks - consumer_ranks(); }
  std::uint64_t element_count() const;
  void validate() const;
};

struct PipelineResult {
  double makespan_us = 0.0;
  sim::RunReport report;
};

PipelineResult run_pipeline(const PipelineConfig& config);

/// Analytical parameters matching what the simulated run actually charges:
/// alpha is the exact group fraction, the per-element transport cost is
/// spread across the producer group, and consumer-side receive costs fold
/// into the consumer phase time.
perf::PerfParams model_params(const PipelineConfig& config);

/// Pipeline-fill overlap estimate: the producer-side share left exposed is
/// one element per producer out of its per-rank element count.
perf::BetaModel fill_beta(const PipelineConfig& config);

}  // namespace dstream::apps::pipeline

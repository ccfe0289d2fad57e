#include "dstream/apps/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "dstream/bytes.hpp"
#include "dstream/errors.hpp"
#include "dstream/stream.hpp"

namespace dstream::apps::pipeline {

int PipelineConfig::consumer_ranks() const {
  int n = static_cast<int>(std::lround(alpha * total_ranks));
  return std::clamp(n, 1, total_ranks - 1);
}

std::uint64_t PipelineConfig::element_count() const {
  return (data_bytes + element_bytes - 1) / element_bytes;
}

void PipelineConfig::validate() const {
  if (total_ranks < 2) throw ValidationError("pipeline needs at least 2 ranks");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
  if (data_bytes == 0) throw ValidationError("data_bytes must be positive");
  if (element_bytes < 8 || element_bytes > data_bytes)
    throw ValidationError("element_bytes must be in [8, data_bytes]");
  if (element_count() < static_cast<std::uint64_t>(total_ranks))
    throw ValidationError("need at least one element per rank; lower the granularity");
  if (t_w0_us < 0.0 || t_w1_prime_us < 0.0 || t_sigma_us < 0.0)
    throw ValidationError("phase times must be >= 0");
  sim.validate();
  if (sim.total_ranks != 0 && sim.total_ranks != total_ranks)
    throw ValidationError("sim.total_ranks disagrees with total_ranks");
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  config.validate();
  PipelineResult result;

  if (config.variant == Variant::Conventional) {
    GroupLayout layout = GroupLayout::single_group(config.total_ranks, "all");
    result.report = sim::run(layout, config.sim, [&](sim::RankContext& ctx) {
      ctx.work(config.t_w0_us, "op0");
      ctx.work(config.t_sigma_us, "sync");
      ctx.work(config.t_w1_prime_us, "op1");
    });
    result.makespan_us = result.report.makespan_us;
    return result;
  }

  const int consumers = config.consumer_ranks();
  const int producers = config.producer_ranks();
  const std::uint64_t elements = config.element_count();
  const double w0_element =
      config.t_w0_us * config.total_ranks / static_cast<double>(elements);
  const double w1_element =
      config.t_w1_prime_us * config.total_ranks / static_cast<double>(elements);

  GroupLayout layout =
      GroupLayout::split_tail(config.total_ranks, "op0", "op1", consumers);
  auto program = [&](sim::RankContext& ctx) {
    if (!ctx.layout_registered("pipe")) ctx.register_layout("pipe");
    const StreamElementType type(static_cast<std::size_t>(config.element_bytes), "pipe");
    Channel ch = create_channel(ctx, "op0", "op1");
    if (ctx.group() == "op0") {
      Stream out = attach(ch, type);
      for (std::uint64_t e = static_cast<std::uint64_t>(ctx.rank()); e < elements;
           e += static_cast<std::uint64_t>(producers)) {
        ctx.work(w0_element, "produce");
        std::vector<std::byte> payload;
        bytes::put_u64(payload, e);
        payload.resize(type.element_bytes);
        // Address by element id so consumer load stays balanced even when
        // the producer group is small.
        out.isend_to(producers + static_cast<int>(e % static_cast<std::uint64_t>(consumers)),
                     std::move(payload));
      }
      ctx.work(config.t_sigma_us, "sync");
      out.terminate();
    } else {
      Stream in = attach(ch, type, [&](const StreamElement&) {
        ctx.work(w1_element, "consume");
      });
      in.operate();
    }
    free_channel(ch);
  };
  result.report = sim::run(layout, config.sim, program);
  result.makespan_us = result.report.makespan_us;
  return result;
}

perf::PerfParams model_params(const PipelineConfig& config) {
  config.validate();
  const double p = config.total_ranks;
  const std::uint64_t elements = config.element_count();

  perf::PerfParams params;
  params.total_ranks = config.total_ranks;
  params.alpha = config.consumer_ranks() / p;
  params.t_w0 = config.t_w0_us;
  params.t_w1 = config.t_w1_prime_us;
  params.t_sigma = config.t_sigma_us;
  params.t_w1_prime =
      config.t_w1_prime_us + static_cast<double>(elements) * config.sim.recv_cost_us / p;
  params.data_volume_d = static_cast<double>(config.data_bytes);
  params.granularity_s = static_cast<double>(config.element_bytes);
  const double per_element = config.sim.send_cost_us +
                             static_cast<double>(config.element_bytes) * config.sim.cost_per_byte_us;
  params.overhead_o = per_element / config.producer_ranks();
  return params;
}

perf::BetaModel fill_beta(const PipelineConfig& config) {
  const double per_producer = std::ceil(static_cast<double>(config.element_count()) /
                                        config.producer_ranks());
  return perf::BetaModel::constant(std::min(1.0, 1.0 / per_producer));
}

}  // namespace dstream::apps::pipeline

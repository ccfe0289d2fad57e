#include "dstream/apps/workload.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "dstream/bytes.hpp"
#include "dstream/errors.hpp"
#include "dstream/stream.hpp"

namespace dstream::apps::workload {

namespace {

constexpr std::uint64_t kSalt = 0x776b6c64;  // per-producer duration streams

struct AnalysisState {
  std::vector<double> seen;  ///< kept for the exact median
  std::vector<std::uint64_t> per_producer;
  double min_us = 0.0;
  double max_us = 0.0;
  double sum_us = 0.0;
};

}  // namespace

void WorkloadConfig::validate() const {
  if (producer_ranks < 1) throw ValidationError("need at least one producer");
  if (!(mean_us > 0.0) || !std::isfinite(mean_us))
    throw ValidationError("mean_us must be positive and finite");
  if (per_record_us < 0.0) throw ValidationError("per_record_us must be >= 0");
  if (batch_records < 1) throw ValidationError("batch_records must be >= 1");
  sim.validate();
  if (sim.total_ranks != 0 && sim.total_ranks != total_ranks())
    throw ValidationError("sim.total_ranks disagrees with the derived rank count");
}

std::vector<double> producer_durations(const WorkloadConfig& config, int index) {
  sim::Rng rng(sim::Rng::derive(config.seed, kSalt + static_cast<std::uint64_t>(index)));
  std::vector<double> out;
  out.reserve(config.records_per_producer);
  for (std::uint64_t i = 0; i < config.records_per_producer; ++i)
    out.push_back(rng.next_exponential(config.mean_us));
  return out;
}

std::vector<double> synthetic_durations(const WorkloadConfig& config) {
  std::vector<double> all;
  all.reserve(config.records_per_producer * static_cast<std::uint64_t>(config.producer_ranks));
  for (int p = 0; p < config.producer_ranks; ++p) {
    std::vector<double> mine = producer_durations(config, p);
    all.insert(all.end(), mine.begin(), mine.end());
  }
  return all;
}

WorkloadStats offline_stats(std::vector<double> durations) {
  WorkloadStats stats;
  stats.count = durations.size();
  if (durations.empty()) return stats;
  std::sort(durations.begin(), durations.end());
  stats.min_us = durations.front();
  stats.max_us = durations.back();
  double sum = 0.0;
  for (double d : durations) sum += d;
  stats.mean_us = sum / static_cast<double>(durations.size());
  std::size_t mid = durations.size() / 2;
  stats.median_us = durations.size() % 2 == 1
                        ? durations[mid]
                        : 0.5 * (durations[mid - 1] + durations[mid]);
  return stats;
}

WorkloadResult run_workload(const WorkloadConfig& config) {
  config.validate();

  GroupLayout layout =
      GroupLayout::split_tail(config.total_ranks(), "producer", "analysis", 1);

  auto state = std::make_shared<AnalysisState>();
  state->per_producer.assign(static_cast<std::size_t>(config.producer_ranks), 0);

  auto program = [&config, state](sim::RankContext& ctx) {
    if (!ctx.layout_registered("task-durations")) ctx.register_layout("task-durations");
    const StreamElementType type(4 + static_cast<std::size_t>(config.batch_records) * 8,
                                 "task-durations");
    Channel ch = create_channel(ctx, "producer", "analysis");
    if (ctx.group() == "producer") {
      Stream out = attach(ch, type);
      std::vector<double> durations = producer_durations(config, ctx.rank());
      std::vector<std::byte> batch;
      std::uint32_t count = 0;
      auto flush = [&] {
        std::vector<std::byte> payload;
        payload.reserve(type.element_bytes);
        bytes::put_u32(payload, count);
        payload.insert(payload.end(), batch.begin(), batch.end());
        payload.resize(type.element_bytes);
        out.isend(std::move(payload));
        batch.clear();
        count = 0;
      };
      for (double d : durations) {
        // The duration is both the record payload and the simulated cost of
        // having run the task.
        ctx.work(d, "task");
        bytes::put_f64(batch, d);
        if (static_cast<int>(++count) == config.batch_records) flush();
      }
      if (count > 0) flush();
      out.terminate();
    } else {
      Stream in = attach(ch, type, [&](const StreamElement& el) {
        bytes::Reader r(el.payload);
        std::uint32_t n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
          double d = r.f64();
          if (state->seen.empty() || d < state->min_us) state->min_us = d;
          if (state->seen.empty() || d > state->max_us) state->max_us = d;
          state->sum_us += d;
          state->seen.push_back(d);
        }
        state->per_producer[static_cast<std::size_t>(el.producer_rank)] += n;
        if (n > 0) ctx.work(static_cast<double>(n) * config.per_record_us, "analyze");
      });
      in.operate();
    }
    free_channel(ch);
  };

  WorkloadResult result;
  result.report = sim::run(layout, config.sim, program);
  if (!result.report.ok()) return result;

  result.per_producer = state->per_producer;
  result.stats.count = state->seen.size();
  if (!state->seen.empty()) {
    result.stats.min_us = state->min_us;
    result.stats.max_us = state->max_us;
    result.stats.mean_us = state->sum_us / static_cast<double>(state->seen.size());
    std::vector<double> sorted = state->seen;
    std::sort(sorted.begin(), sorted.end());
    std::size_t mid = sorted.size() / 2;
    result.stats.median_us = sorted.size() % 2 == 1
                                 ? sorted[mid]
                                 : 0.5 * (sorted[mid - 1] + sorted[mid]);
  }
  return result;
}

}  // namespace dstream::apps::workload

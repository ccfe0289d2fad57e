#include "dstream/perf/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dstream/errors.hpp"

namespace dstream::perf {
namespace {

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) {
    throw ValidationError(std::string(name) + " must be finite");
  }
}

void require_nonneg(double v, const char* name) {
  require_finite(v, name);
  if (v < 0.0) {
    throw ValidationError(std::string(name) + " must be >= 0");
  }
}

double producer_base(const PerfParams& p) {
  return p.t_w0 / (1.0 - p.alpha) + p.t_sigma;
}

double consumer_term(const PerfParams& p) { return p.t_w1_prime / p.alpha; }

double overhead_term(const PerfParams& p) {
  if (p.overhead_o == 0.0 || p.data_volume_d == 0.0) return 0.0;
  return p.data_volume_d / p.granularity_s * p.overhead_o;
}

}  // namespace

void PerfParams::validate() const {
  require_nonneg(t_w0, "t_w0");
  require_nonneg(t_w1, "t_w1");
  require_nonneg(t_w1_prime, "t_w1_prime");
  require_nonneg(t_sigma, "t_sigma");
  require_nonneg(overhead_o, "overhead_o");
  require_nonneg(data_volume_d, "data_volume_d");
  require_finite(alpha, "alpha");
  if (alpha <= 0.0 || alpha >= 1.0) {
    throw ValidationError("alpha must lie strictly between 0 and 1");
  }
  require_finite(beta, "beta");
  if (beta < 0.0 || beta > 1.0) {
    throw ValidationError("beta must lie in [0, 1]");
  }
  require_finite(granularity_s, "granularity_s");
  if (granularity_s <= 0.0) {
    throw ValidationError("granularity_s must be > 0");
  }
  if (data_volume_d > 0.0 && granularity_s > data_volume_d) {
    throw ValidationError("granularity_s must not exceed data_volume_d");
  }
  if (total_ranks < 0) {
    throw ValidationError("total_ranks must be >= 0");
  }
}

void BetaModel::validate() const {
  require_finite(beta0, "beta0");
  require_finite(k, "k");
  if (beta0 < 0.0 || beta0 > 1.0) {
    throw ValidationError("beta0 must lie in [0, 1]");
  }
  if (form == Form::AffineInS && beta0 + k < 0.0) {
    throw ValidationError("affine beta model dips below 0 at S = D");
  }
}

double BetaModel::at(double s, double d) const {
  if (form == Form::Constant) return beta0;
  if (d <= 0.0) return std::min(1.0, beta0);
  double b = beta0 + k * s / d;
  return std::clamp(b, 0.0, 1.0);
}

double predict_conventional(const PerfParams& params) {
  params.validate();
  return params.t_w0 + params.t_sigma + params.t_w1;
}

double predict_decoupled_max(const PerfParams& params) {
  params.validate();
  return std::max(producer_base(params), consumer_term(params));
}

PerfPrediction predict_decoupled(const PerfParams& params, const BetaModel& beta_model,
                                 bool overhead_outside_beta) {
  params.validate();
  beta_model.validate();

  PerfPrediction out;
  double beta = beta_model.at(params.granularity_s, params.data_volume_d);
  double overhead = overhead_term(params);
  double producer = producer_base(params);
  out.breakdown.beta = beta;
  out.breakdown.overhead_term = overhead;
  out.breakdown.consumer_term = consumer_term(params);

  if (overhead_outside_beta) {
    out.breakdown.producer_term = producer;
    out.t_decoupled = beta * producer + overhead + out.breakdown.consumer_term;
  } else {
    out.breakdown.producer_term = producer + overhead;
    out.t_decoupled = beta * out.breakdown.producer_term + out.breakdown.consumer_term;
  }

  out.t_conventional = params.t_w0 + params.t_sigma + params.t_w1;
  out.speedup = out.t_conventional / out.t_decoupled;
  return out;
}

SweepResult sweep_alpha(PerfParams params, const BetaModel& beta_model,
                        std::vector<double> alpha_grid,
                        const std::function<double(double)>& t_w1_prime_of_alpha) {
  if (alpha_grid.empty()) {
    throw UsageError("sweep_alpha: empty alpha grid");
  }
  for (double a : alpha_grid) {
    require_finite(a, "alpha");
    if (a <= 0.0 || a >= 1.0) {
      throw ValidationError("alpha grid values must lie strictly between 0 and 1");
    }
  }
  std::sort(alpha_grid.begin(), alpha_grid.end());

  SweepResult result;
  double best_time = 0.0;
  for (double a : alpha_grid) {
    params.alpha = a;
    if (t_w1_prime_of_alpha) {
      params.t_w1_prime = t_w1_prime_of_alpha(a);
    }
    SweepRow row;
    row.alpha = a;
    row.s = params.granularity_s;
    row.prediction = predict_decoupled(params, beta_model);
    if (result.rows.empty() || row.prediction.t_decoupled < best_time) {
      best_time = row.prediction.t_decoupled;
      result.best = a;
    }
    result.rows.push_back(row);
  }
  return result;
}

SweepResult sweep_granularity(PerfParams params, const BetaModel& beta_model,
                              std::vector<double> s_grid) {
  if (s_grid.empty()) {
    throw UsageError("sweep_granularity: empty granularity grid");
  }
  if (params.data_volume_d <= 0.0) {
    throw ValidationError("sweep_granularity requires data_volume_d > 0");
  }
  for (double s : s_grid) {
    require_finite(s, "granularity_s");
    if (s <= 0.0 || s > params.data_volume_d) {
      throw ValidationError("granularity grid values must lie in (0, data_volume_d]");
    }
  }
  std::sort(s_grid.begin(), s_grid.end());

  SweepResult result;
  double best_time = 0.0;
  for (double s : s_grid) {
    params.granularity_s = s;
    SweepRow row;
    row.alpha = params.alpha;
    row.s = s;
    row.prediction = predict_decoupled(params, beta_model);
    if (result.rows.empty() || row.prediction.t_decoupled < best_time) {
      best_time = row.prediction.t_decoupled;
      result.best = s;
    }
    result.rows.push_back(row);
  }
  return result;
}

double estimate_beta(const sim::EventTrace& trace, const std::string& op0_tag,
                     const std::vector<int>& op1_group) {
  const std::string op0_record_tag = "compute:" + op0_tag;
  std::vector<bool> in_op1;
  for (int r : op1_group) {
    if (r < 0) throw ValidationError("estimate_beta: negative rank in op1_group");
    if (r >= static_cast<int>(in_op1.size())) in_op1.resize(static_cast<size_t>(r) + 1, false);
    in_op1[static_cast<size_t>(r)] = true;
  }
  auto is_op1_rank = [&](int r) {
    return r >= 0 && r < static_cast<int>(in_op1.size()) && in_op1[static_cast<size_t>(r)];
  };

  bool op1_seen = false;
  sim::Ticks op1_start = 0;
  double op0_total = 0.0;
  for (const auto& rec : trace.records()) {
    if (rec.tag == op0_record_tag) {
      op0_total += static_cast<double>(rec.t_end - rec.t_start);
    } else if (is_op1_rank(rec.rank) &&
               (rec.tag == "recv" || rec.tag.rfind("compute:", 0) == 0)) {
      if (!op1_seen || rec.t_start < op1_start) {
        op1_seen = true;
        op1_start = rec.t_start;
      }
    }
  }
  if (op0_total <= 0.0) {
    throw ValidationError("estimate_beta: no records tagged compute:" + op0_tag);
  }
  if (!op1_seen) return 1.0;

  double before = 0.0;
  for (const auto& rec : trace.records()) {
    if (rec.tag != op0_record_tag) continue;
    sim::Ticks cut = std::min(rec.t_end, op1_start);
    if (cut > rec.t_start) before += static_cast<double>(cut - rec.t_start);
  }
  return std::clamp(before / op0_total, 0.0, 1.0);
}

std::vector<SuitabilityLine> suitability_report(const OpProfile& profile) {
  std::vector<SuitabilityLine> lines;
  std::ostringstream cv;
  cv << "coefficient of variation " << profile.time_variance_cv << " vs threshold "
     << kVarianceCvThreshold;

  lines.push_back({"orthogonal operations with little data dependency", profile.orthogonal,
                   profile.orthogonal
                       ? "operation consumes a one-way data flow and feeds nothing back"
                       : "operation exchanges intermediate state with its peer"});
  lines.push_back({"high complexity that shrinks on fewer processes",
                   profile.complexity_shrinks_on_fewer_ranks,
                   profile.complexity_shrinks_on_fewer_ranks
                       ? "per-process cost grows with group size, so a small group runs cheaper"
                       : "per-process cost is flat in group size"});
  lines.push_back({"large execution time variance",
                   profile.time_variance_cv > kVarianceCvThreshold, cv.str()});
  lines.push_back({"continuous data flow throughout execution", profile.continuous_data_flow,
                   profile.continuous_data_flow
                       ? "elements are produced steadily, so processing overlaps production"
                       : "data arrives in one burst at the end"});
  lines.push_back({"benefits from special-purpose compute units", profile.needs_special_hardware,
                   profile.needs_special_hardware
                       ? "a dedicated group can be pinned to matching hardware"
                       : "no hardware affinity"});
  return lines;
}

}  // namespace dstream::perf

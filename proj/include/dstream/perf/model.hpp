#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dstream/sim/trace.hpp"

// Analytical cost model for splitting a two-operation program across a
// producer group (share 1-alpha of the ranks, running Op0) and a decoupled
// consumer group (share alpha, running Op1), connected by element streams.
namespace dstream::perf {

struct PerfParams {
  double t_w0 = 0.0;        ///< per-process Op0 work
  double t_w1 = 0.0;        ///< per-process Op1 work, conventional layout
  double t_w1_prime = 0.0;  ///< per-process Op1 work on the decoupled group
  double t_sigma = 0.0;     ///< expected imbalance (straggler slack)
  double alpha = 0.5;       ///< decoupled-group share of ranks, in (0,1)
  double beta = 1.0;        ///< non-overlapped portion of Op0, in [0,1]
  double data_volume_d = 0.0;  ///< total bytes crossing the group boundary
  double granularity_s = 1.0;  ///< stream element size in bytes
  double overhead_o = 0.0;     ///< per-element streaming overhead (time)
  int total_ranks = 0;         ///< P; informational, 0 = unspecified

  void validate() const;
};

/// How the non-overlapped fraction depends on the element size: constant, or
/// growing with coarser elements (finer elements pipeline better).
struct BetaModel {
  enum class Form { Constant, AffineInS };
  Form form = Form::Constant;
  double beta0 = 1.0;
  double k = 0.0;  ///< AffineInS: beta(S) = min(1, beta0 + k * S / D)

  static BetaModel constant(double beta0) { return {Form::Constant, beta0, 0.0}; }
  static BetaModel affine(double beta0, double k) { return {Form::AffineInS, beta0, k}; }

  void validate() const;
  /// Effective beta for element size s and total volume d.
  double at(double s, double d) const;
};

struct PerfPrediction {
  double t_conventional = 0.0;
  double t_decoupled = 0.0;
  double speedup = 0.0;  ///< t_conventional / t_decoupled

  struct Breakdown {
    double producer_term = 0.0;  ///< t_w0/(1-a) + t_sigma (+ overhead when inside beta)
    double overhead_term = 0.0;  ///< (D/S) * o
    double consumer_term = 0.0;  ///< t_w1_prime / alpha
    double beta = 0.0;           ///< effective beta(S)
  } breakdown;
};

/// Serial-phases baseline: t_w0 + t_sigma + t_w1.
double predict_conventional(const PerfParams& params);

/// Ideal full overlap: max(t_w0/(1-alpha) + t_sigma, t_w1_prime/alpha).
double predict_decoupled_max(const PerfParams& params);

/// Overlap-degraded prediction with streaming overhead:
///   beta(S) * [t_w0/(1-alpha) + t_sigma + (D/S)*o] + t_w1_prime/alpha.
/// `overhead_outside_beta` moves the (D/S)*o term out of the beta factor;
/// this variant is non-canonical and off by default.
PerfPrediction predict_decoupled(const PerfParams& params, const BetaModel& beta_model,
                                 bool overhead_outside_beta = false);

struct SweepRow {
  double alpha = 0.0;
  double s = 0.0;
  PerfPrediction prediction;
};

struct SweepResult {
  double best = 0.0;  ///< grid value minimizing t_decoupled (ties: smaller value)
  std::vector<SweepRow> rows;  ///< ascending in the swept variable
};

/// Minimize over alpha. The optional callback supplies t_w1_prime as a
/// function of alpha, for operations whose cost shrinks on fewer ranks.
SweepResult sweep_alpha(PerfParams params, const BetaModel& beta_model,
                        std::vector<double> alpha_grid,
                        const std::function<double(double)>& t_w1_prime_of_alpha = {});

/// Minimize over the element size S, values in (0, D].
SweepResult sweep_granularity(PerfParams params, const BetaModel& beta_model,
                              std::vector<double> s_grid);

/// Empirical non-overlap fraction from a trace: the share of total Op0
/// compute time (records tagged "compute:<op0_tag>") that elapses before the
/// first processing record (recv or compute) on any rank of op1_group.
/// Returns 1 when op1_group never processes anything. Note: any receive on
/// an op1 rank counts as the start of processing, so the op1 ranks must not
/// run unrelated message exchanges before their first element arrives.
double estimate_beta(const sim::EventTrace& trace, const std::string& op0_tag,
                     const std::vector<int>& op1_group);

/// Observable traits of a candidate operation, judged against the five
/// categories of decoupling-friendly operations.
struct OpProfile {
  double time_variance_cv = 0.0;  ///< coefficient of variation of op runtime
  bool complexity_shrinks_on_fewer_ranks = false;
  bool continuous_data_flow = false;
  bool orthogonal = false;  ///< little data dependency on the other operation
  bool needs_special_hardware = false;
};

struct SuitabilityLine {
  std::string category;
  bool pass = false;
  std::string rationale;
};

/// Variance above this coefficient of variation counts as "large".
inline constexpr double kVarianceCvThreshold = 0.25;

/// One verdict per category, in a fixed order: orthogonality, complexity
/// reduction, execution-time variance, continuous data flow, special
/// hardware. Pure function of the profile.
std::vector<SuitabilityLine> suitability_report(const OpProfile& profile);

}  // namespace dstream::perf

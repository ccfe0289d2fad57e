#include "dstream/bench/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "dstream/apps/cg.hpp"
#include "dstream/apps/particles.hpp"
#include "dstream/apps/pipeline.hpp"
#include "dstream/apps/wordcount.hpp"
#include "dstream/apps/workload.hpp"
#include "dstream/errors.hpp"
#include "dstream/perf/model.hpp"

namespace dstream::bench {

namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  std::size_t eq = text.find('=');
  if (eq == std::string::npos)
    throw ValidationError("expected key=value, got '" + text + "'");
  std::string key = trim(text.substr(0, eq));
  std::string value = trim(text.substr(eq + 1));
  if (key.empty()) throw ValidationError("empty key in '" + text + "'");
  return {key, value};
}

long long to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("option " + key + " needs an integer, got '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("option " + key + " needs a number, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw ValidationError("option " + key + " needs a boolean, got '" + value + "'");
}

std::array<int, 3> to_dims(const std::string& key, const std::string& value) {
  std::array<int, 3> out{};
  std::stringstream ss(value);
  std::string part;
  int i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == 3) throw ValidationError("option " + key + " needs X,Y,Z, got '" + value + "'");
    out[static_cast<std::size_t>(i++)] = static_cast<int>(to_int(key, trim(part)));
  }
  if (i != 3) throw ValidationError("option " + key + " needs X,Y,Z, got '" + value + "'");
  return out;
}

/// Pulls keys out of the option map and complains about leftovers, so typos
/// fail loudly instead of silently running defaults.
class OptionReader {
 public:
  explicit OptionReader(const std::map<std::string, std::string>& options)
      : options_(options) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return options_.count(key) > 0;
  }
  std::string str(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    auto it = options_.find(key);
    return it == options_.end() ? fallback : it->second;
  }
  long long integer(const std::string& key, long long fallback) {
    used_.insert(key);
    auto it = options_.find(key);
    return it == options_.end() ? fallback : to_int(key, it->second);
  }
  double number(const std::string& key, double fallback) {
    used_.insert(key);
    auto it = options_.find(key);
    return it == options_.end() ? fallback : to_double(key, it->second);
  }
  bool boolean(const std::string& key, bool fallback) {
    used_.insert(key);
    auto it = options_.find(key);
    return it == options_.end() ? fallback : to_bool(key, it->second);
  }
  std::array<int, 3> dims(const std::string& key, std::array<int, 3> fallback) {
    used_.insert(key);
    auto it = options_.find(key);
    return it == options_.end() ? fallback : to_dims(key, it->second);
  }

  void finish(const std::string& app) const {
    for (const auto& [key, value] : options_) {
      (void)value;
      if (!used_.count(key))
        throw ValidationError("unknown option '" + key + "' for app " + app);
    }
  }

 private:
  const std::map<std::string, std::string>& options_;
  std::set<std::string> used_;
};

sim::NoiseSpec noise_option(OptionReader& reader) {
  return sim::NoiseSpec::parse(reader.str("noise", "none"));
}

ResultRow base_row(const ExperimentSpec& spec, std::uint64_t seed, int rep) {
  ResultRow row;
  row.app = spec.app;
  row.seed = seed;
  row.rep = rep;
  return row;
}

void fill_totals(ResultRow& row, const sim::RunReport& report) {
  row.makespan_us = report.makespan_us;
  for (const sim::RankTotals& t : report.totals) {
    row.compute_us += t.compute_us;
    row.send_us += t.send_us;
    row.recv_us += t.recv_us;
    row.io_us += t.io_us;
    row.idle_us += t.idle_us;
  }
}

// --- per-app runners --------------------------------------------------------

ResultRow run_wordcount_rep(const ExperimentSpec& spec, std::uint64_t seed, int rep,
                            sim::EventTrace* trace_out) {
  namespace wc = apps::wordcount;
  OptionReader reader(spec.options);
  wc::CorpusSpec corpus_spec;
  corpus_spec.vocab_size = static_cast<int>(reader.integer("vocab", corpus_spec.vocab_size));
  corpus_spec.total_tokens =
      static_cast<std::uint64_t>(reader.integer("tokens", static_cast<long long>(corpus_spec.total_tokens)));
  corpus_spec.doc_size_skew = reader.number("doc_skew", corpus_spec.doc_size_skew);
  corpus_spec.seed = seed;

  wc::WordcountConfig config;
  config.ranks = static_cast<int>(reader.integer("ranks", config.ranks));
  std::string variant = reader.str("variant", "conventional");
  if (variant == "conventional")
    config.variant = wc::Variant::Conventional;
  else if (variant == "decoupled")
    config.variant = wc::Variant::Decoupled;
  else
    throw ValidationError("wordcount variant must be conventional or decoupled");
  config.alpha = reader.number("alpha", config.alpha);
  config.batch_pairs = static_cast<int>(reader.integer("batch", config.batch_pairs));
  config.combine = reader.boolean("combine", config.combine);
  config.sim.rng_seed = seed;
  config.sim.noise = noise_option(reader);
  reader.finish(spec.app);

  wc::Corpus corpus = wc::Corpus::synthetic(corpus_spec);
  wc::WordcountResult result = wc::run_wordcount(corpus, config);

  ResultRow row = base_row(spec, seed, rep);
  row.variant = variant;
  row.ranks = config.ranks;
  row.alpha = config.variant == wc::Variant::Decoupled ? config.alpha : 0.0;
  row.granularity = config.batch_pairs;
  if (!result.report.ok()) return row;
  fill_totals(row, result.report);
  row.oracle_pass = result.histogram == wc::serial_histogram(corpus);
  if (trace_out) *trace_out = std::move(result.report.trace);
  return row;
}

ResultRow run_cg_rep(const ExperimentSpec& spec, std::uint64_t seed, int rep,
                     sim::EventTrace* trace_out) {
  namespace cg = apps::cg;
  OptionReader reader(spec.options);
  cg::CgConfig config;
  config.dims = reader.dims("dims", config.dims);
  config.local = reader.dims("local", {16, 16, 16});
  config.iterations = static_cast<int>(reader.integer("iterations", 40));
  std::string variant = reader.str("variant", "blocking");
  if (variant == "blocking")
    config.variant = cg::Variant::Blocking;
  else if (variant == "nonblocking")
    config.variant = cg::Variant::NonBlocking;
  else if (variant == "decoupled")
    config.variant = cg::Variant::Decoupled;
  else
    throw ValidationError("cg variant must be blocking, nonblocking or decoupled");
  config.exchange_ranks = static_cast<int>(reader.integer("exchange_ranks", config.exchange_ranks));
  config.sim.rng_seed = seed;
  config.sim.noise = noise_option(reader);
  reader.finish(spec.app);

  cg::CgResult result = cg::run_cg(config);

  ResultRow row = base_row(spec, seed, rep);
  row.variant = variant;
  row.ranks = config.total_ranks();
  row.alpha = config.variant == cg::Variant::Decoupled
                  ? static_cast<double>(config.exchange_ranks) / config.total_ranks()
                  : 0.0;
  if (!result.report.ok()) return row;
  fill_totals(row, result.report);
  cg::SerialCgResult oracle = cg::serial_reference(config);
  row.oracle_pass = result.residual_history == oracle.residual_history &&
                    std::isfinite(result.max_error);
  if (trace_out) *trace_out = std::move(result.report.trace);
  return row;
}

ResultRow run_particles_rep(const ExperimentSpec& spec, std::uint64_t seed, int rep,
                            sim::EventTrace* trace_out) {
  namespace pt = apps::particles;
  OptionReader reader(spec.options);
  pt::ParticlesConfig config;
  config.dims = reader.dims("dims", config.dims);
  config.n_particles = static_cast<std::uint64_t>(reader.integer("n", 1000));
  config.steps = static_cast<int>(reader.integer("steps", config.steps));
  std::string exchange = reader.str("exchange", "neighbor");
  if (exchange == "neighbor")
    config.exchange = pt::Exchange::Neighbor;
  else if (exchange == "decoupled")
    config.exchange = pt::Exchange::Decoupled;
  else
    throw ValidationError("particles exchange must be neighbor or decoupled");
  std::string io = reader.str("io", "none");
  if (io == "none")
    config.io = pt::Io::None;
  else if (io == "shared")
    config.io = pt::Io::Shared;
  else if (io == "collective")
    config.io = pt::Io::Collective;
  else if (io == "decoupled")
    config.io = pt::Io::Decoupled;
  else
    throw ValidationError("particles io must be none, shared, collective or decoupled");
  config.alpha = reader.number("alpha", config.alpha);
  config.skew = reader.number("skew", config.skew);
  config.batch_particles = static_cast<int>(reader.integer("batch", config.batch_particles));
  if (config.io != pt::Io::None)
    config.out_path = reader.str(
        "out", resolve_result_path("particles_" + std::to_string(seed) + ".bin"));
  else if (reader.has("out"))
    throw ValidationError("particles option 'out' needs io != none");
  config.seed = seed;
  config.sim.rng_seed = seed;
  config.sim.noise = noise_option(reader);
  reader.finish(spec.app);

  pt::ParticlesResult result = pt::run_particles(config);

  ResultRow row = base_row(spec, seed, rep);
  row.variant = exchange + "/" + io;
  row.ranks = config.total_ranks();
  row.alpha = config.exchange == pt::Exchange::Decoupled || config.io == pt::Io::Decoupled
                  ? config.alpha
                  : 0.0;
  row.granularity = config.batch_particles;
  if (!result.report.ok()) return row;
  fill_totals(row, result.report);

  std::vector<pt::Particle> oracle = pt::ballistic_reference(config);
  bool ok = result.final_particles.size() == oracle.size();
  if (ok) {
    auto key = [](const pt::Particle& p) {
      return std::tuple(p.id, p.x, p.y, p.z, p.vx, p.vy, p.vz);
    };
    std::vector<std::tuple<std::uint64_t, double, double, double, double, double, double>> a, b;
    for (const auto& p : result.final_particles) a.push_back(key(p));
    for (const auto& p : oracle) b.push_back(key(p));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    ok = a == b;
  }
  if (config.exchange == pt::Exchange::Decoupled)
    ok = ok && result.max_hops <= 2 * config.steps;
  row.oracle_pass = ok;
  if (trace_out) *trace_out = std::move(result.report.trace);
  return row;
}

ResultRow run_pipeline_rep(const ExperimentSpec& spec, std::uint64_t seed, int rep,
                           sim::EventTrace* trace_out) {
  namespace pl = apps::pipeline;
  OptionReader reader(spec.options);
  pl::PipelineConfig config;
  config.total_ranks = static_cast<int>(reader.integer("ranks", config.total_ranks));
  config.alpha = reader.number("alpha", config.alpha);
  std::string variant = reader.str("variant", "decoupled");
  if (variant == "conventional")
    config.variant = pl::Variant::Conventional;
  else if (variant == "decoupled")
    config.variant = pl::Variant::Decoupled;
  else
    throw ValidationError("pipeline variant must be conventional or decoupled");
  config.data_bytes = static_cast<std::uint64_t>(reader.integer("data_bytes", 1 << 20));
  config.element_bytes =
      static_cast<std::uint64_t>(reader.integer("element_bytes", static_cast<long long>(config.element_bytes)));
  config.t_w0_us = reader.number("t_w0", config.t_w0_us);
  config.t_w1_prime_us = reader.number("t_w1_prime", config.t_w1_prime_us);
  config.t_sigma_us = reader.number("t_sigma", config.t_sigma_us);
  config.sim.rng_seed = seed;
  config.sim.noise = noise_option(reader);
  reader.finish(spec.app);

  pl::PipelineResult result = pl::run_pipeline(config);

  ResultRow row = base_row(spec, seed, rep);
  row.variant = variant;
  row.ranks = config.total_ranks;
  row.alpha = static_cast<double>(config.consumer_ranks()) / config.total_ranks;
  row.granularity = static_cast<double>(config.element_bytes);
  if (!result.report.ok()) return row;
  fill_totals(row, result.report);

  // No run can beat perfect overlap of the planted work.
  perf::PerfParams params = pl::model_params(config);
  double floor_us = config.variant == pl::Variant::Conventional
                        ? perf::predict_conventional(params)
                        : perf::predict_decoupled_max(params);
  row.oracle_pass = result.makespan_us >= floor_us * (1.0 - 1e-9);
  if (trace_out) *trace_out = std::move(result.report.trace);
  return row;
}

ResultRow run_workload_rep(const ExperimentSpec& spec, std::uint64_t seed, int rep,
                           sim::EventTrace* trace_out) {
  namespace wl = apps::workload;
  OptionReader reader(spec.options);
  wl::WorkloadConfig config;
  config.producer_ranks = static_cast<int>(reader.integer("producers", config.producer_ranks));
  config.records_per_producer =
      static_cast<std::uint64_t>(reader.integer("records", static_cast<long long>(config.records_per_producer)));
  config.mean_us = reader.number("mean", config.mean_us);
  config.batch_records = static_cast<int>(reader.integer("batch", config.batch_records));
  config.seed = seed;
  config.sim.rng_seed = seed;
  config.sim.noise = noise_option(reader);
  reader.finish(spec.app);

  wl::WorkloadResult result = wl::run_workload(config);

  ResultRow row = base_row(spec, seed, rep);
  row.variant = "streaming";
  row.ranks = config.total_ranks();
  row.alpha = 1.0 / config.total_ranks();
  row.granularity = config.batch_records;
  if (!result.report.ok()) return row;
  fill_totals(row, result.report);

  wl::WorkloadStats oracle = wl::offline_stats(wl::synthetic_durations(config));
  row.oracle_pass = result.stats.count == oracle.count &&
                    result.stats.min_us == oracle.min_us &&
                    result.stats.max_us == oracle.max_us &&
                    result.stats.median_us == oracle.median_us &&
                    std::abs(result.stats.mean_us - oracle.mean_us) <=
                        1e-9 * std::max(1.0, std::abs(oracle.mean_us));
  if (trace_out) *trace_out = std::move(result.report.trace);
  return row;
}

}  // namespace

ExperimentSpec parse_spec_lines(const std::vector<std::string>& lines) {
  ExperimentSpec spec;
  for (const std::string& raw : lines) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    apply_override(spec, line);
  }
  return spec;
}

ExperimentSpec parse_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open experiment file: " + path, 0);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return parse_spec_lines(lines);
}

void apply_override(ExperimentSpec& spec, const std::string& assignment) {
  auto [key, value] = split_assignment(assignment);
  if (key == "app")
    spec.app = value;
  else if (key == "repetitions")
    spec.repetitions = static_cast<int>(to_int(key, value));
  else if (key == "seed")
    spec.seed = static_cast<std::uint64_t>(to_int(key, value));
  else
    spec.options[key] = value;
}

std::string to_csv(const ResultRow& row) {
  std::ostringstream os;
  os.precision(17);
  os << row.app << ',' << row.variant << ',' << row.ranks << ',' << row.alpha << ','
     << row.granularity << ',' << row.seed << ',' << row.rep << ',' << row.makespan_us << ','
     << row.compute_us << ',' << row.send_us << ',' << row.recv_us << ',' << row.io_us << ','
     << row.idle_us << ',' << (row.oracle_pass ? 1 : 0);
  return os.str();
}

void write_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write results file: " + path, 0);
  out << kCsvHeader << '\n';
  for (const ResultRow& row : rows) out << to_csv(row) << '\n';
  if (!out) throw IoError("results write failed: " + path, 0);
}

Summary summarize(const std::vector<ResultRow>& rows) {
  Summary s;
  s.rows = static_cast<int>(rows.size());
  if (rows.empty()) return s;
  double sum = 0.0;
  for (const ResultRow& row : rows) {
    sum += row.makespan_us;
    if (!row.oracle_pass) ++s.oracle_failures;
  }
  s.mean_makespan_us = sum / static_cast<double>(rows.size());
  if (rows.size() > 1) {
    double sq = 0.0;
    for (const ResultRow& row : rows) {
      double d = row.makespan_us - s.mean_makespan_us;
      sq += d * d;
    }
    s.stddev_makespan_us = std::sqrt(sq / static_cast<double>(rows.size() - 1));
  }
  return s;
}

std::string results_dir() {
  const char* env = std::getenv("DS_RESULTS_DIR");
  std::string dir = env && *env ? env : ".";
  fs::create_directories(dir);
  return dir;
}

std::string resolve_result_path(const std::string& filename) {
  fs::path p(filename);
  if (p.is_absolute()) return filename;
  return (fs::path(results_dir()) / p).string();
}

void export_gantt(const sim::EventTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write gantt file: " + path, 0);
  out << "rank,start_us,end_us,category,tag\n";
  out.precision(17);
  for (const sim::TraceRecord& r : trace.records()) {
    std::string category = r.tag;
    if (category.rfind("compute:", 0) == 0) category = "compute";
    out << r.rank << ',' << sim::ticks_to_us(r.t_start) << ',' << sim::ticks_to_us(r.t_end)
        << ',' << category << ',' << r.tag << '\n';
  }
  if (!out) throw IoError("gantt write failed: " + path, 0);
}

RunOutcome run_experiment(const ExperimentSpec& spec) {
  if (spec.repetitions < 1) throw ValidationError("repetitions must be >= 1");
  RunOutcome outcome;
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    std::uint64_t seed = spec.seed + static_cast<std::uint64_t>(rep);
    sim::EventTrace* trace_out = rep == 0 ? &outcome.first_trace : nullptr;
    ResultRow row;
    if (spec.app == "wordcount")
      row = run_wordcount_rep(spec, seed, rep, trace_out);
    else if (spec.app == "cg")
      row = run_cg_rep(spec, seed, rep, trace_out);
    else if (spec.app == "particles")
      row = run_particles_rep(spec, seed, rep, trace_out);
    else if (spec.app == "pipeline")
      row = run_pipeline_rep(spec, seed, rep, trace_out);
    else if (spec.app == "workload")
      row = run_workload_rep(spec, seed, rep, trace_out);
    else
      throw ValidationError("unknown app '" + spec.app +
                            "' (expected wordcount, cg, particles, pipeline or workload)");
    outcome.rows.push_back(std::move(row));
  }
  return outcome;
}

}  // namespace dstream::bench

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "dstream/apps/cg.hpp"
#include "dstream/apps/particles.hpp"
#include "dstream/apps/pipeline.hpp"
#include "dstream/apps/wordcount.hpp"
#include "dstream/apps/workload.hpp"
#include "dstream/errors.hpp"
#include "dstream/perf/model.hpp"
#include "dstream/sim/noise.hpp"
#include "dstream/sim/runtime.hpp"
#include "dstream/sim/trace.hpp"
#include "dstream/stream.hpp"

namespace py = pybind11;
using namespace dstream;

namespace {

// Python callables captured inside C++ closures can be destroyed on rank
// threads that do not hold the GIL (stream registries, the runtime's program
// copies). The holder drops its reference under the GIL instead.
struct PyFnHolder {
  py::function fn;
  explicit PyFnHolder(py::function f) : fn(std::move(f)) {}
  ~PyFnHolder() {
    py::gil_scoped_acquire gil;
    fn = py::function();
  }
};

std::vector<std::byte> to_payload(const std::string& data) {
  std::vector<std::byte> out(data.size());
  std::memcpy(out.data(), data.data(), data.size());
  return out;
}

py::bytes to_bytes(const std::vector<std::byte>& data) {
  return py::bytes(reinterpret_cast<const char*>(data.data()),
                   static_cast<py::ssize_t>(data.size()));
}

Operator wrap_operator(py::object op) {
  if (op.is_none()) return nullptr;
  auto holder = std::make_shared<PyFnHolder>(py::cast<py::function>(op));
  return [holder](const StreamElement& el) {
    py::gil_scoped_acquire gil;
    holder->fn(el.producer_rank, el.seq_no, to_bytes(el.payload));
  };
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Process-group decoupling library: simulated runtime, streams, "
            "cost model, and the case-study applications.";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // ---- layout and simulation configuration ----

  py::class_<GroupLayout>(m, "GroupLayout")
      .def(py::init<>())
      .def(py::init<int, std::vector<std::pair<std::string, std::vector<int>>>,
                    std::map<std::string, std::string>>(),
           py::arg("total_ranks"), py::arg("groups"),
           py::arg("op_map") = std::map<std::string, std::string>{})
      .def_static("single_group", &GroupLayout::single_group, py::arg("total_ranks"),
                  py::arg("id") = "all")
      .def_static("split_tail", &GroupLayout::split_tail, py::arg("total_ranks"),
                  py::arg("first"), py::arg("second"), py::arg("second_size"))
      .def_property_readonly("total_ranks", &GroupLayout::total_ranks)
      .def("members", &GroupLayout::members, py::return_value_policy::copy)
      .def("group_of", &GroupLayout::group_of)
      .def("fraction", &GroupLayout::fraction)
      .def("has_group", &GroupLayout::has_group);

  py::class_<sim::NoiseSpec>(m, "NoiseSpec")
      .def(py::init<>())
      .def_static("none", &sim::NoiseSpec::none)
      .def_static("uniform", &sim::NoiseSpec::uniform, py::arg("lo"), py::arg("hi"))
      .def_static("exponential", &sim::NoiseSpec::exponential, py::arg("mean"))
      .def_static("normal", &sim::NoiseSpec::normal, py::arg("mean"), py::arg("cv"))
      .def_static("parse", &sim::NoiseSpec::parse, py::arg("text"))
      .def("describe", &sim::NoiseSpec::describe);

  py::enum_<sim::TimeMode>(m, "TimeMode")
      .value("Virtual", sim::TimeMode::Virtual)
      .value("Wall", sim::TimeMode::Wall);

  py::class_<sim::SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("total_ranks", &sim::SimConfig::total_ranks)
      .def_readwrite("time_mode", &sim::SimConfig::time_mode)
      .def_readwrite("rng_seed", &sim::SimConfig::rng_seed)
      .def_readwrite("noise", &sim::SimConfig::noise)
      .def_readwrite("latency_us", &sim::SimConfig::latency_us)
      .def_readwrite("send_cost_us", &sim::SimConfig::send_cost_us)
      .def_readwrite("cost_per_byte_us", &sim::SimConfig::cost_per_byte_us)
      .def_readwrite("recv_cost_us", &sim::SimConfig::recv_cost_us)
      .def_readwrite("inflight_window", &sim::SimConfig::inflight_window)
      .def_readwrite("capture_trace", &sim::SimConfig::capture_trace)
      .def_readwrite("max_wall_seconds", &sim::SimConfig::max_wall_seconds);

  py::class_<sim::TraceRecord>(m, "TraceRecord")
      .def_readonly("rank", &sim::TraceRecord::rank)
      .def_readonly("tag", &sim::TraceRecord::tag)
      .def_property_readonly("t_start_us",
                             [](const sim::TraceRecord& r) { return sim::ticks_to_us(r.t_start); })
      .def_property_readonly("t_end_us",
                             [](const sim::TraceRecord& r) { return sim::ticks_to_us(r.t_end); });

  py::class_<sim::EventTrace>(m, "EventTrace")
      .def(py::init<>())
      .def("__len__", &sim::EventTrace::size)
      .def_property_readonly("records",
                             [](const sim::EventTrace& t) { return t.records(); })
      .def("write_csv_file", &sim::EventTrace::write_csv_file, py::arg("path"))
      .def_static("read_csv_file", &sim::EventTrace::read_csv_file, py::arg("path"));

  py::class_<sim::RankTotals>(m, "RankTotals")
      .def_readonly("compute_us", &sim::RankTotals::compute_us)
      .def_readonly("idle_us", &sim::RankTotals::idle_us)
      .def_readonly("send_us", &sim::RankTotals::send_us)
      .def_readonly("recv_us", &sim::RankTotals::recv_us)
      .def_readonly("io_us", &sim::RankTotals::io_us)
      .def("span_us", &sim::RankTotals::span_us);

  py::class_<sim::RunReport>(m, "RunReport")
      .def_readonly("failure", &sim::RunReport::failure)
      .def_readonly("exit_status", &sim::RunReport::exit_status)
      .def_readonly("rank_errors", &sim::RunReport::rank_errors)
      .def_readonly("trace", &sim::RunReport::trace)
      .def_readonly("totals", &sim::RunReport::totals)
      .def_readonly("makespan_us", &sim::RunReport::makespan_us)
      .def_readonly("undelivered_envelopes", &sim::RunReport::undelivered_envelopes)
      .def_readonly("max_in_flight", &sim::RunReport::max_in_flight)
      .def("ok", &sim::RunReport::ok);

  // ---- rank context and the stream operations ----
  // Blocking calls release the GIL so the single-threaded virtual-time
  // scheduler can hand control to whichever rank runs next.

  py::class_<sim::RankContext, std::unique_ptr<sim::RankContext, py::nodelete>>(m, "RankContext")
      .def_property_readonly("rank", &sim::RankContext::rank)
      .def_property_readonly("world_size", &sim::RankContext::world_size)
      .def_property_readonly("group", &sim::RankContext::group)
      .def("now_us", &sim::RankContext::now_us)
      .def("work", &sim::RankContext::work, py::arg("cost_us"), py::arg("label") = "work",
           py::call_guard<py::gil_scoped_release>())
      .def("io_work", &sim::RankContext::io_work, py::arg("cost_us"),
           py::call_guard<py::gil_scoped_release>())
      .def("rng_u64", &sim::RankContext::rng_u64)
      .def("rng_unit", &sim::RankContext::rng_unit)
      .def("register_layout", &sim::RankContext::register_layout, py::arg("tag"))
      .def("layout_registered", &sim::RankContext::layout_registered, py::arg("tag"))
      .def(
          "send_message",
          [](sim::RankContext& ctx, int dest, std::uint64_t tag, const std::string& payload) {
            std::vector<std::byte> bytes = to_payload(payload);
            py::gil_scoped_release release;
            ctx.send_message(dest, tag, std::move(bytes));
          },
          py::arg("dest_rank"), py::arg("tag"), py::arg("payload"))
      .def(
          "recv_message",
          [](sim::RankContext& ctx, int src, std::uint64_t tag) {
            std::vector<std::byte> payload;
            {
              py::gil_scoped_release release;
              payload = ctx.recv_message(src, tag);
            }
            return to_bytes(payload);
          },
          py::arg("src_rank"), py::arg("tag"));

  py::class_<StreamElementType>(m, "StreamElementType")
      .def(py::init<std::size_t, std::string>(), py::arg("element_bytes"), py::arg("layout_tag"))
      .def_readwrite("element_bytes", &StreamElementType::element_bytes)
      .def_readwrite("layout_tag", &StreamElementType::layout_tag);

  py::class_<SendTicket>(m, "SendTicket")
      .def_readonly("stream_id", &SendTicket::stream_id)
      .def_readonly("seq_no", &SendTicket::seq_no)
      .def_readonly("consumer_rank", &SendTicket::consumer_rank);

  py::class_<OperateSummary>(m, "OperateSummary")
      .def_readonly("elements_processed", &OperateSummary::elements_processed)
      .def_readonly("terminated", &OperateSummary::terminated);

  py::class_<Channel>(m, "Channel")
      .def_property_readonly("uid", &Channel::uid)
      .def_property_readonly("producer_group", &Channel::producer_group)
      .def_property_readonly("consumer_group", &Channel::consumer_group)
      .def_property_readonly("producer_side", &Channel::producer_side)
      .def_property_readonly("freed", &Channel::freed);

  py::class_<Stream>(m, "Stream")
      .def_property_readonly("uid", &Stream::uid)
      .def(
          "isend",
          [](Stream& s, const std::string& element) {
            std::vector<std::byte> payload = to_payload(element);
            py::gil_scoped_release release;
            return s.isend(std::move(payload));
          },
          py::arg("element"))
      .def(
          "isend_to",
          [](Stream& s, int consumer_rank, const std::string& element) {
            std::vector<std::byte> payload = to_payload(element);
            py::gil_scoped_release release;
            return s.isend_to(consumer_rank, std::move(payload));
          },
          py::arg("consumer_rank"), py::arg("element"))
      .def("terminate", &Stream::terminate, py::call_guard<py::gil_scoped_release>())
      .def("operate", &Stream::operate, py::call_guard<py::gil_scoped_release>())
      .def("operate_poll", &Stream::operate_poll, py::call_guard<py::gil_scoped_release>())
      .def("closed", &Stream::closed)
      .def("fully_terminated", &Stream::fully_terminated)
      .def("elements_processed", &Stream::elements_processed);

  m.def("create_channel", &create_channel, py::arg("ctx"), py::arg("producer_group"),
        py::arg("consumer_group"), py::call_guard<py::gil_scoped_release>(),
        py::keep_alive<0, 1>());
  m.def(
      "attach",
      [](Channel& channel, const StreamElementType& type, py::object op) {
        Operator wrapped = wrap_operator(std::move(op));
        py::gil_scoped_release release;
        return attach(channel, type, std::move(wrapped));
      },
      py::arg("channel"), py::arg("type"), py::arg("op") = py::none());
  m.def("free_channel", &free_channel, py::arg("channel"),
        py::call_guard<py::gil_scoped_release>());

  m.def(
      "run",
      [](const GroupLayout& layout, const sim::SimConfig& config, py::function program) {
        auto holder = std::make_shared<PyFnHolder>(std::move(program));
        sim::RankProgram cpp_program = [holder](sim::RankContext& ctx) {
          py::gil_scoped_acquire gil;
          holder->fn(py::cast(&ctx, py::return_value_policy::reference));
        };
        py::gil_scoped_release release;
        return sim::run(layout, config, cpp_program);
      },
      py::arg("layout"), py::arg("config"), py::arg("program"),
      "Execute one Python callable per simulated rank and return the report.");

  // ---- cost model ----

  py::class_<perf::PerfParams>(m, "PerfParams")
      .def(py::init<>())
      .def_readwrite("t_w0", &perf::PerfParams::t_w0)
      .def_readwrite("t_w1", &perf::PerfParams::t_w1)
      .def_readwrite("t_w1_prime", &perf::PerfParams::t_w1_prime)
      .def_readwrite("t_sigma", &perf::PerfParams::t_sigma)
      .def_readwrite("alpha", &perf::PerfParams::alpha)
      .def_readwrite("beta", &perf::PerfParams::beta)
      .def_readwrite("data_volume_d", &perf::PerfParams::data_volume_d)
      .def_readwrite("granularity_s", &perf::PerfParams::granularity_s)
      .def_readwrite("overhead_o", &perf::PerfParams::overhead_o)
      .def_readwrite("total_ranks", &perf::PerfParams::total_ranks);

  py::class_<perf::BetaModel>(m, "BetaModel")
      .def_static("constant", &perf::BetaModel::constant, py::arg("beta0"))
      .def_static("affine", &perf::BetaModel::affine, py::arg("beta0"), py::arg("k"))
      .def("at", &perf::BetaModel::at, py::arg("s"), py::arg("d"));

  py::class_<perf::PerfPrediction::Breakdown>(m, "PredictionBreakdown")
      .def_readonly("producer_term", &perf::PerfPrediction::Breakdown::producer_term)
      .def_readonly("overhead_term", &perf::PerfPrediction::Breakdown::overhead_term)
      .def_readonly("consumer_term", &perf::PerfPrediction::Breakdown::consumer_term)
      .def_readonly("beta", &perf::PerfPrediction::Breakdown::beta);

  py::class_<perf::PerfPrediction>(m, "PerfPrediction")
      .def_readonly("t_conventional", &perf::PerfPrediction::t_conventional)
      .def_readonly("t_decoupled", &perf::PerfPrediction::t_decoupled)
      .def_readonly("speedup", &perf::PerfPrediction::speedup)
      .def_readonly("breakdown", &perf::PerfPrediction::breakdown);

  m.def("predict_conventional", &perf::predict_conventional, py::arg("params"));
  m.def("predict_decoupled_max", &perf::predict_decoupled_max, py::arg("params"));
  m.def("predict_decoupled", &perf::predict_decoupled, py::arg("params"), py::arg("beta_model"),
        py::arg("overhead_outside_beta") = false);
  m.def("estimate_beta", &perf::estimate_beta, py::arg("trace"), py::arg("op0_tag"),
        py::arg("op1_group"));

  py::class_<perf::SweepRow>(m, "SweepRow")
      .def_readonly("alpha", &perf::SweepRow::alpha)
      .def_readonly("s", &perf::SweepRow::s)
      .def_readonly("prediction", &perf::SweepRow::prediction);

  py::class_<perf::SweepResult>(m, "SweepResult")
      .def_readonly("best", &perf::SweepResult::best)
      .def_readonly("rows", &perf::SweepResult::rows);

  m.def(
      "sweep_alpha",
      [](perf::PerfParams params, const perf::BetaModel& beta_model,
         std::vector<double> alpha_grid) {
        return perf::sweep_alpha(std::move(params), beta_model, std::move(alpha_grid));
      },
      py::arg("params"), py::arg("beta_model"), py::arg("alpha_grid"));
  m.def(
      "sweep_granularity",
      [](perf::PerfParams params, const perf::BetaModel& beta_model, std::vector<double> s_grid) {
        return perf::sweep_granularity(std::move(params), beta_model, std::move(s_grid));
      },
      py::arg("params"), py::arg("beta_model"), py::arg("s_grid"));

  // ---- case-study applications ----

  auto wc = m.def_submodule("wordcount", "MapReduce word histogram");
  {
    namespace app = apps::wordcount;
    py::class_<app::CorpusSpec>(wc, "CorpusSpec")
        .def(py::init<>())
        .def_readwrite("vocab_size", &app::CorpusSpec::vocab_size)
        .def_readwrite("zipf_exponent", &app::CorpusSpec::zipf_exponent)
        .def_readwrite("total_tokens", &app::CorpusSpec::total_tokens)
        .def_readwrite("seed", &app::CorpusSpec::seed)
        .def_readwrite("documents", &app::CorpusSpec::documents)
        .def_readwrite("doc_size_skew", &app::CorpusSpec::doc_size_skew);
    py::class_<app::Corpus>(wc, "Corpus")
        .def_static("synthetic", &app::Corpus::synthetic, py::arg("spec"),
                    py::call_guard<py::gil_scoped_release>())
        .def_static(
            "from_directory",
            [](const std::string& dir) { return app::Corpus::from_directory(dir); },
            py::arg("dir"))
        .def_property_readonly("document_count",
                               [](const app::Corpus& c) { return c.documents.size(); });
    py::enum_<app::Variant>(wc, "Variant")
        .value("Conventional", app::Variant::Conventional)
        .value("Decoupled", app::Variant::Decoupled);
    py::class_<app::WordcountConfig>(wc, "WordcountConfig")
        .def(py::init<>())
        .def_readwrite("ranks", &app::WordcountConfig::ranks)
        .def_readwrite("variant", &app::WordcountConfig::variant)
        .def_readwrite("alpha", &app::WordcountConfig::alpha)
        .def_readwrite("batch_pairs", &app::WordcountConfig::batch_pairs)
        .def_readwrite("combine", &app::WordcountConfig::combine)
        .def_readwrite("aggregate_partials", &app::WordcountConfig::aggregate_partials)
        .def_readwrite("per_token_us", &app::WordcountConfig::per_token_us)
        .def_readwrite("per_pair_us", &app::WordcountConfig::per_pair_us)
        .def_readwrite("sim", &app::WordcountConfig::sim);
    py::class_<app::WordcountResult>(wc, "WordcountResult")
        .def_readonly("histogram", &app::WordcountResult::histogram)
        .def_readonly("tokens_mapped", &app::WordcountResult::tokens_mapped)
        .def_readonly("map_ranks", &app::WordcountResult::map_ranks)
        .def_readonly("reduce_ranks", &app::WordcountResult::reduce_ranks)
        .def_readonly("report", &app::WordcountResult::report);
    wc.def("tokenize", [](const std::string& text) { return app::tokenize(text); },
           py::arg("text"));
    wc.def("serial_histogram", &app::serial_histogram, py::arg("corpus"),
           py::call_guard<py::gil_scoped_release>());
    wc.def("run", &app::run_wordcount, py::arg("corpus"), py::arg("config"),
           py::call_guard<py::gil_scoped_release>());
  }

  auto cg = m.def_submodule("cg", "Conjugate-gradient Poisson solver");
  {
    namespace app = apps::cg;
    py::enum_<app::Variant>(cg, "Variant")
        .value("Blocking", app::Variant::Blocking)
        .value("NonBlocking", app::Variant::NonBlocking)
        .value("Decoupled", app::Variant::Decoupled);
    py::enum_<app::Rhs>(cg, "Rhs")
        .value("ManufacturedSine", app::Rhs::ManufacturedSine)
        .value("Zero", app::Rhs::Zero);
    py::class_<app::CgConfig>(cg, "CgConfig")
        .def(py::init<>())
        .def_readwrite("dims", &app::CgConfig::dims)
        .def_readwrite("local", &app::CgConfig::local)
        .def_readwrite("iterations", &app::CgConfig::iterations)
        .def_readwrite("variant", &app::CgConfig::variant)
        .def_readwrite("exchange_ranks", &app::CgConfig::exchange_ranks)
        .def_readwrite("rhs", &app::CgConfig::rhs)
        .def_readwrite("per_point_us", &app::CgConfig::per_point_us)
        .def_readwrite("per_dot_us", &app::CgConfig::per_dot_us)
        .def_readwrite("sim", &app::CgConfig::sim)
        .def("total_ranks", &app::CgConfig::total_ranks);
    py::class_<app::CgResult>(cg, "CgResult")
        .def_readonly("residual_history", &app::CgResult::residual_history)
        .def_readonly("max_error", &app::CgResult::max_error)
        .def_readonly("report", &app::CgResult::report);
    py::class_<app::SerialCgResult>(cg, "SerialCgResult")
        .def_readonly("residual_history", &app::SerialCgResult::residual_history)
        .def_readonly("max_error", &app::SerialCgResult::max_error);
    cg.def("run", &app::run_cg, py::arg("config"), py::call_guard<py::gil_scoped_release>());
    cg.def("serial_reference", &app::serial_reference, py::arg("config"),
           py::call_guard<py::gil_scoped_release>());
  }

  auto pt = m.def_submodule("particles", "Ballistic particle mover");
  {
    namespace app = apps::particles;
    py::class_<app::Particle>(pt, "Particle")
        .def(py::init<>())
        .def_readwrite("id", &app::Particle::id)
        .def_readwrite("x", &app::Particle::x)
        .def_readwrite("y", &app::Particle::y)
        .def_readwrite("z", &app::Particle::z)
        .def_readwrite("vx", &app::Particle::vx)
        .def_readwrite("vy", &app::Particle::vy)
        .def_readwrite("vz", &app::Particle::vz)
        .def_readonly("hops", &app::Particle::hops);
    py::enum_<app::Exchange>(pt, "Exchange")
        .value("Neighbor", app::Exchange::Neighbor)
        .value("Decoupled", app::Exchange::Decoupled);
    py::enum_<app::Io>(pt, "Io")
        .value("Nothing", app::Io::None)
        .value("Shared", app::Io::Shared)
        .value("Collective", app::Io::Collective)
        .value("Decoupled", app::Io::Decoupled);
    py::class_<app::ParticlesConfig>(pt, "ParticlesConfig")
        .def(py::init<>())
        .def_readwrite("dims", &app::ParticlesConfig::dims)
        .def_readwrite("n_particles", &app::ParticlesConfig::n_particles)
        .def_readwrite("steps", &app::ParticlesConfig::steps)
        .def_readwrite("dt", &app::ParticlesConfig::dt)
        .def_readwrite("exchange", &app::ParticlesConfig::exchange)
        .def_readwrite("io", &app::ParticlesConfig::io)
        .def_readwrite("alpha", &app::ParticlesConfig::alpha)
        .def_readwrite("router_ranks", &app::ParticlesConfig::router_ranks)
        .def_readwrite("writer_ranks", &app::ParticlesConfig::writer_ranks)
        .def_readwrite("skew", &app::ParticlesConfig::skew)
        .def_readwrite("seed", &app::ParticlesConfig::seed)
        .def_readwrite("vmax_cells", &app::ParticlesConfig::vmax_cells)
        .def_readwrite("batch_particles", &app::ParticlesConfig::batch_particles)
        .def_readwrite("out_path", &app::ParticlesConfig::out_path)
        .def_readwrite("sim", &app::ParticlesConfig::sim)
        .def("total_ranks", &app::ParticlesConfig::total_ranks);
    py::class_<app::ParticlesResult>(pt, "ParticlesResult")
        .def_readonly("final_particles", &app::ParticlesResult::final_particles)
        .def_readonly("exchanged_total", &app::ParticlesResult::exchanged_total)
        .def_readonly("max_rounds", &app::ParticlesResult::max_rounds)
        .def_readonly("max_hops", &app::ParticlesResult::max_hops)
        .def_readonly("collective_offsets", &app::ParticlesResult::collective_offsets)
        .def_readonly("bytes_written", &app::ParticlesResult::bytes_written)
        .def_readonly("report", &app::ParticlesResult::report);
    pt.def("run", &app::run_particles, py::arg("config"),
           py::call_guard<py::gil_scoped_release>());
    pt.def("ballistic_reference", &app::ballistic_reference, py::arg("config"),
           py::call_guard<py::gil_scoped_release>());
    pt.def("initial_particles", &app::initial_particles, py::arg("config"));
    pt.def("read_particle_file", &app::read_particle_file, py::arg("path"));
    pt.def("sidecar_path", &app::sidecar_path, py::arg("path"));
    pt.def("owner_of", &app::owner_of, py::arg("dims"), py::arg("x"), py::arg("y"), py::arg("z"));
  }

  auto pl = m.def_submodule("pipeline", "Synthetic two-operator pipeline");
  {
    namespace app = apps::pipeline;
    py::enum_<app::Variant>(pl, "Variant")
        .value("Conventional", app::Variant::Conventional)
        .value("Decoupled", app::Variant::Decoupled);
    py::class_<app::PipelineConfig>(pl, "PipelineConfig")
        .def(py::init<>())
        .def_readwrite("total_ranks", &app::PipelineConfig::total_ranks)
        .def_readwrite("alpha", &app::PipelineConfig::alpha)
        .def_readwrite("variant", &app::PipelineConfig::variant)
        .def_readwrite("data_bytes", &app::PipelineConfig::data_bytes)
        .def_readwrite("element_bytes", &app::PipelineConfig::element_bytes)
        .def_readwrite("t_w0_us", &app::PipelineConfig::t_w0_us)
        .def_readwrite("t_w1_prime_us", &app::PipelineConfig::t_w1_prime_us)
        .def_readwrite("t_sigma_us", &app::PipelineConfig::t_sigma_us)
        .def_readwrite("sim", &app::PipelineConfig::sim)
        .def("consumer_ranks", &app::PipelineConfig::consumer_ranks)
        .def("producer_ranks", &app::PipelineConfig::producer_ranks)
        .def("element_count", &app::PipelineConfig::element_count);
    py::class_<app::PipelineResult>(pl, "PipelineResult")
        .def_readonly("makespan_us", &app::PipelineResult::makespan_us)
        .def_readonly("report", &app::PipelineResult::report);
    pl.def("run", &app::run_pipeline, py::arg("config"),
           py::call_guard<py::gil_scoped_release>());
    pl.def("model_params", &app::model_params, py::arg("config"));
    pl.def("fill_beta", &app::fill_beta, py::arg("config"));
  }

  auto wl = m.def_submodule("workload", "Streaming task-duration analysis");
  {
    namespace app = apps::workload;
    py::class_<app::WorkloadConfig>(wl, "WorkloadConfig")
        .def(py::init<>())
        .def_readwrite("producer_ranks", &app::WorkloadConfig::producer_ranks)
        .def_readwrite("records_per_producer", &app::WorkloadConfig::records_per_producer)
        .def_readwrite("mean_us", &app::WorkloadConfig::mean_us)
        .def_readwrite("seed", &app::WorkloadConfig::seed)
        .def_readwrite("per_record_us", &app::WorkloadConfig::per_record_us)
        .def_readwrite("batch_records", &app::WorkloadConfig::batch_records)
        .def_readwrite("sim", &app::WorkloadConfig::sim)
        .def("total_ranks", &app::WorkloadConfig::total_ranks);
    py::class_<app::WorkloadStats>(wl, "WorkloadStats")
        .def_readonly("count", &app::WorkloadStats::count)
        .def_readonly("min_us", &app::WorkloadStats::min_us)
        .def_readonly("max_us", &app::WorkloadStats::max_us)
        .def_readonly("mean_us", &app::WorkloadStats::mean_us)
        .def_readonly("median_us", &app::WorkloadStats::median_us);
    py::class_<app::WorkloadResult>(wl, "WorkloadResult")
        .def_readonly("stats", &app::WorkloadResult::stats)
        .def_readonly("per_producer", &app::WorkloadResult::per_producer)
        .def_readonly("report", &app::WorkloadResult::report);
    wl.def("run", &app::run_workload, py::arg("config"),
           py::call_guard<py::gil_scoped_release>());
    wl.def("offline_stats", &app::offline_stats, py::arg("durations"));
    wl.def("synthetic_durations", &app::synthetic_durations, py::arg("config"));
  }
}

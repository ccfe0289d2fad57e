#include "dstream/sim/trace.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "dstream/errors.hpp"

namespace dstream::sim {

namespace {
Ticks ticks_to_whole_us(Ticks t) {
  // Round-to-nearest keeps record order (monotone mapping).
  return (t + 500) / 1000;
}
}  // namespace

void EventTrace::write_csv(std::ostream& os) const {
  std::vector<std::tuple<int, Ticks, Ticks, const std::string*>> rows;
  rows.reserve(records_.size());
  for (const auto& r : records_)
    rows.emplace_back(r.rank, ticks_to_whole_us(r.t_start), ticks_to_whole_us(r.t_end), &r.tag);
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a), std::get<2>(a), *std::get<3>(a)) <
           std::tie(std::get<0>(b), std::get<1>(b), std::get<2>(b), *std::get<3>(b));
  });
  os << "rank,t_start,t_end,tag\n";
  for (const auto& [rank, t0, t1, tag] : rows)
    os << rank << ',' << t0 << ',' << t1 << ',' << *tag << '\n';
}

void EventTrace::write_csv_file(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("EventTrace: cannot open '" + path + "' for writing", 0);
  write_csv(os);
  os.flush();
  if (!os) throw IoError("EventTrace: write to '" + path + "' failed", 0);
}

EventTrace EventTrace::read_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("EventTrace: cannot open '" + path + "'", 0);
  std::string line;
  if (!std::getline(is, line)) throw ProtocolError("EventTrace: empty csv '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "rank,t_start,t_end,tag")
    throw ProtocolError("EventTrace: '" + path + "' is not a trace csv (header '" + line +
                        "', expected 'rank,t_start,t_end,tag')");
  std::vector<TraceRecord> records;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string rank_s, t0_s, t1_s, tag;
    if (!std::getline(ls, rank_s, ',') || !std::getline(ls, t0_s, ',') ||
        !std::getline(ls, t1_s, ',') || !std::getline(ls, tag))
      throw ProtocolError("EventTrace: malformed row '" + line + "'");
    records.push_back({std::stoi(rank_s), us_to_ticks(std::stod(t0_s)),
                       us_to_ticks(std::stod(t1_s)), tag});
  }
  return EventTrace(std::move(records));
}

TraceSummary summarize_trace(const EventTrace& trace) {
  std::map<int, std::vector<const TraceRecord*>> by_rank;
  int max_rank = -1;
  for (const auto& r : trace.records()) {
    if (r.t_end < r.t_start)
      throw ProtocolError("trace: record on rank " + std::to_string(r.rank) +
                          " runs backwards");
    by_rank[r.rank].push_back(&r);
    max_rank = std::max(max_rank, r.rank);
  }
  TraceSummary summary;
  summary.per_rank.resize(static_cast<std::size_t>(max_rank + 1));
  for (auto& [rank, records] : by_rank) {
    std::stable_sort(records.begin(), records.end(),
                     [](const TraceRecord* a, const TraceRecord* b) {
                       return std::tie(a->t_start, a->t_end) < std::tie(b->t_start, b->t_end);
                     });
    Ticks prev_end = 0;
    bool first = true;
    auto& totals = summary.per_rank[static_cast<std::size_t>(rank)];
    for (const TraceRecord* r : records) {
      if (!first && r->t_start < prev_end)
        throw ProtocolError("trace: overlapping records on rank " + std::to_string(rank));
      first = false;
      prev_end = std::max(prev_end, r->t_end);
      double dur = ticks_to_us(r->t_end - r->t_start);
      if (r->tag.rfind("compute", 0) == 0)
        totals.compute_us += dur;
      else if (r->tag == "idle")
        totals.idle_us += dur;
      else if (r->tag == "send")
        totals.send_us += dur;
      else if (r->tag == "recv")
        totals.recv_us += dur;
      else if (r->tag == "io")
        totals.io_us += dur;
      else
        throw ProtocolError("trace: unknown tag '" + r->tag + "'");
    }
    summary.makespan_us = std::max(summary.makespan_us, ticks_to_us(prev_end));
  }
  return summary;
}

}  // namespace dstream::sim

#include "dstream/sim/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "dstream/errors.hpp"

namespace dstream::sim {

namespace {

/// Internal unwinding token thrown out of blocked primitives once the run
/// has been aborted (peer failure, deadlock, watchdog).
struct AbortRun {};

constexpr std::uint64_t kAttachSlots = 1ULL << 20;

std::string port_reason(bool raw, std::uint64_t a, std::uint64_t b) {
  std::ostringstream os;
  if (raw) {
    os << "recv from rank " << a << " tag " << b;
  } else {
    os << "stream " << a << " recv";
  }
  return os.str();
}

}  // namespace

void SimConfig::validate() const {
  if (total_ranks < 0) throw ValidationError("SimConfig: total_ranks must be >= 0");
  if (latency_us < 0 || send_cost_us < 0 || cost_per_byte_us < 0 || recv_cost_us < 0)
    throw ValidationError("SimConfig: transport costs must be >= 0");
  if (!(std::isfinite(latency_us) && std::isfinite(send_cost_us) &&
        std::isfinite(cost_per_byte_us) && std::isfinite(recv_cost_us)))
    throw ValidationError("SimConfig: transport costs must be finite");
  if (inflight_window < 1) throw ValidationError("SimConfig: inflight_window must be >= 1");
  if (!(max_wall_seconds > 0)) throw ValidationError("SimConfig: max_wall_seconds must be > 0");
  noise.validate();
}

class Runtime {
 public:
  Runtime(const GroupLayout& layout, const SimConfig& cfg, RankProgram program)
      : layout_(layout), cfg_(cfg), program_(std::move(program)) {
    P_ = layout_.total_ranks();
    if (cfg_.total_ranks != 0 && cfg_.total_ranks != P_)
      throw ValidationError("SimConfig.total_ranks does not match the group layout");
    if (!program_) throw ValidationError("run: rank program must be callable");
    ranks_.reserve(static_cast<std::size_t>(P_));
    for (int r = 0; r < P_; ++r) {
      auto st = std::make_unique<RankState>(cfg_.rng_seed, r);
      if (auto g = layout_.group_of(r)) st->group = *g;
      ranks_.push_back(std::move(st));
    }
  }

  RunReport execute();

 private:
  friend class dstream::sim::RankContext;

  enum class St { Ready, Running, Blocked, Finished };

  struct PortKey {
    int dest = -1;
    bool raw = false;
    std::uint64_t a = 0;  ///< stream uid; raw: source rank
    std::uint64_t b = 0;  ///< raw: tag
    auto operator<=>(const PortKey&) const = default;
  };

  struct PortEntry {
    Ticks delivery = 0;
    std::uint64_t order = 0;
    Envelope env;
  };

  struct Port {
    // min-heap on (delivery, order)
    std::vector<PortEntry> heap;

    static bool later(const PortEntry& x, const PortEntry& y) {
      if (x.delivery != y.delivery) return x.delivery > y.delivery;
      return x.order > y.order;
    }
    bool empty() const { return heap.empty(); }
    Ticks min_delivery() const { return heap.front().delivery; }
    void push(PortEntry e) {
      heap.push_back(std::move(e));
      std::push_heap(heap.begin(), heap.end(), later);
    }
    PortEntry pop() {
      std::pop_heap(heap.begin(), heap.end(), later);
      PortEntry e = std::move(heap.back());
      heap.pop_back();
      return e;
    }
  };

  struct Wait {
    enum class Kind { None, Port, Window, Barrier } kind = Kind::None;
    PortKey port{};
    std::uint64_t win_stream = 0;
    int win_producer = -1;
    std::string barrier;
    std::string reason;
  };

  struct RankState {
    RankState(std::uint64_t seed, int rank)
        : rng(Rng::derive(seed, 2 * static_cast<std::uint64_t>(rank))),
          noise_rng(Rng::derive(seed, 2 * static_cast<std::uint64_t>(rank) + 1)) {}

    Ticks clock = 0;
    St st = St::Ready;
    bool granted = false;
    bool deadlocked = false;
    std::condition_variable cv;
    Wait wait;
    Rng rng;
    Rng noise_rng;
    int exit_code = 0;
    std::string error;
    std::string group;
    RankTotals totals;
  };

  struct BarrierState {
    int expected = 0;
    int arrived = 0;
    bool complete = false;
    Ticks t_max = 0;             ///< release time: latest arrival clock
    std::uint64_t payload = 0;   ///< channel uid for create barriers
  };

  struct ChannelState {
    std::string producer_group;
    std::string consumer_group;
    bool freed = false;
  };

  struct StreamState {
    std::uint64_t channel_uid = 0;
    StreamElementType type;
  };

  struct WindowState {
    int in_flight = 0;
    Ticks last_free = 0;
  };

  // ---- scheduling (virtual mode) ----

  void check_abort_locked() const {
    if (abort_) throw AbortRun{};
  }

  bool wait_satisfied_locked(const Wait& w) const {
    switch (w.kind) {
      case Wait::Kind::Port: {
        auto it = ports_.find(w.port);
        return it != ports_.end() && !it->second.empty();
      }
      case Wait::Kind::Window: {
        auto it = windows_.find({w.win_stream, w.win_producer});
        return it == windows_.end() || it->second.in_flight < cfg_.inflight_window;
      }
      case Wait::Kind::Barrier: {
        auto it = barriers_.find(w.barrier);
        return it != barriers_.end() && it->second.complete;
      }
      case Wait::Kind::None:
        return false;
    }
    return false;
  }

  // Time the rank would resume at; only meaningful when satisfied.
  Ticks wait_projected_locked(const Wait& w) const {
    switch (w.kind) {
      case Wait::Kind::Port:
        return ports_.at(w.port).min_delivery();
      case Wait::Kind::Window: {
        auto it = windows_.find({w.win_stream, w.win_producer});
        return it == windows_.end() ? 0 : it->second.last_free;
      }
      case Wait::Kind::Barrier:
        return barriers_.at(w.barrier).t_max;
      case Wait::Kind::None:
        return 0;
    }
    return 0;
  }

  int pick_next_locked() const {
    int best = -1;
    Ticks best_t = 0;
    for (int r = 0; r < P_; ++r) {
      const RankState& s = *ranks_[r];
      Ticks t;
      if (s.st == St::Ready) {
        t = s.clock;
      } else if (s.st == St::Blocked && wait_satisfied_locked(s.wait)) {
        t = std::max(s.clock, wait_projected_locked(s.wait));
      } else {
        continue;
      }
      if (best < 0 || t < best_t) {
        best = r;
        best_t = t;
      }
    }
    return best;
  }

  void grant_locked(int r) {
    ranks_[r]->granted = true;
    ranks_[r]->cv.notify_one();
  }

  void notify_everyone_locked() {
    for (auto& s : ranks_) s->cv.notify_all();
    wall_cv_.notify_all();
    completion_cv_.notify_all();
  }

  void declare_deadlock_locked() {
    std::ostringstream os;
    os << "deadlock:";
    bool first = true;
    for (int r = 0; r < P_; ++r) {
      RankState& s = *ranks_[r];
      if (s.st != St::Blocked) continue;
      s.deadlocked = true;
      os << (first ? " " : "; ") << "rank " << r << " waiting on " << s.wait.reason;
      first = false;
    }
    if (failure_.empty()) failure_ = os.str();
    abort_ = true;
    notify_everyone_locked();
  }

  // Called by a Running rank that can no longer proceed. Hands the baton on
  // (possibly triggering deadlock detection) and parks until granted.
  void schedule_next_locked() {
    int nxt = pick_next_locked();
    if (nxt >= 0) {
      grant_locked(nxt);
      return;
    }
    if (finished_count_ == P_) {
      completion_cv_.notify_all();
      return;
    }
    declare_deadlock_locked();
  }

  void park_locked(int r, std::unique_lock<std::mutex>& lk) {
    RankState& s = *ranks_[r];
    s.cv.wait(lk, [&] { return s.granted || abort_; });
    if (abort_) throw AbortRun{};
    s.granted = false;
    s.st = St::Running;
  }

  // Clock advanced; let anyone with an earlier timestamp run first.
  void yield_locked(int r, std::unique_lock<std::mutex>& lk) {
    check_abort_locked();
    RankState& s = *ranks_[r];
    s.st = St::Ready;
    int nxt = pick_next_locked();
    if (nxt == r) {
      s.st = St::Running;
      return;
    }
    grant_locked(nxt);  // nxt >= 0: r itself is a candidate
    park_locked(r, lk);
  }

  void block_locked(int r, Wait w, std::unique_lock<std::mutex>& lk) {
    check_abort_locked();
    RankState& s = *ranks_[r];
    s.st = St::Blocked;
    s.wait = std::move(w);
    schedule_next_locked();
    park_locked(r, lk);
    s.wait = Wait{};
  }

  // ---- bookkeeping ----

  void record_locked(int r, Ticks t0, Ticks t1, std::string_view tag) {
    RankState& s = *ranks_[r];
    double us = ticks_to_us(t1 - t0);
    if (tag.rfind("compute:", 0) == 0) {
      s.totals.compute_us += us;
    } else if (tag == "idle") {
      s.totals.idle_us += us;
    } else if (tag == "send") {
      s.totals.send_us += us;
    } else if (tag == "recv") {
      s.totals.recv_us += us;
    } else if (tag == "io") {
      s.totals.io_us += us;
    } else {
      throw UsageError("unknown trace tag: " + std::string(tag));
    }
    max_t_end_ = std::max(max_t_end_, t1);
    if (cfg_.capture_trace && t1 > t0)
      trace_.append(TraceRecord{r, t0, t1, std::string(tag)});
  }

  Ticks wall_now_ticks() const {
    auto d = std::chrono::steady_clock::now() - wall_start_;
    return std::chrono::duration_cast<std::chrono::nanoseconds>(d).count();
  }

  // Advance the rank clock to the wall clock, accounting the gap as idle.
  void wall_sync_clock_locked(int r, std::string_view tag = "idle") {
    RankState& s = *ranks_[r];
    Ticks now = wall_now_ticks();
    if (now > s.clock) {
      record_locked(r, s.clock, now, tag);
      s.clock = now;
    }
  }

  // ---- primitives ----

  double do_work(int r, double cost_us, std::string_view label, bool io) {
    if (!(cost_us >= 0) || !std::isfinite(cost_us))
      throw UsageError("work cost must be finite and >= 0");
    std::string tag = io ? std::string("io") : "compute:" + std::string(label);
    if (cfg_.time_mode == TimeMode::Virtual) {
      std::unique_lock lk(mu_);
      check_abort_locked();
      RankState& s = *ranks_[r];
      double factor = io ? 1.0 : 1.0 + cfg_.noise.sample(s.noise_rng);
      Ticks dt = us_to_ticks(cost_us * factor);
      Ticks t0 = s.clock;
      s.clock += dt;
      record_locked(r, t0, s.clock, tag);
      yield_locked(r, lk);
      return ticks_to_us(dt);
    }
    double factor;
    {
      std::unique_lock lk(mu_);
      check_abort_locked();
      factor = io ? 1.0 : 1.0 + cfg_.noise.sample(ranks_[r]->noise_rng);
    }
    double dur_us = cost_us * factor;
    Ticks t0 = wall_now_ticks();
    std::this_thread::sleep_for(std::chrono::nanoseconds(us_to_ticks(dur_us)));
    {
      std::unique_lock lk(mu_);
      check_abort_locked();
      RankState& s = *ranks_[r];
      Ticks t1 = wall_now_ticks();
      record_locked(r, t0, t1, tag);
      s.clock = t1;
    }
    return dur_us;
  }

  void push_port_locked(PortKey key, Ticks delivery, Envelope env) {
    ports_[key].push(PortEntry{delivery, order_counter_++, std::move(env)});
    if (cfg_.time_mode == TimeMode::Wall) wall_cv_.notify_all();
  }

  // Sender-side cost, then enqueue with latency. Lock held.
  void transmit_locked(int r, PortKey key, Envelope env, std::unique_lock<std::mutex>& lk) {
    RankState& s = *ranks_[r];
    double cost =
        cfg_.send_cost_us + cfg_.cost_per_byte_us * static_cast<double>(env.payload.size());
    if (cfg_.time_mode == TimeMode::Virtual) {
      Ticks t0 = s.clock;
      s.clock += us_to_ticks(cost);
      record_locked(r, t0, s.clock, "send");
      push_port_locked(key, s.clock + us_to_ticks(cfg_.latency_us), std::move(env));
      yield_locked(r, lk);
    } else {
      wall_sync_clock_locked(r);
      Ticks t0 = s.clock;
      Ticks t1 = t0 + us_to_ticks(cost);
      record_locked(r, t0, t1, "send");
      s.clock = t1;
      push_port_locked(key, t1 + us_to_ticks(cfg_.latency_us), std::move(env));
    }
  }

  // Blocking/non-blocking pop shared by raw receives and stream pops.
  std::optional<Envelope> pop_port(int r, PortKey key, bool blocking, std::string reason) {
    std::unique_lock lk(mu_);
    check_abort_locked();
    RankState& s = *ranks_[r];
    if (cfg_.time_mode == TimeMode::Virtual) {
      bool granted_from_wait = false;
      for (;;) {
        auto it = ports_.find(key);
        bool has = it != ports_.end() && !it->second.empty();
        // An entry later than our clock may only be taken after the
        // scheduler has confirmed nothing earlier can still arrive, i.e.
        // after we were granted specifically for this wait.
        if (has && (granted_from_wait || it->second.min_delivery() <= s.clock)) {
          PortEntry e = it->second.pop();
          if (e.delivery > s.clock) {
            record_locked(r, s.clock, e.delivery, "idle");
            s.clock = e.delivery;
          }
          Ticks t0 = s.clock;
          s.clock += us_to_ticks(cfg_.recv_cost_us);
          record_locked(r, t0, s.clock, "recv");
          finish_pop_locked(r, e.env, key.raw);
          yield_locked(r, lk);
          return std::move(e.env);
        }
        if (!blocking) return std::nullopt;
        Wait w;
        w.kind = Wait::Kind::Port;
        w.port = key;
        w.reason = reason;
        block_locked(r, std::move(w), lk);
        granted_from_wait = true;
      }
    }
    for (;;) {
      check_abort_locked();
      auto it = ports_.find(key);
      bool has = it != ports_.end() && !it->second.empty();
      Ticks now = wall_now_ticks();
      if (has && it->second.min_delivery() <= now) {
        PortEntry e = it->second.pop();
        wall_sync_clock_locked(r);
        Ticks t0 = s.clock;
        Ticks t1 = t0 + us_to_ticks(cfg_.recv_cost_us);
        record_locked(r, t0, t1, "recv");
        s.clock = t1;
        finish_pop_locked(r, e.env, key.raw);
        wall_cv_.notify_all();
        return std::move(e.env);
      }
      if (!blocking) return std::nullopt;
      wall_cv_.wait_for(lk, std::chrono::milliseconds(5));
    }
  }

  // Sequence continuity check and window credit return. Lock held.
  void finish_pop_locked(int r, const Envelope& env, bool raw) {
    if (raw) return;
    auto key = std::make_tuple(env.stream_id, env.producer_rank, r);
    std::uint64_t& expected = pair_seq_expected_[key];
    if (env.pair_seq != expected) {
      std::ostringstream os;
      os << "stream " << env.stream_id << ": rank " << r << " expected element "
         << expected << " from producer " << env.producer_rank << " but got "
         << env.pair_seq;
      throw ProtocolError(os.str());
    }
    ++expected;
    if (env.kind == Envelope::Kind::Data) {
      WindowState& w = windows_[{env.stream_id, env.producer_rank}];
      --w.in_flight;
      w.last_free = std::max(w.last_free, ranks_[r]->clock);
      if (cfg_.time_mode == TimeMode::Wall) wall_cv_.notify_all();
    }
  }

  // ---- barriers and registries ----

  int union_size_locked(const ChannelState& ch) const {
    return static_cast<int>(layout_.members(ch.producer_group).size() +
                            layout_.members(ch.consumer_group).size());
  }

  void require_member_locked(int r, const ChannelState& ch, const char* what) const {
    if (!layout_.contains(ch.producer_group, r) && !layout_.contains(ch.consumer_group, r)) {
      throw UsageError(std::string(what) + ": rank " + std::to_string(r) +
                       " is in neither group of the channel");
    }
  }

  // Collective wait keyed by an occurrence-suffixed token. Returns the
  // barrier payload once every expected rank has arrived.
  std::uint64_t barrier_wait(int r, const std::string& token, int expected,
                             std::uint64_t payload_if_first, const std::string& reason) {
    std::unique_lock lk(mu_);
    check_abort_locked();
    RankState& s = *ranks_[r];
    BarrierState& b = barriers_[token];
    if (b.expected == 0) {
      b.expected = expected;
      b.payload = payload_if_first;
    } else if (b.expected != expected) {
      throw ProtocolError("collective size mismatch at " + token);
    }
    if (b.complete) throw ProtocolError("collective " + token + " joined after completion");
    ++b.arrived;
    if (cfg_.time_mode == TimeMode::Wall) wall_sync_clock_locked(r);
    b.t_max = std::max(b.t_max, s.clock);
    if (b.arrived == b.expected) {
      b.complete = true;
      if (cfg_.time_mode == TimeMode::Wall) b.t_max = s.clock;
      if (b.t_max > s.clock) {
        record_locked(r, s.clock, b.t_max, "idle");
        s.clock = b.t_max;
      }
      if (cfg_.time_mode == TimeMode::Virtual) {
        yield_locked(r, lk);
      } else {
        wall_cv_.notify_all();
      }
      return b.payload;
    }
    if (cfg_.time_mode == TimeMode::Virtual) {
      Wait w;
      w.kind = Wait::Kind::Barrier;
      w.barrier = token;
      w.reason = reason;
      block_locked(r, std::move(w), lk);
    } else {
      wall_cv_.wait(lk, [&] { return b.complete || abort_; });
      check_abort_locked();
      wall_sync_clock_locked(r);
    }
    BarrierState& done = barriers_.at(token);
    if (done.t_max > s.clock) {
      record_locked(r, s.clock, done.t_max, "idle");
      s.clock = done.t_max;
    }
    return done.payload;
  }

  std::uint64_t channel_create(int r, const std::string& pg, const std::string& cg) {
    std::string base;
    std::uint64_t uid = 0;
    {
      std::unique_lock lk(mu_);
      check_abort_locked();
      if (!layout_.has_group(pg) || !layout_.has_group(cg))
        throw UsageError("create channel: unknown group id");
      if (pg == cg)
        throw UsageError("create channel: producer and consumer groups must differ");
      ChannelState probe{pg, cg, false};
      require_member_locked(r, probe, "create channel");
      base = "chan:" + pg + "->" + cg;
      int occ = occurrence_[{r, base}]++;
      base += "#" + std::to_string(occ);
      auto it = barriers_.find(base);
      if (it == barriers_.end() || it->second.expected == 0) {
        uid = next_channel_uid_++;
        channels_[uid] = ChannelState{pg, cg, false};
      }
    }
    std::uint64_t got = barrier_wait(
        r, base,
        static_cast<int>(layout_.members(pg).size() + layout_.members(cg).size()), uid,
        "channel create " + base);
    return got;
  }

  void channel_free(int r, std::uint64_t uid) {
    std::string token;
    int expected = 0;
    {
      std::unique_lock lk(mu_);
      check_abort_locked();
      ChannelState& ch = channel_ref_locked(uid, "free channel");
      require_member_locked(r, ch, "free channel");
      token = "free:" + std::to_string(uid);
      int occ = occurrence_[{r, token}]++;
      token += "#" + std::to_string(occ);
      expected = union_size_locked(ch);
    }
    barrier_wait(r, token, expected, 0, "channel free " + token);
    std::unique_lock lk(mu_);
    ChannelState& ch = channels_.at(uid);
    if (!ch.freed) {
      ch.freed = true;
      for (const auto& [suid, st] : streams_) {
        if (st.channel_uid != uid) continue;
        for (int c : layout_.members(ch.consumer_group)) {
          auto it = ports_.find(PortKey{c, false, suid, 0});
          if (it != ports_.end()) {
            undelivered_ += it->second.heap.size();
            ports_.erase(it);
          }
        }
      }
    }
  }

  ChannelState& channel_ref_locked(std::uint64_t uid, const char* what) {
    auto it = channels_.find(uid);
    if (it == channels_.end())
      throw UsageError(std::string(what) + ": unknown channel " + std::to_string(uid));
    if (it->second.freed)
      throw UsageError(std::string(what) + ": channel " + std::to_string(uid) +
                       " already freed");
    return it->second;
  }

  std::uint64_t stream_attach(int r, std::uint64_t channel_uid, const StreamElementType& type) {
    std::unique_lock lk(mu_);
    check_abort_locked();
    ChannelState& ch = channel_ref_locked(channel_uid, "attach stream");
    require_member_locked(r, ch, "attach stream");
    if (type.element_bytes == 0)
      throw UsageError("attach stream: element_bytes must be positive");
    if (!layouts_.count(type.layout_tag))
      throw UsageError("attach stream: layout tag '" + type.layout_tag +
                       "' was never registered");
    std::uint64_t occ = attach_occ_[{r, channel_uid}]++;
    if (occ >= kAttachSlots) throw UsageError("attach stream: too many attaches");
    std::uint64_t uid = channel_uid * kAttachSlots + occ;
    auto it = streams_.find(uid);
    if (it == streams_.end()) {
      streams_[uid] = StreamState{channel_uid, type};
    } else {
      const StreamElementType& have = it->second.type;
      if (have.element_bytes != type.element_bytes || have.layout_tag != type.layout_tag) {
        std::ostringstream os;
        os << "attach stream: rank " << r << " attached (" << type.element_bytes << ", "
           << type.layout_tag << ") but stream " << uid << " already has ("
           << have.element_bytes << ", " << have.layout_tag << ")";
        throw ProtocolError(os.str());
      }
    }
    return uid;
  }

  StreamState& stream_ref_locked(std::uint64_t uid, const char* what) {
    auto it = streams_.find(uid);
    if (it == streams_.end())
      throw UsageError(std::string(what) + ": unknown stream " + std::to_string(uid));
    auto ch = channels_.find(it->second.channel_uid);
    if (ch == channels_.end() || ch->second.freed)
      throw UsageError(std::string(what) + ": stream " + std::to_string(uid) +
                       " used after its channel was freed");
    return it->second;
  }

  void stream_send(int r, int consumer, Envelope env) {
    std::unique_lock lk(mu_);
    check_abort_locked();
    StreamState& st = stream_ref_locked(env.stream_id, "stream send");
    const ChannelState& ch = channels_.at(st.channel_uid);
    if (!layout_.contains(ch.producer_group, r))
      throw UsageError("stream send: rank " + std::to_string(r) +
                       " is not in producer group '" + ch.producer_group + "'");
    if (!layout_.contains(ch.consumer_group, consumer))
      throw UsageError("stream send: destination rank " + std::to_string(consumer) +
                       " is not in consumer group '" + ch.consumer_group + "'");
    env.producer_rank = r;
    if (env.kind == Envelope::Kind::Data) {
      if (env.payload.size() != st.type.element_bytes)
        throw UsageError("stream send: payload size " + std::to_string(env.payload.size()) +
                         " does not match element size " +
                         std::to_string(st.type.element_bytes));
      WindowState& w = windows_[{env.stream_id, r}];
      if (cfg_.time_mode == TimeMode::Virtual) {
        while (w.in_flight >= cfg_.inflight_window) {
          Wait wt;
          wt.kind = Wait::Kind::Window;
          wt.win_stream = env.stream_id;
          wt.win_producer = r;
          wt.reason = "stream " + std::to_string(env.stream_id) + " send window";
          Ticks before = ranks_[r]->clock;
          block_locked(r, std::move(wt), lk);
          WindowState& w2 = windows_[{env.stream_id, r}];
          if (w2.last_free > ranks_[r]->clock) {
            record_locked(r, before, w2.last_free, "idle");
            ranks_[r]->clock = w2.last_free;
          }
        }
      } else {
        Ticks before = wall_now_ticks();
        wall_cv_.wait(lk, [&] {
          return abort_ || windows_[{env.stream_id, r}].in_flight < cfg_.inflight_window;
        });
        check_abort_locked();
        (void)before;
        wall_sync_clock_locked(r);
      }
      WindowState& wnd = windows_[{env.stream_id, r}];
      ++wnd.in_flight;
      max_in_flight_ = std::max(max_in_flight_, wnd.in_flight);
    }
    transmit_locked(r, PortKey{consumer, false, env.stream_id, 0}, std::move(env), lk);
  }

  std::optional<Envelope> stream_pop(int r, std::uint64_t uid, bool blocking) {
    {
      std::unique_lock lk(mu_);
      check_abort_locked();
      StreamState& st = stream_ref_locked(uid, "stream pop");
      const ChannelState& ch = channels_.at(st.channel_uid);
      if (!layout_.contains(ch.consumer_group, r))
        throw UsageError("stream pop: rank " + std::to_string(r) +
                         " is not in consumer group '" + ch.consumer_group + "'");
    }
    return pop_port(r, PortKey{r, false, uid, 0}, blocking, port_reason(false, uid, 0));
  }

  void raw_send(int r, int dest, std::uint64_t tag, std::vector<std::byte> payload) {
    std::unique_lock lk(mu_);
    check_abort_locked();
    if (dest < 0 || dest >= P_) throw UsageError("send: destination rank out of range");
    if (dest == r) throw UsageError("send: self-addressed message");
    Envelope env;
    env.stream_id = tag;
    env.producer_rank = r;
    env.kind = Envelope::Kind::Data;
    env.payload = std::move(payload);
    transmit_locked(r, PortKey{dest, true, static_cast<std::uint64_t>(r), tag},
                    std::move(env), lk);
  }

  std::vector<std::byte> raw_recv(int r, int src, std::uint64_t tag) {
    if (src < 0 || src >= P_) throw UsageError("recv: source rank out of range");
    if (src == r) throw UsageError("recv: self-addressed message");
    auto env = pop_port(r, PortKey{r, true, static_cast<std::uint64_t>(src), tag}, true,
                        port_reason(true, static_cast<std::uint64_t>(src), tag));
    return std::move(env->payload);
  }

  // ---- thread lifecycle ----

  void fail_locked(int r, const std::string& msg) {
    RankState& s = *ranks_[r];
    s.error = msg;
    s.exit_code = 1;
    s.st = St::Finished;
    if (failure_.empty()) failure_ = "rank " + std::to_string(r) + " failed: " + msg;
    abort_ = true;
    ++finished_count_;
    notify_everyone_locked();
  }

  void on_clean_exit_locked(int r) {
    RankState& s = *ranks_[r];
    s.st = St::Finished;
    ++finished_count_;
    if (finished_count_ == P_) {
      completion_cv_.notify_all();
      return;
    }
    if (cfg_.time_mode == TimeMode::Virtual && !abort_) schedule_next_locked();
  }

  void rank_thread(int r) {
    RankContext ctx(this, r);
    RankState& s = *ranks_[r];
    try {
      {
        std::unique_lock lk(mu_);
        if (cfg_.time_mode == TimeMode::Virtual) {
          park_locked(r, lk);
        } else {
          check_abort_locked();
          s.st = St::Running;
        }
      }
      program_(ctx);
      std::unique_lock lk(mu_);
      s.exit_code = 0;
      on_clean_exit_locked(r);
    } catch (const AbortRun&) {
      std::unique_lock lk(mu_);
      s.exit_code = s.deadlocked ? 3 : 2;
      s.st = St::Finished;
      ++finished_count_;
      if (finished_count_ == P_) completion_cv_.notify_all();
    } catch (const std::exception& e) {
      std::unique_lock lk(mu_);
      fail_locked(r, e.what());
    } catch (...) {
      std::unique_lock lk(mu_);
      fail_locked(r, "unknown exception");
    }
  }

  // ---- members ----

  GroupLayout layout_;
  SimConfig cfg_;
  RankProgram program_;
  int P_ = 0;

  std::mutex mu_;
  std::condition_variable completion_cv_;
  std::condition_variable wall_cv_;
  std::vector<std::unique_ptr<RankState>> ranks_;
  bool abort_ = false;
  int finished_count_ = 0;
  std::string failure_;

  std::map<PortKey, Port> ports_;
  std::map<std::pair<std::uint64_t, int>, WindowState> windows_;
  std::map<std::string, BarrierState> barriers_;
  std::map<std::pair<int, std::string>, int> occurrence_;
  std::map<std::pair<int, std::uint64_t>, std::uint64_t> attach_occ_;
  std::map<std::uint64_t, ChannelState> channels_;
  std::map<std::uint64_t, StreamState> streams_;
  std::map<std::tuple<std::uint64_t, int, int>, std::uint64_t> pair_seq_expected_;
  std::set<std::string> layouts_;
  std::uint64_t next_channel_uid_ = 1;
  std::uint64_t order_counter_ = 0;
  std::uint64_t undelivered_ = 0;
  int max_in_flight_ = 0;
  Ticks max_t_end_ = 0;
  EventTrace trace_;
  std::chrono::steady_clock::time_point wall_start_ = std::chrono::steady_clock::now();
};

RunReport Runtime::execute() {
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(P_));
  for (int r = 0; r < P_; ++r) threads.emplace_back([this, r] { rank_thread(r); });

  {
    std::unique_lock lk(mu_);
    if (cfg_.time_mode == TimeMode::Virtual && finished_count_ < P_) schedule_next_locked();
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        std::chrono::duration<double>(cfg_.max_wall_seconds));
    bool done =
        completion_cv_.wait_until(lk, deadline, [&] { return finished_count_ == P_; });
    if (!done) {
      std::ostringstream os;
      os << "watchdog: run exceeded " << cfg_.max_wall_seconds << "s;";
      for (int r = 0; r < P_; ++r) {
        if (ranks_[r]->st == St::Blocked)
          os << " rank " << r << " waiting on " << ranks_[r]->wait.reason << ";";
      }
      if (failure_.empty()) failure_ = os.str();
      abort_ = true;
      notify_everyone_locked();
      completion_cv_.wait(lk, [&] { return finished_count_ == P_; });
    }
  }
  for (auto& t : threads) t.join();

  RunReport rep;
  rep.failure = failure_;
  rep.exit_status.resize(static_cast<std::size_t>(P_));
  rep.rank_errors.resize(static_cast<std::size_t>(P_));
  rep.totals.resize(static_cast<std::size_t>(P_));
  for (int r = 0; r < P_; ++r) {
    rep.exit_status[static_cast<std::size_t>(r)] = ranks_[r]->exit_code;
    rep.rank_errors[static_cast<std::size_t>(r)] = ranks_[r]->error;
    rep.totals[static_cast<std::size_t>(r)] = ranks_[r]->totals;
  }
  rep.makespan_us = ticks_to_us(max_t_end_);
  rep.undelivered_envelopes = undelivered_;
  rep.max_in_flight = max_in_flight_;
  for (const auto& [key, port] : ports_) rep.undelivered_envelopes += port.heap.size();
  rep.trace = std::move(trace_);
  return rep;
}

// ---- RankContext forwarding ----

int RankContext::world_size() const noexcept { return rt_->P_; }
const GroupLayout& RankContext::layout() const noexcept { return rt_->layout_; }
const SimConfig& RankContext::config() const noexcept { return rt_->cfg_; }
const std::string& RankContext::group() const { return rt_->ranks_[rank_]->group; }

double RankContext::now_us() const {
  if (rt_->cfg_.time_mode == TimeMode::Wall) return ticks_to_us(rt_->wall_now_ticks());
  std::unique_lock lk(rt_->mu_);
  return ticks_to_us(rt_->ranks_[rank_]->clock);
}

double RankContext::work(double cost_us, std::string_view label) {
  return rt_->do_work(rank_, cost_us, label, false);
}
double RankContext::io_work(double cost_us) { return rt_->do_work(rank_, cost_us, "", true); }

std::uint64_t RankContext::rng_u64() {
  std::unique_lock lk(rt_->mu_);
  return rt_->ranks_[rank_]->rng.next_u64();
}
double RankContext::rng_unit() {
  std::unique_lock lk(rt_->mu_);
  return rt_->ranks_[rank_]->rng.next_unit();
}

void RankContext::send_message(int dest_rank, std::uint64_t tag,
                               std::vector<std::byte> payload) {
  rt_->raw_send(rank_, dest_rank, tag, std::move(payload));
}
std::vector<std::byte> RankContext::recv_message(int src_rank, std::uint64_t tag) {
  return rt_->raw_recv(rank_, src_rank, tag);
}

std::uint64_t RankContext::channel_create_sync(const std::string& producer_group,
                                               const std::string& consumer_group) {
  return rt_->channel_create(rank_, producer_group, consumer_group);
}
void RankContext::channel_free_sync(std::uint64_t channel_uid) {
  rt_->channel_free(rank_, channel_uid);
}
std::uint64_t RankContext::stream_attach(std::uint64_t channel_uid,
                                         const StreamElementType& type) {
  return rt_->stream_attach(rank_, channel_uid, type);
}

RankContext::ChannelGroups RankContext::channel_groups(std::uint64_t channel_uid) const {
  std::unique_lock lk(rt_->mu_);
  auto it = rt_->channels_.find(channel_uid);
  if (it == rt_->channels_.end())
    throw UsageError("channel_groups: unknown channel " + std::to_string(channel_uid));
  return {it->second.producer_group, it->second.consumer_group};
}

StreamElementType RankContext::stream_type(std::uint64_t stream_uid) const {
  std::unique_lock lk(rt_->mu_);
  auto it = rt_->streams_.find(stream_uid);
  if (it == rt_->streams_.end())
    throw UsageError("stream_type: unknown stream " + std::to_string(stream_uid));
  return it->second.type;
}

void RankContext::register_layout(const std::string& tag) {
  if (tag.empty()) throw UsageError("register_layout: empty tag");
  std::unique_lock lk(rt_->mu_);
  rt_->layouts_.insert(tag);
}
bool RankContext::layout_registered(const std::string& tag) const {
  std::unique_lock lk(rt_->mu_);
  return rt_->layouts_.count(tag) > 0;
}

void RankContext::stream_send(int consumer_rank, Envelope env) {
  rt_->stream_send(rank_, consumer_rank, std::move(env));
}
std::optional<Envelope> RankContext::stream_pop(std::uint64_t stream_uid, bool blocking) {
  return rt_->stream_pop(rank_, stream_uid, blocking);
}

RunReport run(const GroupLayout& layout, const SimConfig& config, const RankProgram& program) {
  config.validate();
  Runtime rt(layout, config, program);
  return rt.execute();
}

}  // namespace dstream::sim

#include "dstream/apps/particles.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <utility>

#include "dstream/bytes.hpp"
#include "dstream/errors.hpp"
#include "dstream/sim/collectives.hpp"
#include "dstream/stream.hpp"

namespace dstream::apps::particles {

namespace {

constexpr std::uint64_t kFwdTagBase = 0x9a0000;  ///< +direction, neighbor rounds
constexpr std::uint64_t kStopTag = 0x9a00f0;
constexpr std::uint64_t kCursorReqTag = 0x9a0100;
constexpr std::uint64_t kCursorGrantTag = 0x9a0101;
constexpr std::uint64_t kCountsTag = 0x9a0200;
constexpr std::uint64_t kWriterCountsTag = 0x9a0300;

/// Exchange payload slot: serialized record plus the running hop count.
constexpr std::size_t kHopSlotBytes = kRecordBytes + 4;

struct Coords {
  int x = 0, y = 0, z = 0;
};

Coords coords_of(const std::array<int, 3>& dims, int rank) {
  Coords c;
  c.x = rank % dims[0];
  c.y = (rank / dims[0]) % dims[1];
  c.z = rank / (dims[0] * dims[1]);
  return c;
}

int rank_of(const std::array<int, 3>& dims, const Coords& c) {
  return c.x + dims[0] * (c.y + dims[1] * c.z);
}

int axis_of(int dir) { return dir / 2; }
bool positive_dir(int dir) { return (dir & 1) != 0; }
int opposite(int dir) { return dir ^ 1; }

int coord_of(const Coords& c, int axis) { return axis == 0 ? c.x : axis == 1 ? c.y : c.z; }
void set_coord(Coords& c, int axis, int v) { (axis == 0 ? c.x : axis == 1 ? c.y : c.z) = v; }

int neighbor_rank(const std::array<int, 3>& dims, int rank, int dir) {
  Coords c = coords_of(dims, rank);
  int a = axis_of(dir);
  int d = dims[static_cast<std::size_t>(a)];
  int v = coord_of(c, a) + (positive_dir(dir) ? 1 : -1);
  set_coord(c, a, (v + d) % d);
  return rank_of(dims, c);
}

int cell_index(int extent, double v) {
  int i = static_cast<int>(v * extent);
  if (i < 0) i = 0;
  if (i >= extent) i = extent - 1;
  return i;
}

double wrap01(double v) {
  v -= std::floor(v);
  return v < 1.0 ? v : 0.0;
}

/// Next leg for a particle held at `from` and owned by `to`: the first
/// mismatched axis (x, then y, then z), moving along the shorter periodic
/// direction; ties go positive.
int forward_dir(const std::array<int, 3>& dims, const Coords& from, const Coords& to) {
  for (int a = 0; a < 3; ++a) {
    int d = dims[static_cast<std::size_t>(a)];
    int f = coord_of(from, a);
    int t = coord_of(to, a);
    if (f == t) continue;
    int fw = (t - f + d) % d;
    int bw = (f - t + d) % d;
    return 2 * a + (fw <= bw ? 1 : 0);
  }
  throw UsageError("forward_dir: particle is already at its owner");
}

/// Per-step forwarding rounds can never exceed the worst shortest-path leg
/// count on the torus; more means the routing is broken.
int round_limit(const std::array<int, 3>& dims) {
  int limit = 0;
  for (int a = 0; a < 3; ++a) limit += dims[static_cast<std::size_t>(a)] / 2;
  return limit;
}

void append_hop_slot(std::vector<std::byte>& out, const Particle& p) {
  append_record(out, p);
  bytes::put_u32(out, static_cast<std::uint32_t>(p.hops));
}

Particle parse_hop_slot(bytes::Reader& r) {
  std::vector<std::byte> rec = r.blob(kRecordBytes);
  Particle p = parse_record(rec.data());
  p.hops = static_cast<int>(r.u32());
  return p;
}

/// `pad_to` > 0 zero-fills up to a fixed stream element size; raw messages
/// stay tight.
std::vector<std::byte> pack_hop_batch(const std::vector<Particle>& batch, std::size_t pad_to = 0) {
  std::vector<std::byte> out;
  out.reserve(std::max(pad_to, 4 + batch.size() * kHopSlotBytes));
  bytes::put_u32(out, static_cast<std::uint32_t>(batch.size()));
  for (const Particle& p : batch) append_hop_slot(out, p);
  if (out.size() < pad_to) out.resize(pad_to);
  return out;
}

template <typename Fn>
void for_each_hop_slot(const std::vector<std::byte>& payload, Fn&& fn) {
  bytes::Reader r(payload);
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) fn(parse_hop_slot(r));
}

void write_sidecar(const std::string& path, std::uint64_t records) {
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  out << "records " << records << "\n";
  out << "schema " << kSchemaVersion << "\n";
  if (!out) throw IoError("sidecar write failed: " + sidecar_path(path), 0);
}

std::vector<std::byte> serialize_records(const std::vector<Particle>& particles) {
  std::vector<std::byte> out;
  out.reserve(particles.size() * kRecordBytes);
  for (const Particle& p : particles) append_record(out, p);
  return out;
}

void pwrite_all(int fd, const std::vector<std::byte>& buf, std::uint64_t offset,
                std::uint64_t already_written) {
  std::size_t done = 0;
  while (done < buf.size()) {
    ssize_t n = ::pwrite(fd, buf.data() + done, buf.size() - done,
                         static_cast<off_t>(offset + done));
    if (n <= 0)
      throw IoError(std::string("particle file write failed: ") + std::strerror(errno),
                    already_written + done);
    done += static_cast<std::size_t>(n);
  }
}

/// Everything one rank leaves behind for the host to assemble.
struct RankSlot {
  std::vector<Particle> particles;
  std::uint64_t exchanged = 0;
  int rounds = 0;
  std::uint64_t byte_offset = 0;
  std::uint64_t bytes_written = 0;
};

struct Plan {
  std::array<int, 3> dims;
  int compute = 0;
  int routers = 0;
  int writers = 0;
  int router_base() const { return compute; }
  int writer_base() const { return compute + routers; }
};

// --- exchange -------------------------------------------------------------

struct ExchangeOutcome {
  std::vector<Particle> delivered;
  int rounds = 0;
};

ExchangeOutcome neighbor_exchange(sim::RankContext& ctx, const ParticlesConfig& config,
                                  const Plan& plan, std::vector<Particle> exiting) {
  const auto& dims = plan.dims;
  const std::vector<int>& grid = ctx.layout().members("grid");
  const Coords home = coords_of(dims, ctx.rank());
  const int limit = round_limit(dims);

  ExchangeOutcome out;
  std::vector<Particle> held = std::move(exiting);
  std::array<std::vector<Particle>, 6> outbox;
  while (true) {
    std::uint64_t pending =
        sim::allreduce_sum(ctx, grid, static_cast<std::uint64_t>(held.size()), kStopTag);
    if (pending == 0) break;
    if (out.rounds == limit)
      throw ProtocolError("neighbor forwarding still has " + std::to_string(pending) +
                          " particles in flight after " + std::to_string(limit) + " rounds");
    ++out.rounds;

    if (!held.empty()) ctx.work(static_cast<double>(held.size()) * config.per_route_us, "forward");
    for (auto& box : outbox) box.clear();
    for (Particle& p : held) {
      int dest = owner_of(dims, p.x, p.y, p.z);
      int dir = forward_dir(dims, home, coords_of(dims, dest));
      p.hops += 1;
      outbox[static_cast<std::size_t>(dir)].push_back(p);
    }
    held.clear();

    for (int dir = 0; dir < 6; ++dir) {
      if (dims[static_cast<std::size_t>(axis_of(dir))] == 1) continue;
      ctx.send_message(neighbor_rank(dims, ctx.rank(), dir), kFwdTagBase + static_cast<std::uint64_t>(dir),
                       pack_hop_batch(outbox[static_cast<std::size_t>(dir)]));
    }
    for (int dir = 0; dir < 6; ++dir) {
      if (dims[static_cast<std::size_t>(axis_of(dir))] == 1) continue;
      std::vector<std::byte> payload = ctx.recv_message(
          neighbor_rank(dims, ctx.rank(), dir), kFwdTagBase + static_cast<std::uint64_t>(opposite(dir)));
      for_each_hop_slot(payload, [&](Particle p) {
        if (owner_of(dims, p.x, p.y, p.z) == ctx.rank())
          out.delivered.push_back(p);
        else
          held.push_back(p);
      });
    }
  }
  return out;
}

/// Compute side of the routed exchange for one step: streams departures to
/// the router that owns each destination, then drains the return stream.
std::vector<Particle> routed_exchange(sim::RankContext& ctx, const ParticlesConfig& config,
                                      const Plan& plan, Channel& to_router, Channel& from_router,
                                      const StreamElementType& type,
                                      std::vector<Particle> exiting) {
  std::vector<Particle> delivered;
  Stream out = attach(to_router, type);
  Stream back = attach(from_router, type, [&](const StreamElement& el) {
    for_each_hop_slot(el.payload, [&](Particle p) { delivered.push_back(p); });
  });

  if (!exiting.empty())
    ctx.work(static_cast<double>(exiting.size()) * config.per_route_us, "forward");
  std::vector<std::vector<Particle>> bucket(static_cast<std::size_t>(plan.routers));
  for (Particle& p : exiting) {
    int dest = owner_of(plan.dims, p.x, p.y, p.z);
    p.hops += 1;
    auto& b = bucket[static_cast<std::size_t>(dest % plan.routers)];
    b.push_back(p);
    if (static_cast<int>(b.size()) == config.batch_particles) {
      out.isend_to(plan.router_base() + dest % plan.routers, pack_hop_batch(b, type.element_bytes));
      b.clear();
    }
  }
  for (int i = 0; i < plan.routers; ++i)
    if (!bucket[static_cast<std::size_t>(i)].empty())
      out.isend_to(plan.router_base() + i,
                   pack_hop_batch(bucket[static_cast<std::size_t>(i)], type.element_bytes));
  out.terminate();
  back.operate();
  return delivered;
}

/// Router side of one step: re-bucket arrivals by owner and forward.
void router_step(sim::RankContext& ctx, const ParticlesConfig& config, const Plan& plan,
                 Channel& inbound, Channel& outbound, const StreamElementType& type) {
  const int my_index = ctx.rank() - plan.router_base();
  std::map<int, std::vector<Particle>> bucket;
  Stream ret = attach(outbound, type);
  Stream in = attach(inbound, type, [&](const StreamElement& el) {
    std::uint64_t n = 0;
    for_each_hop_slot(el.payload, [&](Particle p) {
      int dest = owner_of(plan.dims, p.x, p.y, p.z);
      if (dest % plan.routers != my_index)
        throw ProtocolError("router " + std::to_string(ctx.rank()) + " got a particle for rank " +
                            std::to_string(dest));
      p.hops += 1;
      auto& b = bucket[dest];
      b.push_back(p);
      if (static_cast<int>(b.size()) == config.batch_particles) {
        ret.isend_to(dest, pack_hop_batch(b, type.element_bytes));
        b.clear();
      }
      ++n;
    });
    if (n > 0) ctx.work(static_cast<double>(n) * config.per_route_us, "route");
  });
  in.operate();
  for (auto& [dest, b] : bucket)
    if (!b.empty()) ret.isend_to(dest, pack_hop_batch(b, type.element_bytes));
  ret.terminate();
}

// --- output ---------------------------------------------------------------

void shared_cursor_write(sim::RankContext& ctx, const ParticlesConfig& config, const Plan& plan,
                         int fd, const std::vector<Particle>& local, RankSlot& slot) {
  std::vector<std::byte> buf = serialize_records(local);
  const std::uint64_t mine = buf.size();
  if (ctx.rank() == 0) {
    slot.byte_offset = 0;
    ctx.io_work(static_cast<double>(mine) * config.io_us_per_byte);
    pwrite_all(fd, buf, 0, 0);
    std::uint64_t cursor = mine;
    for (int r = 1; r < plan.compute; ++r) {
      std::vector<std::byte> req_payload = ctx.recv_message(r, kCursorReqTag);
      bytes::Reader req(req_payload);
      std::uint64_t want = req.u64();
      std::vector<std::byte> grant;
      bytes::put_u64(grant, cursor);
      ctx.send_message(r, kCursorGrantTag, std::move(grant));
      cursor += want;
    }
    write_sidecar(config.out_path, cursor / kRecordBytes);
  } else {
    std::vector<std::byte> req;
    bytes::put_u64(req, mine);
    ctx.send_message(0, kCursorReqTag, std::move(req));
    std::vector<std::byte> grant_payload = ctx.recv_message(0, kCursorGrantTag);
    bytes::Reader grant(grant_payload);
    slot.byte_offset = grant.u64();
    ctx.io_work(static_cast<double>(mine) * config.io_us_per_byte);
    pwrite_all(fd, buf, slot.byte_offset, 0);
  }
  slot.bytes_written = mine;
}

void collective_write(sim::RankContext& ctx, const ParticlesConfig& config, const Plan& plan,
                      int fd, const std::vector<Particle>& local, RankSlot& slot) {
  const std::vector<int>& grid = ctx.layout().members("grid");
  std::vector<std::byte> mine;
  bytes::put_u64(mine, static_cast<std::uint64_t>(local.size()));
  std::vector<std::vector<std::byte>> counts = sim::allgather(ctx, grid, mine, kCountsTag);

  std::uint64_t offset = 0;
  std::uint64_t total = 0;
  for (int r = 0; r < plan.compute; ++r) {
    bytes::Reader reader(counts[static_cast<std::size_t>(r)]);
    std::uint64_t n = reader.u64();
    if (r < ctx.rank()) offset += n * kRecordBytes;
    total += n;
  }
  slot.byte_offset = offset;

  std::vector<std::byte> buf = serialize_records(local);
  ctx.io_work(static_cast<double>(buf.size()) * config.io_us_per_byte);
  pwrite_all(fd, buf, offset, 0);
  slot.bytes_written = buf.size();
  if (ctx.rank() == 0) write_sidecar(config.out_path, total);
}

void stream_records_out(const ParticlesConfig& config, Channel& to_writer,
                        const StreamElementType& type, const std::vector<Particle>& local) {
  Stream out = attach(to_writer, type);
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
  for (const Particle& p : local) {
    append_record(batch, p);
    if (static_cast<int>(++count) == config.batch_particles) flush();
  }
  if (count > 0) flush();
  out.terminate();
}

std::string writer_temp_path(const ParticlesConfig& config, int writer_index) {
  return config.out_path + ".w" + std::to_string(writer_index);
}

void writer_rank(sim::RankContext& ctx, const ParticlesConfig& config, const Plan& plan,
                 RankSlot& slot) {
  const StreamElementType type(4 + static_cast<std::size_t>(config.batch_particles) * kRecordBytes,
                               "part-io");
  Channel inbound = create_channel(ctx, "grid", "writer");
  const int my_index = ctx.rank() - plan.writer_base();
  const std::string temp = writer_temp_path(config, my_index);
  std::ofstream file(temp, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open writer buffer file: " + temp, 0);

  std::vector<std::byte> buffer;
  std::uint64_t flushed = 0;
  std::uint64_t records = 0;
  auto flush = [&] {
    if (buffer.empty()) return;
    ctx.io_work(static_cast<double>(buffer.size()) * config.io_us_per_byte);
    file.write(reinterpret_cast<const char*>(buffer.data()),
               static_cast<std::streamsize>(buffer.size()));
    if (!file) throw IoError("writer flush failed: " + temp, flushed);
    flushed += buffer.size();
    buffer.clear();
  };

  Stream in = attach(inbound, type, [&](const StreamElement& el) {
    bytes::Reader r(el.payload);
    std::uint32_t n = r.u32();
    records += n;
    std::vector<std::byte> body = r.blob(static_cast<std::size_t>(n) * kRecordBytes);
    buffer.insert(buffer.end(), body.begin(), body.end());
    if (buffer.size() >= config.writer_buffer_bytes) flush();
  });
  in.operate();
  flush();
  file.close();

  // Writer 0 stitches the per-writer files together in writer order once
  // everyone reports their final record count.
  std::vector<int> writers;
  for (int w = 0; w < plan.writers; ++w) writers.push_back(plan.writer_base() + w);
  std::vector<std::byte> mine;
  bytes::put_u64(mine, records);
  std::vector<std::vector<std::byte>> all = sim::gather(ctx, writers, 0, mine, kWriterCountsTag);

  if (my_index == 0) {
    std::uint64_t total_records = 0;
    for (auto& payload : all) {
      bytes::Reader r(payload);
      total_records += r.u64();
    }
    std::ofstream final_file(config.out_path, std::ios::binary | std::ios::trunc);
    if (!final_file) throw IoError("cannot open particle file: " + config.out_path, 0);
    std::uint64_t merged = 0;
    for (int w = 0; w < plan.writers; ++w) {
      std::string part = writer_temp_path(config, w);
      std::ifstream src(part, std::ios::binary);
      if (!src) throw IoError("missing writer buffer file: " + part, merged);
      std::vector<char> chunk((std::istreambuf_iterator<char>(src)),
                              std::istreambuf_iterator<char>());
      ctx.io_work(static_cast<double>(chunk.size()) * config.io_us_per_byte);
      final_file.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
      if (!final_file) throw IoError("merge write failed: " + config.out_path, merged);
      merged += chunk.size();
      src.close();
      std::remove(part.c_str());
    }
    final_file.close();
    if (merged != total_records * kRecordBytes)
      throw ProtocolError("merged " + std::to_string(merged) + " bytes but writers reported " +
                          std::to_string(total_records) + " records");
    write_sidecar(config.out_path, total_records);
    slot.bytes_written = merged;
  }
  free_channel(inbound);
}

// --- rank programs ----------------------------------------------------------

void compute_rank(sim::RankContext& ctx, const ParticlesConfig& config, const Plan& plan,
                  const std::vector<Particle>& initial, int fd, RankSlot& slot) {
  const StreamElementType ex_type(4 + static_cast<std::size_t>(config.batch_particles) * kHopSlotBytes,
                                  "part-ex");
  const StreamElementType io_type(4 + static_cast<std::size_t>(config.batch_particles) * kRecordBytes,
                                  "part-io");

  std::optional<Channel> to_router, from_router, to_writer;
  if (config.exchange == Exchange::Decoupled) {
    to_router = create_channel(ctx, "grid", "router");
    from_router = create_channel(ctx, "router", "grid");
  }
  if (config.io == Io::Decoupled) to_writer = create_channel(ctx, "grid", "writer");

  std::vector<Particle> local;
  for (const Particle& p : initial)
    if (owner_of(plan.dims, p.x, p.y, p.z) == ctx.rank()) local.push_back(p);

  for (int step = 0; step < config.steps; ++step) {
    if (!local.empty())
      ctx.work(static_cast<double>(local.size()) * config.per_particle_us, "move");
    auto [stayed, exiting] = move_and_partition(std::move(local), plan.dims, ctx.rank(), config.dt);
    local = std::move(stayed);
    slot.exchanged += exiting.size();

    if (config.exchange == Exchange::Neighbor) {
      ExchangeOutcome out = neighbor_exchange(ctx, config, plan, std::move(exiting));
      slot.rounds = std::max(slot.rounds, out.rounds);
      local.insert(local.end(), out.delivered.begin(), out.delivered.end());
    } else {
      std::vector<Particle> delivered =
          routed_exchange(ctx, config, plan, *to_router, *from_router, ex_type, std::move(exiting));
      local.insert(local.end(), delivered.begin(), delivered.end());
    }
  }

  if (to_router) free_channel(*to_router);
  if (from_router) free_channel(*from_router);

  switch (config.io) {
    case Io::None:
      break;
    case Io::Shared:
      shared_cursor_write(ctx, config, plan, fd, local, slot);
      break;
    case Io::Collective:
      collective_write(ctx, config, plan, fd, local, slot);
      break;
    case Io::Decoupled:
      stream_records_out(config, *to_writer, io_type, local);
      break;
  }
  if (to_writer) free_channel(*to_writer);

  slot.particles = std::move(local);
}

void router_rank(sim::RankContext& ctx, const ParticlesConfig& config, const Plan& plan) {
  const StreamElementType ex_type(4 + static_cast<std::size_t>(config.batch_particles) * kHopSlotBytes,
                                  "part-ex");
  Channel inbound = create_channel(ctx, "grid", "router");
  Channel outbound = create_channel(ctx, "router", "grid");
  for (int step = 0; step < config.steps; ++step)
    router_step(ctx, config, plan, inbound, outbound, ex_type);
  free_channel(inbound);
  free_channel(outbound);
}

}  // namespace

// --- serialization ----------------------------------------------------------

void append_record(std::vector<std::byte>& out, const Particle& p) {
  bytes::put_u64(out, p.id);
  bytes::put_f64(out, p.x);
  bytes::put_f64(out, p.y);
  bytes::put_f64(out, p.z);
  bytes::put_f64(out, p.vx);
  bytes::put_f64(out, p.vy);
  bytes::put_f64(out, p.vz);
}

Particle parse_record(const std::byte* data) {
  bytes::Reader r(data, kRecordBytes);
  Particle p;
  p.id = r.u64();
  p.x = r.f64();
  p.y = r.f64();
  p.z = r.f64();
  p.vx = r.f64();
  p.vy = r.f64();
  p.vz = r.f64();
  return p;
}

std::vector<Particle> read_particle_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open particle file: " + path, 0);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() % kRecordBytes != 0)
    throw ProtocolError("particle file " + path + " is " + std::to_string(raw.size()) +
                        " bytes, not a multiple of " + std::to_string(kRecordBytes));
  std::vector<Particle> out;
  out.reserve(raw.size() / kRecordBytes);
  for (std::size_t off = 0; off < raw.size(); off += kRecordBytes)
    out.push_back(parse_record(reinterpret_cast<const std::byte*>(raw.data() + off)));
  return out;
}

std::string sidecar_path(const std::string& path) { return path + ".meta"; }

// --- motion and ownership ---------------------------------------------------

void advance_particle(Particle& p, double dt) {
  p.x = wrap01(p.x + p.vx * dt);
  p.y = wrap01(p.y + p.vy * dt);
  p.z = wrap01(p.z + p.vz * dt);
}

int owner_of(const std::array<int, 3>& dims, double x, double y, double z) {
  Coords c{cell_index(dims[0], x), cell_index(dims[1], y), cell_index(dims[2], z)};
  return rank_of(dims, c);
}

std::pair<std::vector<Particle>, std::vector<Particle>> move_and_partition(
    std::vector<Particle> particles, const std::array<int, 3>& dims, int rank, double dt) {
  std::vector<Particle> stayed;
  std::vector<Particle> exiting;
  for (Particle& p : particles) {
    advance_particle(p, dt);
    (owner_of(dims, p.x, p.y, p.z) == rank ? stayed : exiting).push_back(p);
  }
  return {std::move(stayed), std::move(exiting)};
}

// --- configuration ------------------------------------------------------------

int ParticlesConfig::router_count() const {
  if (exchange != Exchange::Decoupled) return 0;
  if (router_ranks > 0) return router_ranks;
  return std::max(1, static_cast<int>(std::lround(alpha * compute_ranks())));
}

int ParticlesConfig::writer_count() const {
  if (io != Io::Decoupled) return 0;
  if (writer_ranks > 0) return writer_ranks;
  return std::max(1, static_cast<int>(std::lround(alpha * compute_ranks())));
}

int ParticlesConfig::total_ranks() const { return compute_ranks() + router_count() + writer_count(); }

void ParticlesConfig::validate() const {
  for (int a = 0; a < 3; ++a)
    if (dims[static_cast<std::size_t>(a)] < 1)
      throw ValidationError("dims must be positive in every axis");
  if (steps < 0) throw ValidationError("steps must be >= 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive and finite");
  if (!(vmax_cells > 0.0) || !std::isfinite(vmax_cells))
    throw ValidationError("vmax_cells must be positive and finite");
  if (!(skew >= 0.0 && skew < 1.0)) throw ValidationError("skew must be in [0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
  if (router_ranks < 0 || writer_ranks < 0)
    throw ValidationError("router/writer rank counts must be >= 0");
  if (batch_particles < 1) throw ValidationError("batch_particles must be >= 1");
  if (per_particle_us < 0.0 || per_route_us < 0.0 || io_us_per_byte < 0.0)
    throw ValidationError("per-unit costs must be >= 0");
  if (writer_buffer_bytes < kRecordBytes)
    throw ValidationError("writer_buffer_bytes must hold at least one record");
  if (io != Io::None && out_path.empty())
    throw ValidationError("out_path is required when output is enabled");
  sim.validate();
  if (sim.total_ranks != 0 && sim.total_ranks != total_ranks())
    throw ValidationError("sim.total_ranks disagrees with the derived rank count");
}

// --- swarm construction -------------------------------------------------------

std::vector<Particle> initial_particles(const ParticlesConfig& config) {
  config.validate();
  const int C = config.compute_ranks();
  const int allowed = std::max(1, static_cast<int>(std::llround((1.0 - config.skew) * C)));
  sim::Rng rng(sim::Rng::derive(config.seed, 0x70617274));

  std::vector<Particle> out;
  out.reserve(config.n_particles);
  for (std::uint64_t i = 0; i < config.n_particles; ++i) {
    Particle p;
    p.id = i;
    Coords c = coords_of(config.dims, static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(allowed)));
    p.x = (static_cast<double>(c.x) + rng.next_unit()) / config.dims[0];
    p.y = (static_cast<double>(c.y) + rng.next_unit()) / config.dims[1];
    p.z = (static_cast<double>(c.z) + rng.next_unit()) / config.dims[2];
    p.vx = (2.0 * rng.next_unit() - 1.0) * config.vmax_cells / config.dims[0];
    p.vy = (2.0 * rng.next_unit() - 1.0) * config.vmax_cells / config.dims[1];
    p.vz = (2.0 * rng.next_unit() - 1.0) * config.vmax_cells / config.dims[2];
    out.push_back(p);
  }
  return out;
}

std::vector<Particle> ballistic_reference(const ParticlesConfig& config) {
  std::vector<Particle> swarm = initial_particles(config);
  for (int step = 0; step < config.steps; ++step)
    for (Particle& p : swarm) advance_particle(p, config.dt);
  return swarm;
}

// --- driver ---------------------------------------------------------------------

ParticlesResult run_particles(const ParticlesConfig& config) {
  config.validate();
  Plan plan{config.dims, config.compute_ranks(), config.router_count(), config.writer_count()};

  std::vector<std::pair<std::string, std::vector<int>>> groups;
  std::vector<int> grid;
  for (int r = 0; r < plan.compute; ++r) grid.push_back(r);
  groups.emplace_back("grid", std::move(grid));
  if (plan.routers > 0) {
    std::vector<int> routers;
    for (int r = 0; r < plan.routers; ++r) routers.push_back(plan.router_base() + r);
    groups.emplace_back("router", std::move(routers));
  }
  if (plan.writers > 0) {
    std::vector<int> writers;
    for (int r = 0; r < plan.writers; ++r) writers.push_back(plan.writer_base() + r);
    groups.emplace_back("writer", std::move(writers));
  }
  GroupLayout layout(config.total_ranks(), std::move(groups));

  const std::vector<Particle> initial = initial_particles(config);

  int fd = -1;
  if (config.io == Io::Shared || config.io == Io::Collective) {
    fd = ::open(config.out_path.c_str(), O_CREAT | O_TRUNC | O_WRONLY, 0644);
    if (fd < 0) throw IoError("cannot create particle file: " + config.out_path, 0);
  }

  auto slots = std::make_shared<std::vector<RankSlot>>(static_cast<std::size_t>(config.total_ranks()));
  auto program = [&config, &plan, &initial, fd, slots](sim::RankContext& ctx) {
    if (!ctx.layout_registered("part-ex")) ctx.register_layout("part-ex");
    if (!ctx.layout_registered("part-io")) ctx.register_layout("part-io");
    auto& slot = (*slots)[static_cast<std::size_t>(ctx.rank())];
    if (ctx.rank() < plan.compute)
      compute_rank(ctx, config, plan, initial, fd, slot);
    else if (ctx.rank() < plan.writer_base())
      router_rank(ctx, config, plan);
    else
      writer_rank(ctx, config, plan, slot);
  };

  ParticlesResult result;
  result.report = sim::run(layout, config.sim, program);
  if (fd >= 0) ::close(fd);
  if (!result.report.ok()) return result;

  for (int r = 0; r < plan.compute; ++r) {
    RankSlot& slot = (*slots)[static_cast<std::size_t>(r)];
    result.exchanged_total += slot.exchanged;
    result.max_rounds = std::max(result.max_rounds, slot.rounds);
    for (const Particle& p : slot.particles) result.max_hops = std::max(result.max_hops, p.hops);
    result.final_particles.insert(result.final_particles.end(), slot.particles.begin(),
                                  slot.particles.end());
  }
  if (config.io == Io::Collective) {
    for (int r = 0; r < plan.compute; ++r)
      result.collective_offsets.push_back((*slots)[static_cast<std::size_t>(r)].byte_offset);
  }
  for (const RankSlot& slot : *slots) result.bytes_written += slot.bytes_written;
  return result;
}

}  // namespace dstream::apps::particles

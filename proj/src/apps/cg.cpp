#include "dstream/apps/cg.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>

#include "dstream/bytes.hpp"
#include "dstream/errors.hpp"
#include "dstream/group.hpp"
#include "dstream/sim/collectives.hpp"
#include "dstream/stream.hpp"

namespace dstream::apps::cg {
namespace {

constexpr std::uint64_t kFaceTagBase = 0xc60000;
constexpr std::uint64_t kDotTag = 0xc6d0;

int opposite(int dir) { return dir ^ 1; }

struct Box {
  int nx = 0, ny = 0, nz = 0;

  std::size_t idx(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(nx + 2) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(ny + 2) * k);
  }
  std::size_t volume() const {
    return static_cast<std::size_t>(nx + 2) * static_cast<std::size_t>(ny + 2) *
           static_cast<std::size_t>(nz + 2);
  }
  std::size_t own_points() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  std::size_t interior_points() const {
    auto clamp0 = [](int v) { return static_cast<std::size_t>(v > 0 ? v : 0); };
    return clamp0(nx - 2) * clamp0(ny - 2) * clamp0(nz - 2);
  }
  int face_points(int dir) const {
    int axis = dir / 2;
    if (axis == 0) return ny * nz;
    if (axis == 1) return nx * nz;
    return nx * ny;
  }
};

struct Topo {
  std::array<int, 3> dims;
  Box box;

  int compute_ranks() const { return dims[0] * dims[1] * dims[2]; }
  std::array<int, 3> coords(int r) const {
    return {r % dims[0], (r / dims[0]) % dims[1], r / (dims[0] * dims[1])};
  }
  int rank_of(const std::array<int, 3>& c) const {
    return c[0] + dims[0] * (c[1] + dims[1] * c[2]);
  }
  int neighbor(int r, int dir) const {
    auto c = coords(r);
    int axis = dir / 2;
    c[axis] += (dir % 2) ? 1 : -1;
    if (c[axis] < 0 || c[axis] >= dims[axis]) return -1;
    return rank_of(c);
  }
  int neighbor_count(int r) const {
    int n = 0;
    for (int d = 0; d < 6; ++d) n += neighbor(r, d) >= 0 ? 1 : 0;
    return n;
  }
  int max_face_points() const {
    return std::max({box.face_points(0), box.face_points(2), box.face_points(4)});
  }
};

struct Coeffs {
  double cx = 0.0, cy = 0.0, cz = 0.0;  ///< 1/h^2 per axis
  double hx = 0.0, hy = 0.0, hz = 0.0;
};

Coeffs make_coeffs(const CgConfig& config) {
  Coeffs c;
  c.hx = 1.0 / (config.dims[0] * config.local[0] + 1);
  c.hy = 1.0 / (config.dims[1] * config.local[1] + 1);
  c.hz = 1.0 / (config.dims[2] * config.local[2] + 1);
  c.cx = 1.0 / (c.hx * c.hx);
  c.cy = 1.0 / (c.hy * c.hy);
  c.cz = 1.0 / (c.hz * c.hz);
  return c;
}

/// One row of A = -Laplacian (7-point, Dirichlet via zero ghosts).
inline double stencil_at(const double* p, std::size_t c, std::size_t sy, std::size_t sz,
                         const Coeffs& k) {
  return k.cx * (2.0 * p[c] - p[c - 1] - p[c + 1]) +
         k.cy * (2.0 * p[c] - p[c - sy] - p[c + sy]) +
         k.cz * (2.0 * p[c] - p[c - sz] - p[c + sz]);
}

void stencil_range(const Box& b, const Coeffs& k, const std::vector<double>& p,
                   std::vector<double>& ap, int lo) {
  const std::size_t sy = static_cast<std::size_t>(b.nx + 2);
  const std::size_t sz = sy * static_cast<std::size_t>(b.ny + 2);
  const double* pp = p.data();
  for (int kk = lo; kk <= b.nz + 1 - lo; ++kk) {
    for (int jj = lo; jj <= b.ny + 1 - lo; ++jj) {
      for (int ii = lo; ii <= b.nx + 1 - lo; ++ii) {
        ap[b.idx(ii, jj, kk)] = stencil_at(pp, b.idx(ii, jj, kk), sy, sz, k);
      }
    }
  }
}

void stencil_full(const Box& b, const Coeffs& k, const std::vector<double>& p,
                  std::vector<double>& ap) {
  stencil_range(b, k, p, ap, 1);
}

/// Points whose stencil never touches a ghost: 2 <= i <= n-1 per axis.
void stencil_interior(const Box& b, const Coeffs& k, const std::vector<double>& p,
                      std::vector<double>& ap) {
  stencil_range(b, k, p, ap, 2);
}

void stencil_boundary(const Box& b, const Coeffs& k, const std::vector<double>& p,
                      std::vector<double>& ap) {
  // Every own point except the ghost-free interior; the skip test mirrors
  // stencil_interior's bounds so the two partitions tile own_points exactly.
  const std::size_t sy = static_cast<std::size_t>(b.nx + 2);
  const std::size_t sz = sy * static_cast<std::size_t>(b.ny + 2);
  const double* pp = p.data();
  for (int kk = 1; kk <= b.nz; ++kk) {
    for (int jj = 1; jj <= b.ny; ++jj) {
      for (int ii = 1; ii <= b.nx; ++ii) {
        if (ii >= 2 && ii <= b.nx - 1 && jj >= 2 && jj <= b.ny - 1 && kk >= 2 &&
            kk <= b.nz - 1) {
          continue;
        }
        ap[b.idx(ii, jj, kk)] = stencil_at(pp, b.idx(ii, jj, kk), sy, sz, k);
      }
    }
  }
}

/// Fixed accumulation order (k, j, i ascending, i innermost).
double dot_local(const Box& b, const std::vector<double>& a, const std::vector<double>& c) {
  double sum = 0.0;
  for (int kk = 1; kk <= b.nz; ++kk) {
    for (int jj = 1; jj <= b.ny; ++jj) {
      for (int ii = 1; ii <= b.nx; ++ii) {
        sum += a[b.idx(ii, jj, kk)] * c[b.idx(ii, jj, kk)];
      }
    }
  }
  return sum;
}

/// Same fold order as the simulated reduction tree: node v folds v+mask for
/// mask = 1, 2, 4, ... ascending.
double tree_fold(std::vector<double> partials) {
  const int n = static_cast<int>(partials.size());
  for (int mask = 1; mask < n; mask <<= 1) {
    for (int v = 0; v + mask < n; v += 2 * mask) {
      partials[static_cast<std::size_t>(v)] += partials[static_cast<std::size_t>(v + mask)];
    }
  }
  return partials.empty() ? 0.0 : partials[0];
}

/// Boundary plane of `a` facing `dir`, in fixed (outer, inner) order.
void extract_plane(const Box& b, const std::vector<double>& a, int dir,
                   std::vector<double>& out) {
  out.clear();
  int axis = dir / 2;
  bool high = dir % 2;
  if (axis == 0) {
    int i = high ? b.nx : 1;
    for (int k = 1; k <= b.nz; ++k)
      for (int j = 1; j <= b.ny; ++j) out.push_back(a[b.idx(i, j, k)]);
  } else if (axis == 1) {
    int j = high ? b.ny : 1;
    for (int k = 1; k <= b.nz; ++k)
      for (int i = 1; i <= b.nx; ++i) out.push_back(a[b.idx(i, j, k)]);
  } else {
    int k = high ? b.nz : 1;
    for (int j = 1; j <= b.ny; ++j)
      for (int i = 1; i <= b.nx; ++i) out.push_back(a[b.idx(i, j, k)]);
  }
}

/// Writes a received plane into the ghost layer facing `dir`.
void write_ghost(const Box& b, std::vector<double>& a, int dir, const double* values) {
  int axis = dir / 2;
  bool high = dir % 2;
  std::size_t p = 0;
  if (axis == 0) {
    int i = high ? b.nx + 1 : 0;
    for (int k = 1; k <= b.nz; ++k)
      for (int j = 1; j <= b.ny; ++j) a[b.idx(i, j, k)] = values[p++];
  } else if (axis == 1) {
    int j = high ? b.ny + 1 : 0;
    for (int k = 1; k <= b.nz; ++k)
      for (int i = 1; i <= b.nx; ++i) a[b.idx(i, j, k)] = values[p++];
  } else {
    int k = high ? b.nz + 1 : 0;
    for (int j = 1; j <= b.ny; ++j)
      for (int i = 1; i <= b.nx; ++i) a[b.idx(i, j, k)] = values[p++];
  }
}

struct Fields {
  std::vector<double> x, r, p, ap, b;
};

void init_fields(const CgConfig& config, const Topo& topo, int rank, Fields& f) {
  const Box& box = topo.box;
  const Coeffs k = make_coeffs(config);
  f.x.assign(box.volume(), 0.0);
  f.r.assign(box.volume(), 0.0);
  f.p.assign(box.volume(), 0.0);
  f.ap.assign(box.volume(), 0.0);
  f.b.assign(box.volume(), 0.0);
  if (config.rhs == Rhs::ManufacturedSine) {
    auto c = topo.coords(rank);
    const double pi = std::numbers::pi;
    for (int kk = 1; kk <= box.nz; ++kk) {
      for (int jj = 1; jj <= box.ny; ++jj) {
        for (int ii = 1; ii <= box.nx; ++ii) {
          double x = (c[0] * box.nx + ii) * k.hx;
          double y = (c[1] * box.ny + jj) * k.hy;
          double z = (c[2] * box.nz + kk) * k.hz;
          f.b[box.idx(ii, jj, kk)] =
              3.0 * pi * pi * std::sin(pi * x) * std::sin(pi * y) * std::sin(pi * z);
        }
      }
    }
  }
  f.r = f.b;
  f.p = f.r;
}

double manufactured_error(const CgConfig& config, const Topo& topo, int rank,
                          const std::vector<double>& x) {
  if (config.rhs != Rhs::ManufacturedSine) return 0.0;
  const Box& box = topo.box;
  const Coeffs k = make_coeffs(config);
  auto c = topo.coords(rank);
  const double pi = std::numbers::pi;
  double err = 0.0;
  for (int kk = 1; kk <= box.nz; ++kk) {
    for (int jj = 1; jj <= box.ny; ++jj) {
      for (int ii = 1; ii <= box.nx; ++ii) {
        double gx = (c[0] * box.nx + ii) * k.hx;
        double gy = (c[1] * box.ny + jj) * k.hy;
        double gz = (c[2] * box.nz + kk) * k.hz;
        double exact = std::sin(pi * gx) * std::sin(pi * gy) * std::sin(pi * gz);
        err = std::max(err, std::abs(x[box.idx(ii, jj, kk)] - exact));
      }
    }
  }
  return err;
}

std::size_t face_element_bytes(const Topo& topo) {
  return 16 + static_cast<std::size_t>(topo.max_face_points()) * 8;
}

std::size_t agg_element_bytes(const Topo& topo) {
  return 4 + 6 * static_cast<std::size_t>(topo.max_face_points()) * 8;
}

struct CgSlot {
  std::vector<double> history;
  double max_error = 0.0;
};

/// Per-variant halo transport owned by one compute rank.
class HaloExchanger {
 public:
  HaloExchanger(sim::RankContext& ctx, const CgConfig& config, const Topo& topo)
      : ctx_(ctx), config_(config), topo_(topo), rank_(ctx.rank()) {
    plane_.reserve(static_cast<std::size_t>(topo.max_face_points()));
    if (config_.variant == Variant::Decoupled) {
      out_ch_ = std::make_unique<Channel>(create_channel(ctx_, "grid", "exchange"));
      back_ch_ = std::make_unique<Channel>(create_channel(ctx_, "exchange", "grid"));
    }
  }

  ~HaloExchanger() = default;

  void close() {
    if (out_ch_) {
      free_channel(*out_ch_);
      free_channel(*back_ch_);
    }
  }

  /// Fills the ghost layer of `p` and computes ap = A p, charging stencil
  /// work according to the variant's overlap structure.
  void exchange_and_apply(int iteration, Fields& f) {
    switch (config_.variant) {
      case Variant::Blocking: {
        send_faces(iteration, f.p);
        recv_faces(f.p);
        stencil_full(topo_.box, coeffs_, f.p, f.ap);
        ctx_.work(static_cast<double>(topo_.box.own_points()) * config_.per_point_us,
                  "stencil");
        break;
      }
      case Variant::NonBlocking: {
        send_faces(iteration, f.p);
        stencil_interior(topo_.box, coeffs_, f.p, f.ap);
        ctx_.work(static_cast<double>(topo_.box.interior_points()) * config_.per_point_us,
                  "stencil");
        recv_faces(f.p);
        stencil_boundary(topo_.box, coeffs_, f.p, f.ap);
        ctx_.work(static_cast<double>(topo_.box.own_points() - topo_.box.interior_points()) *
                      config_.per_point_us,
                  "stencil");
        break;
      }
      case Variant::Decoupled: {
        stream_faces(iteration, f);
        break;
      }
    }
  }

  void set_coeffs(const Coeffs& c) { coeffs_ = c; }

 private:
  void send_faces(int iteration, const std::vector<double>& p) {
    for (int d = 0; d < 6; ++d) {
      int nb = topo_.neighbor(rank_, d);
      if (nb < 0) continue;
      extract_plane(topo_.box, p, d, plane_);
      std::vector<std::byte> payload;
      payload.reserve(4 + plane_.size() * 8);
      bytes::put_u32(payload, static_cast<std::uint32_t>(iteration));
      for (double v : plane_) bytes::put_f64(payload, v);
      ctx_.send_message(nb, kFaceTagBase + static_cast<std::uint64_t>(d), std::move(payload));
    }
  }

  void recv_faces(std::vector<double>& p) {
    for (int d = 0; d < 6; ++d) {
      int nb = topo_.neighbor(rank_, d);
      if (nb < 0) continue;
      auto payload =
          ctx_.recv_message(nb, kFaceTagBase + static_cast<std::uint64_t>(opposite(d)));
      unpack_face(payload, d, p);
    }
  }

  void unpack_face(const std::vector<std::byte>& payload, int dir, std::vector<double>& p) {
    bytes::Reader r(payload);
    std::uint32_t iter = r.u32();
    if (iter != static_cast<std::uint32_t>(current_iteration_)) {
      throw ProtocolError("halo face from iteration " + std::to_string(iter) +
                          " applied at iteration " + std::to_string(current_iteration_));
    }
    int n = topo_.box.face_points(dir);
    std::vector<double> vals(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) vals[static_cast<std::size_t>(i)] = r.f64();
    write_ghost(topo_.box, p, dir, vals.data());
  }

 public:
  /// The blocking/non-blocking paths validate face iteration tags against
  /// this counter.
  void begin_iteration(int iteration) { current_iteration_ = iteration; }

 private:
  void stream_faces(int iteration, Fields& f) {
    const int E = config_.exchange_ranks;
    const int C = topo_.compute_ranks();
    StreamElementType face_type(face_element_bytes(topo_), "halo-face");
    StreamElementType agg_type(agg_element_bytes(topo_), "halo-agg");

    Stream out = attach(*out_ch_, face_type);
    bool applied = false;
    Stream back = attach(*back_ch_, agg_type, [&](const StreamElement& el) {
      bytes::Reader r(el.payload);
      std::uint32_t iter = r.u32();
      if (iter != static_cast<std::uint32_t>(iteration)) {
        throw ProtocolError("aggregated ghosts from iteration " + std::to_string(iter) +
                            " applied at iteration " + std::to_string(iteration));
      }
      const int max_face = topo_.max_face_points();
      for (int d = 0; d < 6; ++d) {
        auto raw = r.blob(static_cast<std::size_t>(max_face) * 8);
        if (topo_.neighbor(rank_, d) < 0) continue;
        std::vector<double> vals(static_cast<std::size_t>(topo_.box.face_points(d)));
        std::memcpy(vals.data(), raw.data(), vals.size() * 8);
        write_ghost(topo_.box, f.p, d, vals.data());
      }
      applied = true;
    });

    for (int d = 0; d < 6; ++d) {
      int dest = topo_.neighbor(rank_, d);
      if (dest < 0) continue;
      extract_plane(topo_.box, f.p, d, plane_);
      std::vector<std::byte> payload;
      payload.reserve(face_element_bytes(topo_));
      bytes::put_u32(payload, static_cast<std::uint32_t>(iteration));
      bytes::put_u32(payload, static_cast<std::uint32_t>(rank_));
      bytes::put_u32(payload, static_cast<std::uint32_t>(d));
      bytes::put_u32(payload, static_cast<std::uint32_t>(dest));
      for (double v : plane_) bytes::put_f64(payload, v);
      payload.resize(face_element_bytes(topo_));
      out.isend_to(C + dest % E, std::move(payload));
    }
    out.terminate();

    stencil_interior(topo_.box, coeffs_, f.p, f.ap);
    ctx_.work(static_cast<double>(topo_.box.interior_points()) * config_.per_point_us,
              "stencil");

    back.operate();
    if (!applied && topo_.neighbor_count(rank_) > 0) {
      throw ProtocolError("halo aggregation missing for rank " + std::to_string(rank_) +
                          " at iteration " + std::to_string(iteration));
    }
    stencil_boundary(topo_.box, coeffs_, f.p, f.ap);
    ctx_.work(static_cast<double>(topo_.box.own_points() - topo_.box.interior_points()) *
                  config_.per_point_us,
              "stencil");
  }

  sim::RankContext& ctx_;
  const CgConfig& config_;
  const Topo& topo_;
  int rank_;
  int current_iteration_ = 0;
  Coeffs coeffs_;
  std::vector<double> plane_;
  std::unique_ptr<Channel> out_ch_, back_ch_;
};

void run_compute_rank(sim::RankContext& ctx, const CgConfig& config, const Topo& topo,
                      std::vector<CgSlot>& slots) {
  const int rank = ctx.rank();
  const Box& box = topo.box;
  const Coeffs coeffs = make_coeffs(config);
  const int C = topo.compute_ranks();
  std::vector<int> members(static_cast<std::size_t>(C));
  for (int i = 0; i < C; ++i) members[static_cast<std::size_t>(i)] = i;

  Fields f;
  init_fields(config, topo, rank, f);

  HaloExchanger halo(ctx, config, topo);
  halo.set_coeffs(coeffs);

  auto gsum = [&](double local) {
    ctx.work(static_cast<double>(box.own_points()) * config.per_dot_us, "dot");
    return sim::allreduce_sum(ctx, members, local, kDotTag);
  };

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(config.iterations));
  double rho = gsum(dot_local(box, f.r, f.r));

  for (int it = 0; it < config.iterations; ++it) {
    halo.begin_iteration(it);
    halo.exchange_and_apply(it, f);

    double pap = gsum(dot_local(box, f.p, f.ap));
    double alpha = pap == 0.0 ? 0.0 : rho / pap;
    for (int kk = 1; kk <= box.nz; ++kk) {
      for (int jj = 1; jj <= box.ny; ++jj) {
        for (int ii = 1; ii <= box.nx; ++ii) {
          std::size_t c = box.idx(ii, jj, kk);
          f.x[c] += alpha * f.p[c];
          f.r[c] -= alpha * f.ap[c];
        }
      }
    }
    ctx.work(static_cast<double>(box.own_points()) * config.per_dot_us, "update");

    double rho_new = gsum(dot_local(box, f.r, f.r));
    if (!std::isfinite(rho_new)) {
      throw std::runtime_error("cg: non-finite residual at iteration " + std::to_string(it));
    }
    double beta = rho == 0.0 ? 0.0 : rho_new / rho;
    for (int kk = 1; kk <= box.nz; ++kk) {
      for (int jj = 1; jj <= box.ny; ++jj) {
        for (int ii = 1; ii <= box.nx; ++ii) {
          std::size_t c = box.idx(ii, jj, kk);
          f.p[c] = f.r[c] + beta * f.p[c];
        }
      }
    }
    rho = rho_new;
    history.push_back(rho);
  }

  halo.close();
  auto& slot = slots[static_cast<std::size_t>(rank)];
  slot.history = std::move(history);
  slot.max_error = manufactured_error(config, topo, rank, f.x);
}

void run_exchange_rank(sim::RankContext& ctx, const CgConfig& config, const Topo& topo) {
  const int E = config.exchange_ranks;
  const int C = topo.compute_ranks();
  const int my_index = ctx.rank() - C;
  const int max_face = topo.max_face_points();

  Channel in_ch = create_channel(ctx, "grid", "exchange");
  Channel back_ch = create_channel(ctx, "exchange", "grid");
  StreamElementType face_type(face_element_bytes(topo), "halo-face");
  StreamElementType agg_type(agg_element_bytes(topo), "halo-agg");

  // Compute ranks this exchange rank aggregates for, and how many planes
  // each expects per iteration.
  std::vector<int> owned;
  for (int c = 0; c < C; ++c) {
    if (c % E == my_index) owned.push_back(c);
  }

  struct Agg {
    int expected = 0;
    int received = 0;
    std::vector<double> planes;  ///< 6 * max_face slots
  };

  for (int it = 0; it < config.iterations; ++it) {
    std::map<int, Agg> pending;
    for (int c : owned) {
      Agg a;
      a.expected = topo.neighbor_count(c);
      a.planes.assign(static_cast<std::size_t>(6 * max_face), 0.0);
      if (a.expected > 0) pending.emplace(c, std::move(a));
    }

    Stream back = attach(back_ch, agg_type);
    Stream in = attach(in_ch, face_type, [&](const StreamElement& el) {
      bytes::Reader r(el.payload);
      std::uint32_t iter = r.u32();
      std::uint32_t owner = r.u32();
      std::uint32_t dir = r.u32();
      std::uint32_t dest = r.u32();
      if (iter != static_cast<std::uint32_t>(it)) {
        throw ProtocolError("halo face for iteration " + std::to_string(iter) +
                            " routed during iteration " + std::to_string(it));
      }
      auto node = pending.find(static_cast<int>(dest));
      if (node == pending.end()) {
        throw ProtocolError("halo face for rank " + std::to_string(dest) +
                            " routed to the wrong aggregator");
      }
      Agg& agg = node->second;
      int ghost_dir = opposite(static_cast<int>(dir));
      int n = topo.box.face_points(ghost_dir);
      for (int i = 0; i < n; ++i) {
        agg.planes[static_cast<std::size_t>(ghost_dir * max_face + i)] = r.f64();
      }
      ctx.work(static_cast<double>(n) * config.per_dot_us, "route");
      (void)owner;
      if (++agg.received == agg.expected) {
        std::vector<std::byte> payload;
        payload.reserve(agg_element_bytes(topo));
        bytes::put_u32(payload, iter);
        for (double v : agg.planes) bytes::put_f64(payload, v);
        back.isend_to(static_cast<int>(dest), std::move(payload));
        pending.erase(node);
      }
    });

    in.operate();
    if (!pending.empty()) {
      auto& [dest, agg] = *pending.begin();
      throw ProtocolError("halo aggregation incomplete: rank " + std::to_string(dest) +
                          " missing " + std::to_string(agg.expected - agg.received) +
                          " faces at iteration " + std::to_string(it));
    }
    back.terminate();
  }

  free_channel(in_ch);
  free_channel(back_ch);
}

}  // namespace

int CgConfig::total_ranks() const {
  return compute_ranks() + (variant == Variant::Decoupled ? exchange_ranks : 0);
}

void CgConfig::validate() const {
  for (int d : dims) {
    if (d < 1) throw ValidationError("process grid dimensions must be >= 1");
  }
  for (int n : local) {
    if (n < 2) throw ValidationError("local extents must be >= 2");
  }
  if (iterations < 1) throw ValidationError("iterations must be >= 1");
  if (variant == Variant::Decoupled && exchange_ranks < 1) {
    throw ValidationError("decoupled variant needs at least one exchange rank");
  }
  if (per_point_us < 0.0 || per_dot_us < 0.0) {
    throw ValidationError("per-point costs must be >= 0");
  }
  sim.validate();
}

CgResult run_cg(const CgConfig& config) {
  config.validate();
  Topo topo{config.dims, Box{config.local[0], config.local[1], config.local[2]}};
  const int C = topo.compute_ranks();

  GroupLayout layout = GroupLayout::single_group(C, "grid");
  if (config.variant == Variant::Decoupled) {
    std::vector<int> grid, exchange;
    for (int r = 0; r < C; ++r) grid.push_back(r);
    for (int r = C; r < config.total_ranks(); ++r) exchange.push_back(r);
    layout = GroupLayout(config.total_ranks(), {{"grid", grid}, {"exchange", exchange}});
  }

  auto slots = std::make_shared<std::vector<CgSlot>>(static_cast<std::size_t>(C));
  auto program = [&config, &topo, slots](sim::RankContext& ctx) {
    if (!ctx.layout_registered("halo-face")) ctx.register_layout("halo-face");
    if (!ctx.layout_registered("halo-agg")) ctx.register_layout("halo-agg");
    if (ctx.rank() < topo.compute_ranks()) {
      run_compute_rank(ctx, config, topo, *slots);
    } else {
      run_exchange_rank(ctx, config, topo);
    }
  };

  CgResult result;
  result.report = sim::run(layout, config.sim, program);
  result.residual_history = std::move((*slots)[0].history);
  for (const auto& slot : *slots) result.max_error = std::max(result.max_error, slot.max_error);
  return result;
}

SerialCgResult serial_reference(const CgConfig& config) {
  config.validate();
  Topo topo{config.dims, Box{config.local[0], config.local[1], config.local[2]}};
  const Box& box = topo.box;
  const Coeffs coeffs = make_coeffs(config);
  const int C = topo.compute_ranks();

  std::vector<Fields> blocks(static_cast<std::size_t>(C));
  for (int r = 0; r < C; ++r) init_fields(config, topo, r, blocks[static_cast<std::size_t>(r)]);

  auto exchange = [&](auto member) {
    std::vector<double> plane;
    for (int r = 0; r < C; ++r) {
      for (int d = 0; d < 6; ++d) {
        int nb = topo.neighbor(r, d);
        if (nb < 0) continue;
        extract_plane(box, blocks[static_cast<std::size_t>(nb)].*member, opposite(d), plane);
        write_ghost(box, blocks[static_cast<std::size_t>(r)].*member, d, plane.data());
      }
    }
  };

  auto gsum = [&](auto value_of) {
    std::vector<double> partials(static_cast<std::size_t>(C));
    for (int r = 0; r < C; ++r) partials[static_cast<std::size_t>(r)] = value_of(r);
    return tree_fold(std::move(partials));
  };

  SerialCgResult result;
  double rho = gsum([&](int r) {
    auto& f = blocks[static_cast<std::size_t>(r)];
    return dot_local(box, f.r, f.r);
  });

  for (int it = 0; it < config.iterations; ++it) {
    exchange(&Fields::p);
    for (auto& f : blocks) stencil_full(box, coeffs, f.p, f.ap);

    double pap = gsum([&](int r) {
      auto& f = blocks[static_cast<std::size_t>(r)];
      return dot_local(box, f.p, f.ap);
    });
    double alpha = pap == 0.0 ? 0.0 : rho / pap;
    for (auto& f : blocks) {
      for (int kk = 1; kk <= box.nz; ++kk) {
        for (int jj = 1; jj <= box.ny; ++jj) {
          for (int ii = 1; ii <= box.nx; ++ii) {
            std::size_t c = box.idx(ii, jj, kk);
            f.x[c] += alpha * f.p[c];
            f.r[c] -= alpha * f.ap[c];
          }
        }
      }
    }
    double rho_new = gsum([&](int r) {
      auto& f = blocks[static_cast<std::size_t>(r)];
      return dot_local(box, f.r, f.r);
    });
    if (!std::isfinite(rho_new)) {
      throw std::runtime_error("cg: non-finite residual at iteration " + std::to_string(it));
    }
    double beta = rho == 0.0 ? 0.0 : rho_new / rho;
    for (auto& f : blocks) {
      for (int kk = 1; kk <= box.nz; ++kk) {
        for (int jj = 1; jj <= box.ny; ++jj) {
          for (int ii = 1; ii <= box.nx; ++ii) {
            std::size_t c = box.idx(ii, jj, kk);
            f.p[c] = f.r[c] + beta * f.p[c];
          }
        }
      }
    }
    rho = rho_new;
    result.residual_history.push_back(rho);
  }

  for (int r = 0; r < C; ++r) {
    result.max_error = std::max(
        result.max_error, manufactured_error(config, topo, r, blocks[static_cast<std::size_t>(r)].x));
  }
  return result;
}

}  // namespace dstream::apps::cg

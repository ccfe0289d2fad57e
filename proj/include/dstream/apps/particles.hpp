#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dstream/sim/runtime.hpp"

// Ballistic particle mover on a periodic unit cube split across a Cartesian
// process grid. Exercises two particle-exchange schemes (hop-by-hop neighbor
// forwarding with a per-round global stop check, and decoupled two-hop
// routing through a router group) and three output schemes (serialized
// shared-cursor appends, two-phase collective writes at prefix-sum offsets,
// and a decoupled buffered writer group merged in writer order).
namespace dstream::apps::particles {

struct Particle {
  std::uint64_t id = 0;
  double x = 0.0, y = 0.0, z = 0.0;
  double vx = 0.0, vy = 0.0, vz = 0.0;
  int hops = 0;  ///< transport legs taken; instrumentation only, never serialized
};

/// Serialized record: id u64, then x y z vx vy vz as f64, little-endian.
inline constexpr std::size_t kRecordBytes = 56;
inline constexpr int kSchemaVersion = 1;

void append_record(std::vector<std::byte>& out, const Particle& p);
Particle parse_record(const std::byte* data);

/// Reads a raw record file written by any output variant.
std::vector<Particle> read_particle_file(const std::string& path);
/// Sidecar path (`<path>.meta`) holding record count and schema version.
std::string sidecar_path(const std::string& path);

enum class Exchange { Neighbor, Decoupled };
enum class Io { None, Shared, Collective, Decoupled };

struct ParticlesConfig {
  std::array<int, 3> dims = {2, 2, 2};
  std::uint64_t n_particles = 1000;
  int steps = 4;
  double dt = 1.0;
  Exchange exchange = Exchange::Neighbor;
  Io io = Io::None;
  double alpha = 0.125;    ///< router/writer share of the compute count
  int router_ranks = 0;    ///< exchange=decoupled; 0 = derive from alpha
  int writer_ranks = 0;    ///< io=decoupled; 0 = derive from alpha
  double skew = 0.0;       ///< fraction of compute ranks starting empty
  std::uint64_t seed = 1;
  double vmax_cells = 0.9;        ///< speed cap in grid cells per step
  double per_particle_us = 0.2;   ///< move cost per particle per step
  double per_route_us = 0.05;     ///< router cost per particle
  double io_us_per_byte = 0.002;  ///< virtual time per byte written
  int batch_particles = 64;       ///< particles per stream element
  std::size_t writer_buffer_bytes = 16u << 20;
  std::string out_path;  ///< particle file; required unless io = none
  sim::SimConfig sim;

  int compute_ranks() const { return dims[0] * dims[1] * dims[2]; }
  int router_count() const;
  int writer_count() const;
  int total_ranks() const;
  void validate() const;
};

struct ParticlesResult {
  std::vector<Particle> final_particles;  ///< concatenated rank-major
  std::uint64_t exchanged_total = 0;      ///< particles that left their rank
  int max_rounds = 0;  ///< neighbor variant: forwarding rounds in the worst step
  int max_hops = 0;    ///< transport legs of the most-travelled particle
  std::vector<std::uint64_t> collective_offsets;  ///< io=collective byte offsets
  std::uint64_t bytes_written = 0;
  sim::RunReport report;
};

ParticlesResult run_particles(const ParticlesConfig& config);

/// Deterministic initial swarm (positions respect `skew`, velocities capped
/// by `vmax_cells`); identical for every exchange/io variant.
std::vector<Particle> initial_particles(const ParticlesConfig& config);

/// Advances the swarm `steps` times with the same per-step arithmetic as the
/// simulated mover; final states are bitwise-comparable.
std::vector<Particle> ballistic_reference(const ParticlesConfig& config);

/// One step of motion with periodic wrap.
void advance_particle(Particle& p, double dt);

/// Rank owning a wrapped position.
int owner_of(const std::array<int, 3>& dims, double x, double y, double z);

/// Advance + partition into (stayed, exiting) relative to `rank`.
std::pair<std::vector<Particle>, std::vector<Particle>> move_and_partition(
    std::vector<Particle> particles, const std::array<int, 3>& dims, int rank, double dt);

}  // namespace dstream::apps::particles

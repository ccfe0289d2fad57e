#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dstream/sim/runtime.hpp"

// Conjugate gradient solve of the 3-D Poisson equation (7-point stencil,
// homogeneous Dirichlet box) on a Cartesian process grid, running a fixed
// iteration count. Three halo-exchange variants: blocking (face-by-face
// exchange, then the full stencil), non-blocking (all faces posted, interior
// stencil overlapped, boundary after), and decoupled (boundary planes
// streamed to a separate exchange group that returns one aggregated ghost
// element per rank). Global reductions use a fixed binomial tree, so all
// variants produce bitwise-identical iterates.
namespace dstream::apps::cg {

enum class Variant { Blocking, NonBlocking, Decoupled };

enum class Rhs {
  ManufacturedSine,  ///< f = 3 pi^2 sin(pi x) sin(pi y) sin(pi z)
  Zero,
};

struct CgConfig {
  std::array<int, 3> dims = {2, 2, 2};    ///< process grid
  std::array<int, 3> local = {24, 24, 24};  ///< points per rank per axis
  int iterations = 100;
  Variant variant = Variant::Blocking;
  int exchange_ranks = 1;  ///< decoupled only: aggregation group size
  Rhs rhs = Rhs::ManufacturedSine;
  double per_point_us = 0.02;  ///< stencil cost per local grid point
  double per_dot_us = 0.004;   ///< dot/axpy cost per local grid point
  sim::SimConfig sim;

  int compute_ranks() const { return dims[0] * dims[1] * dims[2]; }
  int total_ranks() const;
  void validate() const;
};

struct CgResult {
  std::vector<double> residual_history;  ///< global <r,r> after each iteration
  double max_error = 0.0;  ///< max |x - u_exact| (manufactured rhs only)
  sim::RunReport report;
};

CgResult run_cg(const CgConfig& config);

struct SerialCgResult {
  std::vector<double> residual_history;
  double max_error = 0.0;
};

/// Same decomposition, same stencil arithmetic, and same reduction-tree fold
/// order as the simulated variants, with exchanges done by direct copy; the
/// iterates are bitwise-comparable against any variant.
SerialCgResult serial_reference(const CgConfig& config);

}  // namespace dstream::apps::cg

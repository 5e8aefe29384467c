#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "entlab/cns_solver.hpp"
#include "entlab/collision.hpp"
#include "entlab/spatial_grid.hpp"

namespace entlab {

/// Fluctuation g of f = M(1 + eps g) on slab x velocity grid.
/// Column k of g is the x-profile at velocity node k.
struct KineticState {
  std::shared_ptr<const SpatialGrid> sg;
  std::shared_ptr<const VelocityGrid> vg;
  MatrixXd g;  // Nx x Nv
  double epsilon = 0.1;
  double time = 0.0;

  void check_positivity() const;  // f = M(1 + eps g) > 0 nodewise
};

struct KineticOptions {
  bool nonlinear = true;  // full moment-Maxwellian relaxation target vs linear Pg
  double c_cfl = 0.5;
  double c_stiff = 2.0;
};

/// Hydrodynamic moments of the fluctuation per cell.
struct CellMoments {
  ArrayXd rho_b;
  Vec3Field u_b;
  ArrayXd theta_b;
  ArrayXd e_b;  // <|v|^2 g>
};
CellMoments cell_moments(const MatrixXd& g, const VelocityGrid& vg);

/// Hard advective bound eps * dx / max|v1|; step() rejects dt above it.
double kinetic_max_dt(const KineticState& s);

/// dt policy: min(c_cfl * eps * dx / v1max, c_stiff * eps^2 / rate).
double kinetic_suggested_dt(const KineticState& s, const CollisionKernel& kernel,
                            const KineticOptions& opts);

/// One Strang step: exact spectral transport halves around the collision
/// substep. bgk: closed-form relaxation of the orthogonal part toward the
/// moment target (exact because the collision step freezes the moments).
/// maxwell_molecules: implicit linearized solve plus explicit Q source.
KineticState kinetic_step(const KineticState& s, double dt, const CollisionKernel& kernel,
                          const KineticOptions& opts = {});

struct KineticTrajectory {
  std::vector<KineticState> snapshots;
};

KineticTrajectory kinetic_run(const KineticState& initial, double t_end, const CollisionKernel& kernel,
                              double cadence, const KineticOptions& opts = {});

/// Well-prepared kinetic data: f^in equals the fluid-driven local Maxwellian
/// exactly, so H(f^in | M_eps^in) = 0 to rounding.
KineticState well_prepared_initial(const FluidState& fluid, std::shared_ptr<const VelocityGrid> vg);

/// g field of the local Maxwellian family (M_eps/M - 1)/eps on the grid.
MatrixXd maxwellian_fluctuation(const FluidState& fluid, const VelocityGrid& vg);

}  // namespace entlab

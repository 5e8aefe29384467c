#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "entlab/collision.hpp"
#include "entlab/spatial_grid.hpp"

namespace entlab {

/// Fluctuation fields of the low-Mach compressible system on the slab:
/// (rho, u, theta) = (1 + eps*rho_t, eps*u_t, 1 + eps*theta_t).
struct FluidState {
  std::shared_ptr<const SpatialGrid> sg;
  ArrayXd rho_t;
  Vec3Field u_t;
  ArrayXd theta_t;
  double epsilon = 0.1;
  double time = 0.0;

  void check_positivity() const;
};

/// Local viscosity/heat-conductivity law mu(rho,theta), kappa(rho,theta)
/// sampled by quadrature of the defining integrals on a small (rho,theta)
/// grid around (1,1) and bilinearly interpolated.
class CoefficientTable {
 public:
  CoefficientTable() = default;  // identity-free table: mu = kappa = 0
  CoefficientTable(const CollisionKernel& kernel, double half_width = 0.5, int samples = 5);

  double mu(double rho, double theta) const;
  double kappa(double rho, double theta) const;
  double mu_ref() const { return mu_ref_; }
  double kappa_ref() const { return kappa_ref_; }

 private:
  double lookup(const MatrixXd& tbl, double rho, double theta) const;
  double lo_ = 0.5, hi_ = 1.5;
  int n_ = 0;
  MatrixXd mu_tbl_, kappa_tbl_;
  double mu_ref_ = 1.0, kappa_ref_ = 1.0;
};

enum class HeatFluxForm {
  grad_theta,        // (5/3) (1/rho) div(kappa grad theta); what the entropy budget consumes
  grad_kappa_theta,  // sensitivity variant: flux = grad(kappa * theta_eps)/eps
};

struct CnsOptions {
  bool dissipation = true;       // mu/kappa terms on
  bool viscous_heating = true;   // the order-eps heating term in the theta equation
  bool local_coefficients = true;
  HeatFluxForm heat_flux = HeatFluxForm::grad_theta;
  double advective_cfl = 0.4;
  double diffusive_cfl = 0.35;
};

/// sigma(u) = grad u + grad u^T - (2/3)(div u) I per cell (3x3 each),
/// flattened to an Nx x 9 row-major-block layout.
std::vector<Matrix3d> stress_tensor(const Vec3Field& u, const SpatialGrid& sg);

struct FluidRhs {
  ArrayXd rho_t;
  Vec3Field u_t;
  ArrayXd theta_t;
};

/// Full fluctuation-form right-hand side (stiff acoustic block included).
FluidRhs cns_rhs(const FluidState& s, const CnsOptions& opts, const CoefficientTable& table);

/// The designated stiff block alone: (-(1/eps) div u, -(1/eps) grad(rho+theta),
/// -(2/3)(1/eps) div u).
FluidRhs cns_stiff_block(const FluidState& s);

/// One Strang step: exact Fourier integration of the acoustic block around an
/// explicit Heun step of the remaining terms.
FluidState cns_step(const FluidState& s, double dt, const CnsOptions& opts,
                    const CoefficientTable& table);

double cns_suggested_dt(const FluidState& s, const CnsOptions& opts, const CoefficientTable& table);

struct FluidTrajectory {
  std::vector<FluidState> snapshots;
};

FluidTrajectory cns_run(const FluidState& initial, double t_end, double cadence,
                        const CnsOptions& opts, const CoefficientTable& table);

/// One step of the incompressible Navier-Stokes-Fourier reference system with
/// Leray projection; u must be divergence-free within div_tol.
void insf_step(Vec3Field& u, ArrayXd& vartheta, double dt, double mu, double kappa,
               const SpatialGrid& sg, double div_tol = 1e-8);

/// Leray projection on the slab: removes the compressive part of u.
void leray_project(Vec3Field& u, const SpatialGrid& sg);

}  // namespace entlab

#pragma once

#include <Eigen/Dense>

#include "entlab/spatial_grid.hpp"
#include "entlab/velocity_grid.hpp"

namespace entlab {

/// (rho, u, theta) of a local Maxwellian; rho > 0 and theta > 0 enforced.
struct MaxwellianParams {
  double rho = 1.0;
  Vector3d u = Vector3d::Zero();
  double theta = 1.0;

  MaxwellianParams() = default;
  MaxwellianParams(double rho_, const Vector3d& u_, double theta_);
};

/// rho (2 pi theta)^{-3/2} exp(-|v-u|^2 / (2 theta)).
double maxwellian_eval(const MaxwellianParams& p, const Vector3d& v);

/// Nodewise evaluation on a velocity grid.
VectorXd maxwellian_on_grid(const MaxwellianParams& p, const VelocityGrid& grid);

/// Closed-form inversion of (mass, momentum, energy):
///   rho = mass, u = momentum/mass, theta = (energy/mass - |u|^2)/3.
/// Throws DegenerateMomentsError on non-positive mass or implied temperature.
MaxwellianParams from_raw_moments(const RawMoments& m);

/// A(V) = V (x) V - |V|^2/3 I   (symmetric, exactly traceless)
Matrix3d tensor_A(const Vector3d& V);
/// B(V) = V (|V|^2/2 - 5/2)     (odd: B(-V) = -B(V))
Vector3d tensor_B(const Vector3d& V);

/// Smooth positive parameter fields on the slab (values per cell).
struct ParamsField {
  ArrayXd rho;
  Eigen::Matrix<double, Eigen::Dynamic, 3> u;
  ArrayXd theta;
};

/// Right-hand side of the transport identity for log of a local Maxwellian:
/// the Euler-operator triple contracted with (1/rho, V/sqrt(theta),
/// (|V|^2/2 - 3/2)/theta) plus A(V):grad u + B(V).grad theta/sqrt(theta),
/// evaluated per (cell, velocity node). Spatial gradients are spectral.
///
/// Fields failing the spectral-tail smoothness probe are rejected with
/// NonSmoothFieldError rather than silently differentiated.
MatrixXd log_maxwellian_transport(const ParamsField& params, const SpatialGrid& sg,
                                  const VelocityGrid& vg, double tail_tol = 1e-6);

/// v . grad_x of log Maxwellian computed directly (spectral derivative of the
/// composed field, one x-profile per velocity node). Oracle partner of
/// log_maxwellian_transport.
MatrixXd log_maxwellian_transport_direct(const ParamsField& params, const SpatialGrid& sg,
                                         const VelocityGrid& vg);

/// Linearized transport identity about Maxwellian(1,0,1): for
/// g = rho + u.v + (|v|^2/2 - 3/2) theta returns
/// (div u, grad(rho+theta), (2/3) div u).(1, v, |v|^2/2-3/2)
///   + A(v):grad u + B(v).grad theta, per (cell, node).
MatrixXd linearized_transport(const ArrayXd& rho, const Eigen::Matrix<double, Eigen::Dynamic, 3>& u,
                              const ArrayXd& theta, const SpatialGrid& sg, const VelocityGrid& vg,
                              double tail_tol = 1e-6);

/// The hydrodynamic field g = rho + u.v + (|v|^2/2 - 3/2) theta itself.
MatrixXd hydrodynamic_field(const ArrayXd& rho, const Eigen::Matrix<double, Eigen::Dynamic, 3>& u,
                            const ArrayXd& theta, const SpatialGrid& sg, const VelocityGrid& vg);

}  // namespace entlab

#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <vector>

#include "entlab/errors.hpp"

namespace entlab {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;
using Vec3Field = Eigen::Matrix<double, Eigen::Dynamic, 3>;

enum class VelocityRule { gauss_hermite, uniform_trapezoid };

/// Product quadrature on the unit sphere: Gauss-Legendre in cos(polar),
/// midpoint in azimuth. Weights sum to 4*pi exactly.
struct SphereRule {
  Eigen::Matrix<double, Eigen::Dynamic, 3> nodes;  // unit vectors
  VectorXd weights;
  int n_polar = 0;
  int n_azimuth = 0;
};

SphereRule build_sphere_rule(int n_polar, int n_azimuth);

/// Tensor-product velocity grid with plain-dv quadrature weights and the
/// absolute Maxwellian M = Maxwellian(1,0,1) sampled at the nodes.
///
/// Brackets:
///   inner(f,g)          = sum_k w_k M_k f_k g_k           ~ int f g M dv
///   raw integrals       use w_k alone                     ~ int (.) dv
///   collision_bracket   = triple sum w M w1 M1 wsig b     ~ <<F>>
///
/// gauss_hermite absorbs the Gaussian weight exactly: inner reproduces all
/// Gaussian moments of per-axis degree <= 2n-1 to machine precision.
/// uniform_trapezoid is a symmetric cell-centered rule on [-R, R]^3; its
/// normalization error is reported against tol_norm, not hidden.
struct VelocityGrid {
  VelocityRule rule = VelocityRule::gauss_hermite;
  int points_per_axis = 0;
  double truncation_radius = 0.0;  // half-width of the velocity box
  double tol_norm = 1e-12;

  std::vector<double> axis;                        // shared 1D coordinates, ascending
  Eigen::Matrix<double, Eigen::Dynamic, 3> nodes;  // Nv x 3, k = (ix*n + iy)*n + iz
  VectorXd weights;                                // plain dv weights
  VectorXd maxwell_weights;                        // M at each node
  VectorXd wm;                                     // weights .* maxwell_weights

  SphereRule sphere;

  // Cached node coordinate fields and |v|^2.
  VectorXd v1, v2, v3, vsq;
  // Orthonormal basis of span{1, v, |v|^2} w.r.t. inner(.,.), rows = 5 basis fields.
  MatrixXd hydro_basis;      // 5 x Nv
  MatrixXd hydro_basis_wm;   // 5 x Nv, rows premultiplied by wm (for fast projections)

  int size() const { return static_cast<int>(nodes.rows()); }
  int node_index(int ix, int iy, int iz) const {
    const int n = points_per_axis;
    return (ix * n + iy) * n + iz;
  }
};

/// Grid construction. points_per_axis >= 4. truncation_radius is required
/// (and must be > 0) for the uniform rule and ignored for gauss_hermite.
/// tol_norm <= 0 picks the rule default (1e-12 gauss_hermite, 1e-6 uniform);
/// coarse uniform grids need a looser gate, e.g. 1e-2 for 8 points.
VelocityGrid build_grid(int points_per_axis, VelocityRule rule, double truncation_radius = 0.0,
                        int sphere_polar = 6, int sphere_azimuth = 12, double tol_norm = -1.0);

struct RawMoments {
  double mass = 0.0;
  Vector3d momentum = Vector3d::Zero();
  double energy = 0.0;  // int |v|^2 f dv
};

/// <f,g> = sum w M f g.
double inner(const VectorXd& f, const VectorXd& g, const VelocityGrid& grid);

/// Plain-dv moments of a number density f: int f {1, v, |v|^2} dv.
RawMoments raw_moments(const VectorXd& f, const VelocityGrid& grid);

/// <.,.>-orthogonal projection onto span{1, v, |v|^2}.
VectorXd project_hydro(const VectorXd& g, const VelocityGrid& grid);

/// g - project_hydro(g).
VectorXd project_ortho(const VectorXd& g, const VelocityGrid& grid);

/// <<F>> = sum_{k,l,m} w_k M_k w_l M_l wsig_m b * F(v_k, v_l, sigma_m).
/// Plain quadrature of an analytic integrand; no interpolation involved.
double collision_bracket(const std::function<double(const Vector3d&, const Vector3d&, const Vector3d&)>& F,
                         const VelocityGrid& grid, double kernel_b);

/// 1D Gauss-Hermite rule for weight exp(-x^2/2)/sqrt(2*pi) (Golub-Welsch).
/// Returned weights sum to 1.
void gauss_hermite_probabilists(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// 1D Gauss-Legendre rule on [-1, 1]; weights sum to 2.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace entlab

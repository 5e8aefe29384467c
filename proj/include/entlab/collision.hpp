#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <memory>
#include <mutex>

#include "entlab/maxwellian.hpp"
#include "entlab/velocity_grid.hpp"

namespace entlab {

enum class KernelMode { bgk, maxwell_molecules };

/// Conservative off-grid evaluation weights: 8 trilinear nodes plus a 3-node
/// second-difference correction that restores the |v|^2 moment. The stencil
/// reproduces 1, v and |v|^2 exactly, which keeps the five collision
/// invariants in the kernel of the discrete operators on any tensor grid.
struct EvalStencil {
  std::array<int, 11> idx{};
  std::array<double, 11> w{};
  int n = 0;
};

/// Builds the stencil for point p; returns false if p is outside the box.
bool make_eval_stencil(const VelocityGrid& grid, const Vector3d& p, EvalStencil& s);

inline double stencil_eval(const VectorXd& field, const EvalStencil& s) {
  double v = 0.0;
  for (int i = 0; i < s.n; ++i) v += s.w[static_cast<size_t>(i)] * field(s.idx[static_cast<size_t>(i)]);
  return v;
}

struct TransportCoefficients {
  double mu = 0.0;
  double kappa = 0.0;
  double solver_residual = 0.0;  // max over the A_hat/B_hat solves
};

struct CollisionKernel {
  KernelMode mode = KernelMode::bgk;
  double relaxation_rate = 1.0;  // bgk
  double b_const = 1.0;          // maxwell_molecules
  std::shared_ptr<const VelocityGrid> grid;

  struct Cache;
  std::shared_ptr<Cache> cache;

  const VelocityGrid& g() const { return *grid; }
};

CollisionKernel make_bgk_kernel(std::shared_ptr<const VelocityGrid> grid, double relaxation_rate);
CollisionKernel make_maxwell_kernel(std::shared_ptr<const VelocityGrid> grid, double b_const);

/// C(f,f) for a number density f (not a fluctuation).
///   bgk:  rate * (M_f - f), M_f the moment-matched Maxwellian.
///   mm:   conservative symmetrized quadrature; every elementary collision
///         contribution carries exactly zero mass/momentum/energy.
VectorXd collide(const VectorXd& f, const CollisionKernel& kernel);

/// Linearized operator on fluctuations. bgk: rate*(g - Pg). mm: Dirichlet-form
/// discretization <Lg,h> = 1/4 << (g+g1-g'-g'1)(h+h1-h'-h'1) >>; self-adjoint,
/// positive semidefinite, with the five invariants in its kernel exactly.
VectorXd linearized_L(const VectorXd& g, const CollisionKernel& kernel);

/// Q(f,g) = C(Mf, Mg)/M, the paper's (non-symmetrized) convention.
VectorXd bilinear_Q(const VectorXd& f, const VectorXd& g, const CollisionKernel& kernel);

/// (Q(f,g) + Q(g,f))/2.
VectorXd bilinear_Q_sym(const VectorXd& f, const VectorXd& g, const CollisionKernel& kernel);

/// Exact fluctuation-form collision right-hand side:
///   NC(g) = C(M(1+eps g)) / (eps M)  =  -L g + eps Q(g,g).
VectorXd fluctuation_collision(const VectorXd& g, double eps, const CollisionKernel& kernel);

/// The quadratic remainder NQ(g) = (NC(g) + L g)/eps. Equals Q(g,g) in
/// maxwell_molecules mode; in bgk mode it is the moment-Maxwellian expansion
/// remainder rate*((M_f - M)/(eps^2 M) - Pg/eps).
VectorXd collision_q_remainder(const VectorXd& g, double eps, const CollisionKernel& kernel);

/// Solves L h_hat = h for h in N^perp. bgk: h/rate. mm: conjugate gradients on
/// the assembled Dirichlet form with re-projection to N^perp each iteration
/// (tol 1e-10, max 10^4 iterations). Throws on non-orthogonal input or
/// non-convergence.
VectorXd solve_hat(const VectorXd& h, const CollisionKernel& kernel);

/// mu = (1/10) <A : A_hat>, kappa = (2/15) <B . B_hat> at (rho,theta) = (1,1).
TransportCoefficients transport_coefficients(const CollisionKernel& kernel);

/// A_hat component fields (columns 11,22,33,12,13,23) and B_hat (columns
/// 1,2,3) on the grid nodes. bgk: A/rate, B/rate. mm: cached solve_hat results.
const MatrixXd& a_hat_fields(const CollisionKernel& kernel);
const MatrixXd& b_hat_fields(const CollisionKernel& kernel);

/// Entropy dissipation D(f) >= 0.
///   mm:  1/4 << (G'G'1 - G G1) log(G'G'1 / (G G1)) >> with G = f/M.
///   bgk: rate * int (f - M_f)(log f - log M_f) dv, the BGK H-theorem
///        surrogate (the quadruple-integral form presupposes a binary kernel).
double entropy_dissipation(const VectorXd& f, const CollisionKernel& kernel);

/// Lemma-level diagnostics of the dissipation/q equivalence for f = M(1+eps g)
/// at one spatial cell (maxwell_molecules mode).
struct DissipationStats {
  double d_over_eps4 = 0.0;   // D(f)/eps^4
  double quarter_q2 = 0.0;    // (1/4) << q^2 >>
  double r11 = 0.0;           // (1/4) << -q^2 (P'+P)/2 + q (r3 - r4)/eps^2 >>
  double closure_defect = 0.0;
  double r3_mag = 0.0;        // << |r3| >> / eps^2  (cubic remainder size)
  double r4_mag = 0.0;
  double invariant_cancellation = 0.0;  // max_phi | << q (phi+phi1-phi'-phi'1) >> |
};
DissipationStats dissipation_stats(const VectorXd& g, double eps, const CollisionKernel& kernel);

/// << A_hat q >> and << B_hat q >> for the state's q_eps, computed with the
/// symmetrized kernel 1/4 (F + F1 - F' - F'1); plus << q^2 >>.
struct QBrackets {
  Matrix3d a_hat_q = Matrix3d::Zero();
  Vector3d b_hat_q = Vector3d::Zero();
  double q2 = 0.0;
};
QBrackets q_brackets(const VectorXd& g, double eps, const CollisionKernel& kernel);

/// BGL quadratic inequality slack for a batch of random bounded q fields:
///   slack(q) = (1/4)<<q^2>> - (1/(2 mu)) <<A_hat q>>:<<A_hat q>>
///                          - (2/(5 kappa)) <<B_hat q>>.<<B_hat q>>.
/// q fields are random combinations of a fixed bounded feature dictionary;
/// the A_hat/B_hat brackets use the symmetrized kernel.
struct BglReport {
  double min_slack = 0.0;
  VectorXd slacks;
};
BglReport bgl_random_slack(const CollisionKernel& kernel, int n_fields, std::uint64_t seed);

namespace detail {

struct TripleTerm {
  int k = 0, l = 0;
  double weight = 0.0;  // 2 * wm_k * wm_l * wsig * b  (unordered pair measure)
  Vector3d vk, vl, vp, vp1, sigma;
  const EvalStencil* s1 = nullptr;
  const EvalStencil* s2 = nullptr;
};

/// Iterates unordered node pairs (k < l) x sphere nodes whose post-collision
/// points stay inside the velocity box; diagonal pairs contribute exactly
/// zero to all Delta-based integrands and are skipped.
template <class Fn>
void for_each_collision_triple(const VelocityGrid& grid, double b, Fn&& fn) {
  const int nv = grid.size();
  const int ns = static_cast<int>(grid.sphere.nodes.rows());
  EvalStencil s1, s2;
  TripleTerm t;
  t.s1 = &s1;
  t.s2 = &s2;
  for (int k = 0; k < nv; ++k) {
    const Vector3d vk = grid.nodes.row(k);
    for (int l = k + 1; l < nv; ++l) {
      const Vector3d vl = grid.nodes.row(l);
      const Vector3d c = 0.5 * (vk + vl);
      const double r = 0.5 * (vk - vl).norm();
      const double wpair = 2.0 * grid.wm(k) * grid.wm(l) * b;
      for (int m = 0; m < ns; ++m) {
        const Vector3d sig = grid.sphere.nodes.row(m);
        const Vector3d vp = c + r * sig;
        const Vector3d vp1 = c - r * sig;
        if (!make_eval_stencil(grid, vp, s1)) continue;
        if (!make_eval_stencil(grid, vp1, s2)) continue;
        t.k = k;
        t.l = l;
        t.weight = wpair * grid.sphere.weights(m);
        t.vk = vk;
        t.vl = vl;
        t.vp = vp;
        t.vp1 = vp1;
        t.sigma = sig;
        fn(t);
      }
    }
  }
}

}  // namespace detail

/// Visits q_eps = (G'G'1 - G G1)/eps^2 at every quadrature triple.
template <class Fn>
void q_field_visit(const VectorXd& g, double eps, const CollisionKernel& kernel, Fn&& fn) {
  if (kernel.mode != KernelMode::maxwell_molecules)
    throw ConfigError("q_field_visit requires maxwell_molecules mode");
  const VelocityGrid& grid = kernel.g();
  detail::for_each_collision_triple(grid, kernel.b_const, [&](const detail::TripleTerm& t) {
    const double gp = stencil_eval(g, *t.s1);
    const double gp1 = stencil_eval(g, *t.s2);
    const double q = (gp + gp1 - g(t.k) - g(t.l)) / eps + (gp * gp1 - g(t.k) * g(t.l));
    fn(t, q);
  });
}

}  // namespace entlab

#include "entlab/boltzmann_solver.hpp"

#include <cmath>

namespace entlab {

void KineticState::check_positivity() const {
  const double mn = 1.0 + epsilon * g.minCoeff();
  if (!(mn > 0.0)) {
    Eigen::Index i, k;
    g.minCoeff(&i, &k);
    throw PositivityError("KineticState: f <= 0 at t=" + std::to_string(time) + ", cell " +
                          std::to_string(i) + ", node " + std::to_string(k));
  }
}

CellMoments cell_moments(const MatrixXd& g, const VelocityGrid& vg) {
  CellMoments m;
  m.rho_b = (g * vg.wm).array();
  m.u_b.resize(g.rows(), 3);
  for (int c = 0; c < 3; ++c) m.u_b.col(c) = g * vg.wm.cwiseProduct(vg.nodes.col(c));
  m.e_b = (g * vg.wm.cwiseProduct(vg.vsq)).array();
  m.theta_b = (m.e_b - 3.0 * m.rho_b) / 3.0;
  return m;
}

double kinetic_max_dt(const KineticState& s) {
  const double v1max = std::max(std::abs(s.vg->axis.front()), std::abs(s.vg->axis.back()));
  return s.epsilon * s.sg->dx() / v1max;
}

double kinetic_suggested_dt(const KineticState& s, const CollisionKernel& kernel,
                            const KineticOptions& opts) {
  double dt = opts.c_cfl * kinetic_max_dt(s);
  const double rate = (kernel.mode == KernelMode::bgk) ? kernel.relaxation_rate : 1.0;
  dt = std::min(dt, opts.c_stiff * s.epsilon * s.epsilon / rate);
  return dt;
}

namespace {

// Relaxation target (M_f - M)/(eps M) per cell, vectorized per velocity node.
MatrixXd relaxation_target(const KineticState& s, const CellMoments& m) {
  const VelocityGrid& vg = *s.vg;
  const int nx = s.sg->cells();
  const double eps = s.epsilon;
  ArrayXd rho_f(nx), theta_f(nx), log_pref(nx);
  Vec3Field u_f(nx, 3);
  for (int i = 0; i < nx; ++i) {
    const double mass = 1.0 + eps * m.rho_b(i);
    if (!(mass > 0.0)) throw DegenerateMomentsError("relaxation_target: mass <= 0");
    const Vector3d mom = eps * Vector3d(m.u_b.row(i));
    const double energy = 3.0 + eps * m.e_b(i);
    const Vector3d u = mom / mass;
    const double theta = (energy / mass - u.squaredNorm()) / 3.0;
    if (!(theta > 0.0))
      throw DegenerateMomentsError("relaxation_target: theta <= 0 at cell " + std::to_string(i));
    rho_f(i) = mass;
    theta_f(i) = theta;
    u_f.row(i) = u.transpose();
    log_pref(i) = std::log(mass) - 1.5 * std::log(theta);
  }
  MatrixXd h(nx, vg.size());
  for (int k = 0; k < vg.size(); ++k) {
    const Vector3d v = vg.nodes.row(k);
    const double vsq_half = 0.5 * vg.vsq(k);
    for (int i = 0; i < nx; ++i) {
      double r2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = v(c) - u_f(i, c);
        r2 += d * d;
      }
      const double dlog = log_pref(i) + vsq_half - r2 / (2.0 * theta_f(i));
      h(i, k) = std::expm1(dlog) / eps;
    }
  }
  return h;
}

// Projection Pg per cell as an Nx x Nv field.
MatrixXd project_cells(const MatrixXd& g, const VelocityGrid& vg) {
  // coefficients (Nx x 5) times basis (5 x Nv)
  return (g * vg.hydro_basis_wm.transpose()) * vg.hydro_basis;
}

void collision_substep_bgk(KineticState& s, double dt, const CollisionKernel& kernel,
                           const KineticOptions& opts) {
  const CellMoments m = cell_moments(s.g, *s.vg);
  const MatrixXd h = opts.nonlinear ? relaxation_target(s, m) : project_cells(s.g, *s.vg);
  const double decay = std::exp(-kernel.relaxation_rate * dt / (s.epsilon * s.epsilon));
  // Moments are invariant during relaxation, so the target is frozen: exact substep.
  s.g = h + decay * (s.g - h);
}

void collision_substep_mm(KineticState& s, double dt, const CollisionKernel& kernel,
                          const KineticOptions& opts) {
  // Implicit linearized part, explicit quadratic source.
  const VelocityGrid& vg = *s.vg;
  const int nv = vg.size();
  const double a = dt / (s.epsilon * s.epsilon);
  MatrixXd lhs = MatrixXd::Identity(nv, nv);
  {
    // L = diag(wm)^{-1} S
    const VectorXd inv_wm = vg.wm.cwiseInverse();
    VectorXd probe;
    // Assemble L columnwise through linearized_L on unit vectors is O(nv) passes;
    // use the cached Dirichlet matrix instead via solve-free application.
    // linearized_L is exposed only per field, so build L once here.
    MatrixXd L(nv, nv);
    for (int c = 0; c < nv; ++c) {
      probe = VectorXd::Unit(nv, c);
      L.col(c) = linearized_L(probe, kernel);
    }
    lhs += a * L;
  }
  Eigen::PartialPivLU<MatrixXd> lu(lhs);
  for (int i = 0; i < s.sg->cells(); ++i) {
    VectorXd gi = s.g.row(i).transpose();
    VectorXd rhs = gi;
    if (opts.nonlinear) rhs += (dt / s.epsilon) * bilinear_Q(gi, gi, kernel);
    s.g.row(i) = lu.solve(rhs).transpose();
  }
}

}  // namespace

KineticState kinetic_step(const KineticState& s, double dt, const CollisionKernel& kernel,
                          const KineticOptions& opts) {
  if (!(dt > 0.0)) throw CflError("kinetic_step: dt must be > 0");
  if (dt > kinetic_max_dt(s) * (1.0 + 1e-12))
    throw CflError("kinetic_step: dt " + std::to_string(dt) + " violates the advective CFL bound " +
                   std::to_string(kinetic_max_dt(s)));
  KineticState out = s;
  const VectorXd v1 = out.vg->nodes.col(0);
  out.sg->advect_columns(out.g, v1, 0.5 * dt / out.epsilon);
  if (kernel.mode == KernelMode::bgk)
    collision_substep_bgk(out, dt, kernel, opts);
  else
    collision_substep_mm(out, dt, kernel, opts);
  out.sg->advect_columns(out.g, v1, 0.5 * dt / out.epsilon);
  out.time = s.time + dt;
  out.check_positivity();
  return out;
}

KineticTrajectory kinetic_run(const KineticState& initial, double t_end, const CollisionKernel& kernel,
                              double cadence, const KineticOptions& opts) {
  if (t_end < 0.0) throw ConfigError("kinetic_run: t_end must be >= 0");
  KineticTrajectory traj;
  traj.snapshots.push_back(initial);
  if (t_end == 0.0) return traj;
  const int n_obs = std::max(1, static_cast<int>(std::ceil(t_end / cadence - 1e-12)));
  KineticState cur = initial;
  for (int o = 0; o < n_obs; ++o) {
    const double target = std::min(t_end, (o + 1) * cadence);
    const double interval = target - cur.time;
    if (interval <= 0.0) continue;
    const double dt0 = kinetic_suggested_dt(cur, kernel, opts);
    const int steps = std::max(1, static_cast<int>(std::ceil(interval / dt0 - 1e-12)));
    const double dt = interval / steps;
    for (int i = 0; i < steps; ++i) {
      try {
        cur = kinetic_step(cur, dt, kernel, opts);
      } catch (const PositivityError& e) {
        throw PositivityError(std::string(e.what()) + " (run aborted at t=" +
                              std::to_string(cur.time) + ")");
      }
    }
    traj.snapshots.push_back(cur);
  }
  return traj;
}

MatrixXd maxwellian_fluctuation(const FluidState& fluid, const VelocityGrid& vg) {
  const int nx = fluid.sg->cells();
  const double eps = fluid.epsilon;
  MatrixXd g(nx, vg.size());
  for (int i = 0; i < nx; ++i) {
    const double rho = 1.0 + eps * fluid.rho_t(i);
    const double theta = 1.0 + eps * fluid.theta_t(i);
    if (!(rho > 0.0) || !(theta > 0.0))
      throw PositivityError("maxwellian_fluctuation: invalid fluid state");
    const double lp = std::log(rho) - 1.5 * std::log(theta);
    for (int k = 0; k < vg.size(); ++k) {
      const Vector3d v = vg.nodes.row(k);
      double r2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = v(c) - eps * fluid.u_t(i, c);
        r2 += d * d;
      }
      const double dlog = lp + 0.5 * vg.vsq(k) - r2 / (2.0 * theta);
      g(i, k) = std::expm1(dlog) / eps;
    }
  }
  return g;
}

KineticState well_prepared_initial(const FluidState& fluid, std::shared_ptr<const VelocityGrid> vg) {
  KineticState s;
  s.sg = fluid.sg;
  s.vg = std::move(vg);
  s.epsilon = fluid.epsilon;
  s.time = fluid.time;
  s.g = maxwellian_fluctuation(fluid, *s.vg);
  s.check_positivity();
  return s;
}

}  // namespace entlab

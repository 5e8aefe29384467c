#include "entlab/cns_solver.hpp"

#include <cmath>

namespace entlab {

void FluidState::check_positivity() const {
  if (((1.0 + epsilon * rho_t) <= 0.0).any() || ((1.0 + epsilon * theta_t) <= 0.0).any())
    throw PositivityError("FluidState: rho_eps or theta_eps lost positivity at t=" +
                          std::to_string(time));
}

CoefficientTable::CoefficientTable(const CollisionKernel& kernel, double half_width, int samples) {
  lo_ = 1.0 - half_width;
  hi_ = 1.0 + half_width;
  n_ = samples;
  mu_tbl_.resize(n_, n_);
  kappa_tbl_.resize(n_, n_);
  const VelocityGrid& grid = kernel.g();
  const bool analytic = kernel.mode == KernelMode::bgk;
  const MatrixXd* ah = analytic ? nullptr : &a_hat_fields(kernel);
  const MatrixXd* bh = analytic ? nullptr : &b_hat_fields(kernel);
  for (int i = 0; i < n_; ++i) {
    const double rho = lo_ + (hi_ - lo_) * i / (n_ - 1);
    for (int j = 0; j < n_; ++j) {
      const double theta = lo_ + (hi_ - lo_) * j / (n_ - 1);
      const MaxwellianParams p(rho, Vector3d::Zero(), theta);
      const VectorXd m_loc = maxwellian_on_grid(p, grid);
      const double inv_sqrt_theta = 1.0 / std::sqrt(theta);
      double mu_sum = 0.0, kappa_sum = 0.0;
      EvalStencil st;
      for (int k = 0; k < grid.size(); ++k) {
        const Vector3d V = Vector3d(grid.nodes.row(k)) * inv_sqrt_theta;
        const Matrix3d A = tensor_A(V);
        const Vector3d B = tensor_B(V);
        Matrix3d Ahat;
        Vector3d Bhat;
        if (analytic) {
          Ahat = A / kernel.relaxation_rate;
          Bhat = B / kernel.relaxation_rate;
        } else {
          if (!make_eval_stencil(grid, V, st)) continue;  // tail outside the box
          Eigen::Matrix<double, 6, 1> a6;
          for (int c = 0; c < 6; ++c) a6(c) = stencil_eval(ah->col(c), st);
          Ahat << a6(0), a6(3), a6(4), a6(3), a6(1), a6(5), a6(4), a6(5), a6(2);
          for (int c = 0; c < 3; ++c) Bhat(c) = stencil_eval(bh->col(c), st);
        }
        const double w = grid.weights(k) * m_loc(k);
        mu_sum += w * (A.array() * Ahat.array()).sum();
        kappa_sum += w * B.dot(Bhat);
      }
      mu_tbl_(i, j) = mu_sum / 10.0;
      kappa_tbl_(i, j) = 2.0 * kappa_sum / 15.0;
    }
  }
  mu_ref_ = mu(1.0, 1.0);
  kappa_ref_ = kappa(1.0, 1.0);
}

double CoefficientTable::lookup(const MatrixXd& tbl, double rho, double theta) const {
  if (n_ == 0) return 0.0;
  const double sx = std::clamp((rho - lo_) / (hi_ - lo_), 0.0, 1.0) * (n_ - 1);
  const double sy = std::clamp((theta - lo_) / (hi_ - lo_), 0.0, 1.0) * (n_ - 1);
  const int i = std::min(static_cast<int>(sx), n_ - 2);
  const int j = std::min(static_cast<int>(sy), n_ - 2);
  const double tx = sx - i, ty = sy - j;
  return (1 - tx) * (1 - ty) * tbl(i, j) + tx * (1 - ty) * tbl(i + 1, j) +
         (1 - tx) * ty * tbl(i, j + 1) + tx * ty * tbl(i + 1, j + 1);
}

double CoefficientTable::mu(double rho, double theta) const { return lookup(mu_tbl_, rho, theta); }
double CoefficientTable::kappa(double rho, double theta) const { return lookup(kappa_tbl_, rho, theta); }

std::vector<Matrix3d> stress_tensor(const Vec3Field& u, const SpatialGrid& sg) {
  const ArrayXd d1 = sg.deriv(u.col(0).array());
  const ArrayXd d2 = sg.deriv(u.col(1).array());
  const ArrayXd d3 = sg.deriv(u.col(2).array());
  std::vector<Matrix3d> out(static_cast<size_t>(sg.cells()));
  for (int i = 0; i < sg.cells(); ++i) {
    Matrix3d s = Matrix3d::Zero();
    s(0, 0) = (4.0 / 3.0) * d1(i);
    s(1, 1) = s(2, 2) = -(2.0 / 3.0) * d1(i);
    s(0, 1) = s(1, 0) = d2(i);
    s(0, 2) = s(2, 0) = d3(i);
    out[static_cast<size_t>(i)] = s;
  }
  return out;
}

namespace {

struct LocalCoefficients {
  ArrayXd mu, kappa;
};

LocalCoefficients local_coefficients(const FluidState& s, const CnsOptions& opts,
                                     const CoefficientTable& table) {
  LocalCoefficients lc;
  const int nx = s.sg->cells();
  lc.mu.resize(nx);
  lc.kappa.resize(nx);
  for (int i = 0; i < nx; ++i) {
    const double rho = 1.0 + s.epsilon * s.rho_t(i);
    const double theta = 1.0 + s.epsilon * s.theta_t(i);
    if (opts.local_coefficients) {
      lc.mu(i) = table.mu(rho, theta);
      lc.kappa(i) = table.kappa(rho, theta);
    } else {
      lc.mu(i) = table.mu_ref();
      lc.kappa(i) = table.kappa_ref();
    }
  }
  return lc;
}

FluidRhs rhs_nonstiff(const FluidState& s, const CnsOptions& opts, const CoefficientTable& table) {
  const SpatialGrid& sg = *s.sg;
  const double eps = s.epsilon;
  const ArrayXd rho = 1.0 + eps * s.rho_t;
  const ArrayXd u1 = s.u_t.col(0).array();
  const ArrayXd drho = sg.deriv(s.rho_t);
  const ArrayXd dtheta = sg.deriv(s.theta_t);
  ArrayXd du[3];
  for (int c = 0; c < 3; ++c) du[c] = sg.deriv(s.u_t.col(c).array());

  FluidRhs r;
  r.rho_t = -sg.deriv(s.rho_t * u1);
  r.u_t.resize(sg.cells(), 3);
  for (int c = 0; c < 3; ++c) r.u_t.col(c) = (-u1 * du[c]).matrix();
  // O(1) remainder of the pressure gradient after the stiff block is removed.
  r.u_t.col(0) += ((s.rho_t / rho) * (drho + dtheta)).matrix();
  r.u_t.col(0) -= (sg.deriv(s.rho_t * s.theta_t) / rho).matrix();
  r.theta_t = -u1 * dtheta - (2.0 / 3.0) * s.theta_t * du[0];

  if (opts.dissipation) {
    const LocalCoefficients lc = local_coefficients(s, opts, table);
    const std::vector<Matrix3d> sig = stress_tensor(s.u_t, sg);
    ArrayXd s11(sg.cells()), s21(sg.cells()), s31(sg.cells()), sigsig(sg.cells());
    for (int i = 0; i < sg.cells(); ++i) {
      const Matrix3d& m = sig[static_cast<size_t>(i)];
      s11(i) = m(0, 0);
      s21(i) = m(1, 0);
      s31(i) = m(2, 0);
      sigsig(i) = (m.array() * m.array()).sum();
    }
    r.u_t.col(0) += (sg.deriv(lc.mu * s11) / rho).matrix();
    r.u_t.col(1) += (sg.deriv(lc.mu * s21) / rho).matrix();
    r.u_t.col(2) += (sg.deriv(lc.mu * s31) / rho).matrix();

    if (opts.heat_flux == HeatFluxForm::grad_theta) {
      r.theta_t += (5.0 / 3.0) * sg.deriv(lc.kappa * dtheta) / rho;
    } else {
      // Sensitivity variant: flux = grad(kappa * theta_eps)/eps.
      const ArrayXd flux = sg.deriv(lc.kappa * (1.0 + eps * s.theta_t)) / eps;
      r.theta_t += (5.0 / 3.0) * sg.deriv(flux) / rho;
    }
    if (opts.viscous_heating) r.theta_t += eps * (1.0 / 3.0) * lc.mu * sigsig / rho;
  }
  return r;
}

void acoustic_substep(FluidState& s, double dt) {
  const SpatialGrid& sg = *s.sg;
  std::vector<std::complex<double>> rho_h, u1_h, theta_h;
  sg.forward(s.rho_t, rho_h);
  sg.forward(ArrayXd(s.u_t.col(0).array()), u1_h);
  sg.forward(s.theta_t, theta_h);
  const int nh = sg.cells() / 2;
  for (int m = 1; m <= nh; ++m) {
    const auto rh = rho_h[static_cast<size_t>(m)];
    const auto uh = u1_h[static_cast<size_t>(m)];
    const auto th = theta_h[static_cast<size_t>(m)];
    const std::complex<double> inv = th - (2.0 / 3.0) * rh;  // Riemann invariant of the block
    const std::complex<double> sm = rh + th;
    const double omega = std::sqrt(5.0 / 3.0) * m / s.epsilon;
    const std::complex<double> a(0.0, m / s.epsilon);
    const double cw = std::cos(omega * dt), sw = std::sin(omega * dt) / omega;
    const std::complex<double> s_new = sm * cw - (5.0 / 3.0) * a * uh * sw;
    const std::complex<double> u_new = uh * cw - a * sm * sw;
    const std::complex<double> rho_new = 0.6 * (s_new - inv);
    rho_h[static_cast<size_t>(m)] = rho_new;
    u1_h[static_cast<size_t>(m)] = u_new;
    theta_h[static_cast<size_t>(m)] = inv + (2.0 / 3.0) * rho_new;
  }
  ArrayXd tmp;
  sg.backward(rho_h, tmp);
  s.rho_t = tmp;
  sg.backward(u1_h, tmp);
  s.u_t.col(0) = tmp.matrix();
  sg.backward(theta_h, tmp);
  s.theta_t = tmp;
}

void axpy(FluidState& s, double a, const FluidRhs& r) {
  s.rho_t += a * r.rho_t;
  s.u_t += a * r.u_t;
  s.theta_t += a * r.theta_t;
}

}  // namespace

FluidRhs cns_stiff_block(const FluidState& s) {
  const SpatialGrid& sg = *s.sg;
  FluidRhs r;
  const ArrayXd du1 = sg.deriv(s.u_t.col(0).array());
  r.rho_t = -du1 / s.epsilon;
  r.u_t = Vec3Field::Zero(sg.cells(), 3);
  r.u_t.col(0) = (-(sg.deriv(s.rho_t + s.theta_t)) / s.epsilon).matrix();
  r.theta_t = -(2.0 / 3.0) * du1 / s.epsilon;
  return r;
}

FluidRhs cns_rhs(const FluidState& s, const CnsOptions& opts, const CoefficientTable& table) {
  s.check_positivity();
  FluidRhs r = rhs_nonstiff(s, opts, table);
  const FluidRhs stiff = cns_stiff_block(s);
  r.rho_t += stiff.rho_t;
  r.u_t += stiff.u_t;
  r.theta_t += stiff.theta_t;
  return r;
}

FluidState cns_step(const FluidState& s, double dt, const CnsOptions& opts,
                    const CoefficientTable& table) {
  if (!(dt > 0.0)) throw CflError("cns_step: dt must be > 0");
  s.check_positivity();
  FluidState cur = s;
  acoustic_substep(cur, 0.5 * dt);
  // Heun for the non-stiff terms.
  const FluidRhs k1 = rhs_nonstiff(cur, opts, table);
  FluidState mid = cur;
  axpy(mid, dt, k1);
  const FluidRhs k2 = rhs_nonstiff(mid, opts, table);
  axpy(cur, 0.5 * dt, k1);
  axpy(cur, 0.5 * dt, k2);
  acoustic_substep(cur, 0.5 * dt);
  cur.time = s.time + dt;
  cur.check_positivity();
  return cur;
}

double cns_suggested_dt(const FluidState& s, const CnsOptions& opts, const CoefficientTable& table) {
  const double dx = s.sg->dx();
  const double umax = s.u_t.col(0).array().abs().maxCoeff() + 1e-12;
  double dt = opts.advective_cfl * dx / umax;
  if (opts.dissipation) {
    const LocalCoefficients lc = local_coefficients(s, opts, table);
    const double nu = std::max(lc.mu.maxCoeff(), (5.0 / 3.0) * lc.kappa.maxCoeff()) + 1e-12;
    dt = std::min(dt, opts.diffusive_cfl * dx * dx / nu);
  }
  return dt;
}

FluidTrajectory cns_run(const FluidState& initial, double t_end, double cadence,
                        const CnsOptions& opts, const CoefficientTable& table) {
  if (t_end < 0.0) throw ConfigError("cns_run: t_end must be >= 0");
  FluidTrajectory traj;
  traj.snapshots.push_back(initial);
  if (t_end == 0.0) return traj;
  const int n_obs = std::max(1, static_cast<int>(std::ceil(t_end / cadence - 1e-12)));
  FluidState cur = initial;
  for (int o = 0; o < n_obs; ++o) {
    const double target = std::min(t_end, (o + 1) * cadence);
    const double interval = target - cur.time;
    if (interval <= 0.0) continue;
    const int steps = std::max(1, static_cast<int>(std::ceil(interval / cns_suggested_dt(cur, opts, table))));
    const double dt = interval / steps;
    for (int i = 0; i < steps; ++i) cur = cns_step(cur, dt, opts, table);
    traj.snapshots.push_back(cur);
  }
  return traj;
}

void leray_project(Vec3Field& u, const SpatialGrid& sg) {
  // div u = d(u1)/dx on the slab; the solenoidal part keeps only the mean of u1.
  u.col(0).setConstant(u.col(0).mean());
  (void)sg;
}

void insf_step(Vec3Field& u, ArrayXd& vartheta, double dt, double mu, double kappa,
               const SpatialGrid& sg, double div_tol) {
  const ArrayXd div = sg.deriv(u.col(0).array());
  if (div.abs().maxCoeff() > div_tol) throw ConfigError("insf_step: input is not divergence-free");
  auto rhs = [&](const Vec3Field& uu, const ArrayXd& th, Vec3Field& du, ArrayXd& dth) {
    const ArrayXd u1 = uu.col(0).array();
    du.resize(sg.cells(), 3);
    for (int c = 0; c < 3; ++c) {
      const ArrayXd g = sg.deriv(uu.col(c).array());
      du.col(c) = (-u1 * g + mu * sg.deriv(g)).matrix();
    }
    leray_project(du, sg);
    const ArrayXd gt = sg.deriv(th);
    dth = -u1 * gt + kappa * sg.deriv(gt);
  };
  Vec3Field k1u, k2u;
  ArrayXd k1t, k2t;
  rhs(u, vartheta, k1u, k1t);
  Vec3Field um = u + dt * k1u;
  ArrayXd tm = vartheta + dt * k1t;
  leray_project(um, sg);
  rhs(um, tm, k2u, k2t);
  u += 0.5 * dt * (k1u + k2u);
  vartheta += 0.5 * dt * (k1t + k2t);
  leray_project(u, sg);
}

}  // namespace entlab

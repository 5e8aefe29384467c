#include "entlab/entropy_diagnostics.hpp"

#include <cmath>

namespace entlab {

namespace {

// phi(y) = (1+y) log(1+y) - y  (integrand of relative entropy), stable near 0.
double phi_stable(double y) {
  if (std::abs(y) < 1e-3) {
    const double y2 = y * y;
    return y2 * (0.5 - y / 6.0 + y2 / 12.0 - y2 * y / 20.0);
  }
  return (1.0 + y) * std::log1p(y) - y;
}

// psi(z) = z - log(1+z) >= 0, stable near 0.
double psi_stable(double z) {
  if (std::abs(z) < 1e-3) {
    const double z2 = z * z;
    return z2 * (0.5 - z / 3.0 + z2 / 4.0 - z2 * z / 5.0);
  }
  return z - std::log1p(z);
}

MatrixXd a_fields(const VelocityGrid& g) {
  MatrixXd out(g.size(), 6);
  for (int k = 0; k < g.size(); ++k) {
    const Matrix3d A = tensor_A(g.nodes.row(k));
    out(k, 0) = A(0, 0);
    out(k, 1) = A(1, 1);
    out(k, 2) = A(2, 2);
    out(k, 3) = A(0, 1);
    out(k, 4) = A(0, 2);
    out(k, 5) = A(1, 2);
  }
  return out;
}

MatrixXd b_fields(const VelocityGrid& g) {
  MatrixXd out(g.size(), 3);
  for (int k = 0; k < g.size(); ++k) out.row(k) = tensor_B(g.nodes.row(k)).transpose();
  return out;
}

Matrix3d pack_sym6(const Eigen::Matrix<double, 6, 1>& c) {
  Matrix3d m;
  m << c(0), c(3), c(4), c(3), c(1), c(5), c(4), c(5), c(2);
  return m;
}

// <fields_c, g_row> for each cell and component: (Nx x Nv) * (Nv x m).
MatrixXd bracket_cells(const MatrixXd& g, const MatrixXd& fields, const VelocityGrid& vg) {
  return g * (vg.wm.asDiagonal() * fields);
}

// log(M_eps/M) at (cell, node) for fluid-driven Maxwellian parameters.
double dlog_maxwellian(const MaxwellianParams& p, const Vector3d& v, double vsq) {
  return std::log(p.rho) - 1.5 * std::log(p.theta) + 0.5 * vsq -
         (v - p.u).squaredNorm() / (2.0 * p.theta);
}

}  // namespace

double maxwellian_relative_entropy(const MaxwellianParams& p, const MaxwellianParams& q) {
  return p.rho * std::log(p.rho / q.rho) - 1.5 * p.rho * std::log(p.theta / q.theta) +
         1.5 * p.rho * (p.theta - q.theta) / q.theta + p.rho * (p.u - q.u).squaredNorm() / (2.0 * q.theta) -
         p.rho + q.rho;
}

double relative_entropy(const MatrixXd& f, const std::vector<MaxwellianParams>& target,
                        const SpatialGrid& sg, const VelocityGrid& vg) {
  if (f.rows() != sg.cells() || static_cast<int>(target.size()) != sg.cells())
    throw DimensionError("relative_entropy: shape mismatch");
  if ((f.array() <= 0.0).any()) throw PositivityError("relative_entropy: f must be positive");
  double total = 0.0;
  for (int i = 0; i < sg.cells(); ++i) {
    const VectorXd t = maxwellian_on_grid(target[static_cast<size_t>(i)], vg);
    double cell = 0.0;
    for (int k = 0; k < vg.size(); ++k)
      cell += vg.weights(k) * t(k) * phi_stable(f(i, k) / t(k) - 1.0);
    total += cell;
  }
  return sg.dx() * total;
}

std::vector<MaxwellianParams> fluid_maxwellians(const FluidState& fluid) {
  std::vector<MaxwellianParams> out;
  out.reserve(static_cast<size_t>(fluid.sg->cells()));
  for (int i = 0; i < fluid.sg->cells(); ++i)
    out.emplace_back(1.0 + fluid.epsilon * fluid.rho_t(i),
                     Vector3d(fluid.epsilon * fluid.u_t.row(i).transpose()),
                     1.0 + fluid.epsilon * fluid.theta_t(i));
  return out;
}

double relative_entropy_states(const KineticState& kin, const FluidState& fluid) {
  const VelocityGrid& vg = *kin.vg;
  const SpatialGrid& sg = *kin.sg;
  const auto targets = fluid_maxwellians(fluid);
  const double eps = kin.epsilon;
  double total = 0.0;
  for (int i = 0; i < sg.cells(); ++i) {
    const MaxwellianParams& p = targets[static_cast<size_t>(i)];
    double cell = 0.0;
    for (int k = 0; k < vg.size(); ++k) {
      const double dl = dlog_maxwellian(p, vg.nodes.row(k), vg.vsq(k));
      const double x = std::expm1(std::log1p(eps * kin.g(i, k)) - dl);  // f/M_eps - 1
      cell += vg.weights(k) * vg.maxwell_weights(k) * std::exp(dl) * phi_stable(x);
    }
    total += cell;
  }
  return sg.dx() * total;
}

double relative_entropy_absolute(const KineticState& kin) {
  const VelocityGrid& vg = *kin.vg;
  double total = 0.0;
  for (int i = 0; i < kin.sg->cells(); ++i) {
    double cell = 0.0;
    for (int k = 0; k < vg.size(); ++k)
      cell += vg.wm(k) * phi_stable(kin.epsilon * kin.g(i, k));
    total += cell;
  }
  return kin.sg->dx() * total;
}

FluctuationMoments fluctuation_moments(const MatrixXd& g, const VelocityGrid& vg) {
  FluctuationMoments m;
  m.rho_b = (g * vg.wm).array();
  m.u_b.resize(g.rows(), 3);
  for (int c = 0; c < 3; ++c) m.u_b.col(c) = g * vg.wm.cwiseProduct(vg.nodes.col(c));
  m.theta_b = ((g * vg.wm.cwiseProduct(vg.vsq)).array() - 3.0 * m.rho_b) / 3.0;
  return m;
}

std::pair<double, double> entropy_split(const MatrixXd& f, const std::vector<MaxwellianParams>& target,
                                        const SpatialGrid& sg, const VelocityGrid& vg) {
  if ((f.array() <= 0.0).any()) throw PositivityError("entropy_split: f must be positive");
  double h_kin = 0.0, h_fluid = 0.0;
  for (int i = 0; i < sg.cells(); ++i) {
    const VectorXd frow = f.row(i).transpose();
    const MaxwellianParams pf = from_raw_moments(raw_moments(frow, vg));
    const VectorXd mf = maxwellian_on_grid(pf, vg);
    const VectorXd mt = maxwellian_on_grid(target[static_cast<size_t>(i)], vg);
    double hk = 0.0, hf = 0.0;
    for (int k = 0; k < vg.size(); ++k) {
      hk += vg.weights(k) * mf(k) * phi_stable(frow(k) / mf(k) - 1.0);
      hf += vg.weights(k) * mt(k) * phi_stable(mf(k) / mt(k) - 1.0);
    }
    h_kin += hk;
    h_fluid += hf;
  }
  return {sg.dx() * h_kin, sg.dx() * h_fluid};
}

QuadraticApprox quadratic_entropy_approx(const FluctuationMoments& mb, const FluidState& fluid) {
  const SpatialGrid& sg = *fluid.sg;
  const double eps = fluid.epsilon;
  QuadraticApprox out;
  double quad = 0.0, r8 = 0.0, r9 = 0.0, r10 = 0.0, r1l = 0.0, r2l = 0.0, hf = 0.0;
  for (int i = 0; i < sg.cells(); ++i) {
    const double rho_f = 1.0 + eps * mb.rho_b(i);
    const Vector3d u_f = eps * Vector3d(mb.u_b.row(i).transpose()) / rho_f;
    const double energy = 3.0 + 3.0 * eps * (mb.theta_b(i) + mb.rho_b(i));
    const double theta_f = (energy / rho_f - u_f.squaredNorm()) / 3.0;
    if (!(rho_f > 0.0) || !(theta_f > 0.0))
      throw DegenerateMomentsError("quadratic_entropy_approx: degenerate moments");
    const double rho_e = 1.0 + eps * fluid.rho_t(i);
    const double theta_e = 1.0 + eps * fluid.theta_t(i);
    const Vector3d u_e = eps * fluid.u_t.row(i).transpose();

    const double d_rho = mb.rho_b(i) - fluid.rho_t(i);
    const double d_theta = mb.theta_b(i) - fluid.theta_t(i);
    const Vector3d d_u = Vector3d(mb.u_b.row(i).transpose()) - Vector3d(fluid.u_t.row(i).transpose());
    const double q_cell = 0.5 * (d_rho * d_rho + 1.5 * d_theta * d_theta + d_u.squaredNorm());
    quad += q_cell;

    // Exact pieces of the closed-form H(M_f|M_eps), each with its quadratic
    // leading term subtracted.
    const double y = (rho_f - rho_e) / rho_e;
    const double rho_part = rho_e * phi_stable(y) / (eps * eps);
    r8 += rho_part - 0.5 * d_rho * d_rho;
    const double z = (theta_f - theta_e) / theta_e;
    const double theta_part = 1.5 * rho_f * psi_stable(z) / (eps * eps);
    r9 += theta_part - 0.75 * d_theta * d_theta;
    const double u_part = rho_f * (u_f - u_e).squaredNorm() / (2.0 * theta_e * eps * eps);
    r10 += u_part - 0.5 * d_u.squaredNorm();
    hf += rho_part + theta_part + u_part;

    const Vector3d r1 = (u_f - eps * Vector3d(mb.u_b.row(i).transpose())) / (eps * eps);
    const double r2 = (theta_f - 1.0 - eps * mb.theta_b(i)) / (eps * eps);
    r1l += r1.norm();
    r2l += std::abs(r2);
  }
  const double dx = sg.dx();
  out.quadratic = dx * quad;
  out.r8 = dx * r8;
  out.r9 = dx * r9;
  out.r10 = dx * r10;
  out.h_fluid_over_eps2 = dx * hf;
  out.r1_l1 = dx * r1l;
  out.r2_l1 = dx * r2l;
  return out;
}

MomentFluxResult moment_flux_expansions(const KineticState& kin, const FluidState& fluid) {
  const VelocityGrid& vg = *kin.vg;
  const SpatialGrid& sg = *kin.sg;
  const int nx = sg.cells();
  const double eps = kin.epsilon;
  MomentFluxResult out;
  out.v_direct.resize(nx, 3);
  out.v_closed.resize(nx, 3);
  out.e_direct.resize(nx);
  out.e_closed.resize(nx);
  out.a_direct.resize(static_cast<size_t>(nx));
  out.a_closed.resize(static_cast<size_t>(nx));
  out.b_direct.resize(nx, 3);
  out.b_closed.resize(nx, 3);

  const FluctuationMoments mb = fluctuation_moments(kin.g, vg);
  const MatrixXd ag = bracket_cells(kin.g, a_fields(vg), vg);  // <A_c, g> per cell
  const MatrixXd bg = bracket_cells(kin.g, b_fields(vg), vg);

  double defect = 0.0;
  for (int i = 0; i < nx; ++i) {
    const double theta = 1.0 + eps * fluid.theta_t(i);
    const Vector3d ut = fluid.u_t.row(i).transpose();
    const double st = std::sqrt(theta);

    // Direct quadratures.
    Vector3d vflux = Vector3d::Zero(), bflux = Vector3d::Zero();
    double eflux = 0.0;
    Matrix3d aflux = Matrix3d::Zero();
    for (int k = 0; k < vg.size(); ++k) {
      const double fv = vg.maxwell_weights(k) * (1.0 + eps * kin.g(i, k));
      const double w = vg.weights(k) * fv;
      const Vector3d V = (Vector3d(vg.nodes.row(k)) - eps * ut) / st;
      vflux += w * V / st;
      eflux += w * (0.5 * V.squaredNorm() - 1.5) / theta;
      aflux += w * tensor_A(V);
      bflux += w * tensor_B(V) / st;
    }
    out.v_direct.row(i) = vflux.transpose();
    out.e_direct(i) = eflux;
    out.a_direct[static_cast<size_t>(i)] = aflux;
    out.b_direct.row(i) = bflux.transpose();

    // Closed forms in (eps, moments, fluid fields).
    const double rb = mb.rho_b(i), tb = mb.theta_b(i), tt = fluid.theta_t(i);
    const Vector3d ub = mb.u_b.row(i).transpose();
    const double th2 = theta * theta;
    const Vector3d vclosed = eps * (ub - ut) / theta - eps * eps * rb * ut / theta;
    const double x2 = (-1.5 * tt * rb - ut.dot(ub) + 0.5 * ut.squaredNorm()) / th2;
    const double eclosed = 1.5 * eps * (tb - tt) / th2 + eps * eps * x2 +
                           0.5 * std::pow(eps, 3) * ut.squaredNorm() * rb / th2;
    const Matrix3d Ag = pack_sym6(ag.row(i).transpose());
    const Matrix3d uu = ut * ut.transpose() - ut.squaredNorm() / 3.0 * Matrix3d::Identity();
    const Matrix3d uub = ut * ub.transpose() + ub * ut.transpose() -
                         (2.0 / 3.0) * ut.dot(ub) * Matrix3d::Identity();
    const Matrix3d aclosed = (eps * Ag + eps * eps * (uu - uub) + std::pow(eps, 3) * rb * uu) / theta;
    const Vector3d Bg = bg.row(i).transpose();
    const Vector3d y3 = (0.5 * ut.squaredNorm() * ub + ut * ut.dot(ub) -
                         0.5 * ut.squaredNorm() * ut + 2.5 * tt * rb * ut) / th2;
    const Vector3d bclosed = eps * Bg / th2 + eps * eps * 2.5 * (tt * ut - tt * ub - tb * ut) / th2 -
                             eps * eps * (Ag * ut) / th2 + std::pow(eps, 3) * y3 -
                             std::pow(eps, 4) * 0.5 * ut.squaredNorm() * ut * rb / th2;
    out.v_closed.row(i) = vclosed.transpose();
    out.e_closed(i) = eclosed;
    out.a_closed[static_cast<size_t>(i)] = aclosed;
    out.b_closed.row(i) = bclosed.transpose();

    defect = std::max(defect, (vflux - vclosed).cwiseAbs().maxCoeff());
    defect = std::max(defect, std::abs(eflux - eclosed));
    defect = std::max(defect, (aflux - aclosed).cwiseAbs().maxCoeff());
    defect = std::max(defect, (bflux - bclosed).cwiseAbs().maxCoeff());
  }
  out.max_abs_defect = defect;
  return out;
}

MatrixXd project_hydro_cells(const MatrixXd& g, const VelocityGrid& vg) {
  return (g * vg.hydro_basis_wm.transpose()) * vg.hydro_basis;
}

AvBvResult avbv_decomposition(const KineticState& prev, const KineticState& cur,
                              const KineticState& next, const CollisionKernel& kernel) {
  const VelocityGrid& vg = *cur.vg;
  const SpatialGrid& sg = *cur.sg;
  const int nx = sg.cells();
  const double eps = cur.epsilon;
  const double dt2 = next.time - prev.time;
  if (!(dt2 > 0.0)) throw ConfigError("avbv_decomposition: snapshots must be time-ordered");

  const TransportCoefficients tc = transport_coefficients(kernel);
  const MatrixXd A = a_fields(vg);
  const MatrixXd B = b_fields(vg);
  const MatrixXd& Ah = a_hat_fields(kernel);
  const MatrixXd& Bh = b_hat_fields(kernel);

  const FluctuationMoments mb = fluctuation_moments(cur.g, vg);
  const std::vector<Matrix3d> sig_ub = stress_tensor(mb.u_b, sg);
  const ArrayXd dtheta_b = sg.deriv(mb.theta_b);

  const MatrixXd ag = bracket_cells(cur.g, A, vg);
  const MatrixXd bg = bracket_cells(cur.g, B, vg);

  // Collision remainder NQ(g) per cell.
  MatrixXd nq(nx, vg.size());
  for (int i = 0; i < nx; ++i)
    nq.row(i) = collision_q_remainder(cur.g.row(i).transpose(), eps, kernel).transpose();
  const MatrixXd ah_nq = bracket_cells(nq, Ah, vg);
  const MatrixXd bh_nq = bracket_cells(nq, Bh, vg);

  // <A_hat, v1 d_x P^orth g> = d_x <A_hat v1, P^orth g>.
  const MatrixXd portho = cur.g - project_hydro_cells(cur.g, vg);
  const MatrixXd v1Ah = vg.nodes.col(0).asDiagonal() * Ah;
  const MatrixXd v1Bh = vg.nodes.col(0).asDiagonal() * Bh;
  MatrixXd ah_transport = bracket_cells(portho, v1Ah, vg);
  MatrixXd bh_transport = bracket_cells(portho, v1Bh, vg);
  for (int c = 0; c < 6; ++c) ah_transport.col(c) = sg.deriv(ah_transport.col(c).array()).matrix();
  for (int c = 0; c < 3; ++c) bh_transport.col(c) = sg.deriv(bh_transport.col(c).array()).matrix();

  // eps <A_hat, d_t P^orth g> by centered differences across the snapshots.
  const MatrixXd portho_dot =
      ((next.g - project_hydro_cells(next.g, vg)) - (prev.g - project_hydro_cells(prev.g, vg))) / dt2;
  const MatrixXd ah_time = bracket_cells(portho_dot, Ah, vg);
  const MatrixXd bh_time = bracket_cells(portho_dot, Bh, vg);

  AvBvResult out;
  out.a_direct.resize(static_cast<size_t>(nx));
  out.a_leading.resize(static_cast<size_t>(nx));
  out.r_a.resize(static_cast<size_t>(nx));
  out.b_direct.resize(nx, 3);
  out.b_leading.resize(nx, 3);
  out.r_b.resize(nx, 3);
  double ra_l1 = 0.0, rb_l1 = 0.0;
  for (int i = 0; i < nx; ++i) {
    const Vector3d ub = mb.u_b.row(i).transpose();
    const double tb = mb.theta_b(i);
    const Matrix3d lead_a = -tc.mu * sig_ub[static_cast<size_t>(i)] +
                            (ub * ub.transpose() - ub.squaredNorm() / 3.0 * Matrix3d::Identity());
    const Matrix3d q_res = pack_sym6(ah_nq.row(i).transpose()) -
                           (ub * ub.transpose() - ub.squaredNorm() / 3.0 * Matrix3d::Identity());
    const Matrix3d ra = q_res - pack_sym6(ah_transport.row(i).transpose()) -
                        eps * pack_sym6(ah_time.row(i).transpose());
    out.a_direct[static_cast<size_t>(i)] = pack_sym6(ag.row(i).transpose()) / eps;
    out.a_leading[static_cast<size_t>(i)] = lead_a;
    out.r_a[static_cast<size_t>(i)] = ra;
    out.max_defect_a = std::max(
        out.max_defect_a,
        (out.a_direct[static_cast<size_t>(i)] - lead_a - ra).cwiseAbs().maxCoeff());
    ra_l1 += ra.norm();

    const Vector3d lead_b = -2.5 * tc.kappa * Vector3d(dtheta_b(i), 0.0, 0.0) + 2.5 * tb * ub;
    const Vector3d q_res_b = Vector3d(bh_nq.row(i).transpose()) - 2.5 * tb * ub;
    const Vector3d rb = q_res_b - Vector3d(bh_transport.row(i).transpose()) -
                        eps * Vector3d(bh_time.row(i).transpose());
    out.b_direct.row(i) = bg.row(i) / eps;
    out.b_leading.row(i) = lead_b.transpose();
    out.r_b.row(i) = rb.transpose();
    out.max_defect_b = std::max(
        out.max_defect_b,
        (Vector3d(out.b_direct.row(i).transpose()) - lead_b - rb).cwiseAbs().maxCoeff());
    rb_l1 += rb.norm();
  }
  out.ra_l1 = sg.dx() * ra_l1;
  out.rb_l1 = sg.dx() * rb_l1;
  return out;
}

MatrixXd resample_fluctuation(const MatrixXd& g, const VelocityGrid& from, const VelocityGrid& to) {
  std::vector<EvalStencil> stencils(static_cast<size_t>(to.size()));
  for (int k = 0; k < to.size(); ++k) {
    if (!make_eval_stencil(from, to.nodes.row(k), stencils[static_cast<size_t>(k)]))
      throw ConfigError("resample_fluctuation: target grid exceeds the source velocity box");
  }
  MatrixXd out(g.rows(), to.size());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const VectorXd row = g.row(i).transpose();
    for (int k = 0; k < to.size(); ++k)
      out(i, k) = stencil_eval(row, stencils[static_cast<size_t>(k)]);
  }
  return out;
}

DissipationEquivalence dissipation_equivalence(const KineticState& kin,
                                               const CollisionKernel& diag_kernel, bool with_bgl) {
  if (diag_kernel.mode != KernelMode::maxwell_molecules)
    throw ConfigError("dissipation_equivalence needs a maxwell_molecules kernel");
  const SpatialGrid& sg = *kin.sg;
  const MatrixXd gd = (diag_kernel.grid.get() == kin.vg.get())
                          ? kin.g
                          : resample_fluctuation(kin.g, *kin.vg, diag_kernel.g());
  DissipationEquivalence out;
  out.bgl_slack_min = std::numeric_limits<double>::infinity();
  TransportCoefficients tc;
  if (with_bgl) tc = transport_coefficients(diag_kernel);
  for (int i = 0; i < sg.cells(); ++i) {
    const VectorXd row = gd.row(i).transpose();
    const DissipationStats st = dissipation_stats(row, kin.epsilon, diag_kernel);
    out.d_over_eps4 += st.d_over_eps4;
    out.quarter_q2 += st.quarter_q2;
    out.r11 += st.r11;
    out.closure_defect = std::max(out.closure_defect, std::abs(st.closure_defect));
    out.r3_l1 += st.r3_mag;
    out.r4_l1 += st.r4_mag;
    if (with_bgl) {
      const QBrackets qb = q_brackets(row, kin.epsilon, diag_kernel);
      const double slack = 0.25 * qb.q2 -
                           0.5 / tc.mu * (qb.a_hat_q.array() * qb.a_hat_q.array()).sum() -
                           0.4 / tc.kappa * qb.b_hat_q.squaredNorm();
      out.bgl_slack_min = std::min(out.bgl_slack_min, slack);
    }
  }
  const double dx = sg.dx();
  out.d_over_eps4 *= dx;
  out.quarter_q2 *= dx;
  out.r11 *= dx;
  out.r3_l1 *= dx;
  out.r4_l1 *= dx;
  if (!with_bgl) out.bgl_slack_min = std::numeric_limits<double>::quiet_NaN();
  return out;
}

// ---------------------------------------------------------------------------
// Theorem budget assembly

namespace {

struct InstantRow {
  double h = 0.0, h_kin = 0.0, h_fluid = 0.0, split_defect = 0.0;
  double quad = 0.0, r8 = 0.0, r9 = 0.0, r10 = 0.0, r1s = 0.0, r2s = 0.0;
  double diss_integrand = 0.0, flux_integrand = 0.0;
  double iii = 0.0, iv = 0.0;
  double r1 = 0.0, r2 = 0.0, r3 = 0.0, r4 = 0.0, r5 = 0.0, r6 = 0.0;
  double r12 = 0.0, r13 = 0.0;
  double rab_contract = 0.0;  // |R_A : grad u~ / theta| + |R_B . grad theta~ / theta^2|, L1
  double ra_l1 = 0.0, rb_l1 = 0.0;
  double grad_inf = 0.0;  // ||(grad u~, grad theta~)||_inf
  double closure_flux = 0.0, closure_avbv = 0.0;
  double r11 = 0.0, r3q = 0.0, r4q = 0.0, closure_diss = 0.0, bgl = 0.0;
  bool has_diag = false;
};

double frob(const Matrix3d& m) { return std::sqrt((m.array() * m.array()).sum()); }

}  // namespace

std::vector<EntropyReport> theorem_budget(const KineticTrajectory& kin, const FluidTrajectory& fluid,
                                          const CollisionKernel& kernel, const BudgetOptions& opts) {
  const size_t n = kin.snapshots.size();
  if (n == 0 || fluid.snapshots.size() != n) throw ConfigError("theorem_budget: trajectory size mismatch");
  {
    std::string bad;
    for (size_t j = 0; j < n; ++j) {
      const double tk = kin.snapshots[j].time, tf = fluid.snapshots[j].time;
      if (std::abs(tk - tf) > 1e-9) bad += " t=" + std::to_string(tk) + "/" + std::to_string(tf);
    }
    if (!bad.empty()) throw ConfigError("theorem_budget: misaligned observation times:" + bad);
    if (std::abs(kin.snapshots[0].epsilon - fluid.snapshots[0].epsilon) > 0)
      throw ConfigError("theorem_budget: epsilon mismatch");
  }
  const KineticState& k0 = kin.snapshots[0];
  const SpatialGrid& sg = *k0.sg;
  const VelocityGrid& vg = *k0.vg;
  const double eps = k0.epsilon;
  const double eps2 = eps * eps;
  const TransportCoefficients tc = transport_coefficients(kernel);
  const double mu = tc.mu, kappa = tc.kappa;
  const bool surrogate = kernel.mode == KernelMode::bgk;

  std::optional<CollisionKernel> diag;
  if (opts.diag_grid) diag.emplace(make_maxwell_kernel(opts.diag_grid, opts.diag_b));

  double conv_constant = 0.0;
  std::vector<InstantRow> rows(n);
  for (size_t j = 0; j < n; ++j) {
    const KineticState& K = kin.snapshots[j];
    const FluidState& F = fluid.snapshots[j];
    InstantRow& R = rows[j];

    const auto targets = fluid_maxwellians(F);
    R.h = relative_entropy_states(K, F) / eps2;

    // Lemma 2.3 split (f rebuilt nodewise).
    MatrixXd f(sg.cells(), vg.size());
    for (int i = 0; i < sg.cells(); ++i)
      f.row(i) = (vg.maxwell_weights.array() * (1.0 + eps * K.g.row(i).transpose().array())).transpose();
    const auto split = entropy_split(f, targets, sg, vg);
    R.h_kin = split.first / eps2;
    R.h_fluid = split.second / eps2;
    R.split_defect = std::abs(R.h - R.h_kin - R.h_fluid);

    const FluctuationMoments mb = fluctuation_moments(K.g, vg);
    const QuadraticApprox qa = quadratic_entropy_approx(mb, F);
    R.quad = qa.quadratic;
    R.r8 = std::abs(qa.r8);
    R.r9 = std::abs(qa.r9);
    R.r10 = std::abs(qa.r10);
    R.r1s = qa.r1_l1;
    R.r2s = qa.r2_l1;

    // Dissipation and flux integrands.
    const std::vector<Matrix3d> sig_ub = stress_tensor(mb.u_b, sg);
    const ArrayXd dtheta_b = sg.deriv(mb.theta_b);
    const std::vector<Matrix3d> sig_ut = stress_tensor(F.u_t, sg);
    const ArrayXd dtheta_t = sg.deriv(F.theta_t);
    double dsum = 0.0, hydro = 0.0, flux = 0.0;
    for (int i = 0; i < sg.cells(); ++i) {
      dsum += entropy_dissipation(f.row(i).transpose(), kernel);
      const Matrix3d& sb = sig_ub[static_cast<size_t>(i)];
      const Matrix3d df = sig_ut[static_cast<size_t>(i)] - sb;
      const double gb = dtheta_b(i), gf = dtheta_t(i) - gb;
      hydro += 0.5 * mu * (sb.array() * sb.array()).sum() + 2.5 * kappa * gb * gb;
      flux += 0.5 * mu * (df.array() * df.array()).sum() + 2.5 * kappa * gf * gf;
    }
    R.diss_integrand = sg.dx() * (dsum / (eps2 * eps2) - hydro);
    R.flux_integrand = sg.dx() * flux;

    // Convection terms III, IV and the R-suite.
    const ArrayXd theta_e = 1.0 + eps * F.theta_t;
    const ArrayXd rho_e = 1.0 + eps * F.rho_t;
    ArrayXd du[3];
    for (int c = 0; c < 3; ++c) du[c] = sg.deriv(F.u_t.col(c).array());
    const ArrayXd drho_t = sg.deriv(F.rho_t);
    ArrayXd mu_loc(sg.cells()), kappa_loc(sg.cells());
    for (int i = 0; i < sg.cells(); ++i) {
      const double rr = rho_e(i), th = theta_e(i);
      mu_loc(i) = opts.local_coefficients ? opts.table.mu(rr, th) : mu;
      kappa_loc(i) = opts.local_coefficients ? opts.table.kappa(rr, th) : kappa;
    }
    // div[mu_loc sigma(u~)] rows and sigma(u~):sigma(u~)
    ArrayXd divsig[3], sigsig(sg.cells());
    {
      ArrayXd s11(sg.cells()), s21(sg.cells()), s31(sg.cells());
      for (int i = 0; i < sg.cells(); ++i) {
        const Matrix3d& m = sig_ut[static_cast<size_t>(i)];
        s11(i) = m(0, 0);
        s21(i) = m(1, 0);
        s31(i) = m(2, 0);
        sigsig(i) = (m.array() * m.array()).sum();
      }
      divsig[0] = sg.deriv(mu_loc * s11);
      divsig[1] = sg.deriv(mu_loc * s21);
      divsig[2] = sg.deriv(mu_loc * s31);
    }
    const ArrayXd heat_div = sg.deriv(kappa_loc * dtheta_t);

    const MatrixXd ag = bracket_cells(K.g, a_fields(vg), vg);
    double iii = 0.0, iv = 0.0, r1 = 0.0, r2 = 0.0, r3 = 0.0, r4 = 0.0, r5 = 0.0, r6 = 0.0;
    double gmax = 0.0;
    for (int i = 0; i < sg.cells(); ++i) {
      const double th = theta_e(i), rr = rho_e(i), th2 = th * th;
      const Vector3d ut = F.u_t.row(i).transpose();
      const Vector3d ub = mb.u_b.row(i).transpose();
      const Vector3d dU = ut - ub;
      const double dT = F.theta_t(i) - mb.theta_b(i);
      const double du1 = du[0](i), du2 = du[1](i), du3 = du[2](i);
      gmax = std::max({gmax, std::abs(du1), std::abs(du2), std::abs(du3), std::abs(dtheta_t(i))});

      // III integrand: (1/theta)[dU x dU - |dU|^2/3 I] : grad u~ (slab gradient).
      const double iii_i =
          ((dU(0) * dU(0) - dU.squaredNorm() / 3.0) * du1 + dU(1) * dU(0) * du2 + dU(2) * dU(0) * du3) / th;
      iii += iii_i;
      iv += 2.5 / th2 * dT * dU(0) * dtheta_t(i);

      // R1 = -eps int div[mu sigma(u~)] . rho_b u~ / (rho theta)
      const Vector3d dvs(divsig[0](i), divsig[1](i), divsig[2](i));
      r1 += std::abs(-eps * dvs.dot(mb.rho_b(i) * ut) / (rr * th));

      const double x2 = (-1.5 * F.theta_t(i) * mb.rho_b(i) - ut.dot(ub) + 0.5 * ut.squaredNorm()) / th2;
      const double tail = x2 + eps * ut.squaredNorm() * mb.rho_b(i) / (2.0 * th2);
      const double r2a = eps / rr * (1.0 / 3.0) * mu_loc(i) * sigsig(i) *
                         (1.5 * (mb.theta_b(i) - F.theta_t(i)) / th2 + eps * tail);
      const double r2b = eps / rr * (5.0 / 3.0) * heat_div(i) * tail;
      r2 += std::abs(r2a + r2b);

      const Matrix3d uu = ut * ut.transpose() - ut.squaredNorm() / 3.0 * Matrix3d::Identity();
      r3 += std::abs(eps * mb.rho_b(i) / th * (uu(0, 0) * du1 + uu(1, 0) * du2 + uu(2, 0) * du3));

      const Vector3d y3 = (0.5 * ut.squaredNorm() * ub + ut * ut.dot(ub) - 0.5 * ut.squaredNorm() * ut +
                           2.5 * F.theta_t(i) * mb.rho_b(i) * ut) / th2;
      const Matrix3d Ag = pack_sym6(ag.row(i).transpose());
      const double r4_i = (eps * y3(0) - eps * eps * 0.5 * ut.squaredNorm() * ut(0) * mb.rho_b(i) / th2) *
                              dtheta_t(i) -
                          (Ag.row(0).dot(ut.transpose())) * dtheta_t(i) / th2;
      r4 += std::abs(r4_i);

      // R5: the three exact correction pieces of the viscous integration by parts.
      const double pref = (-eps * F.rho_t(i) - eps * F.theta_t(i) - eps2 * F.rho_t(i) * F.theta_t(i)) /
                          (rr * th);
      const Matrix3d& sb = sig_ub[static_cast<size_t>(i)];
      const Matrix3d& su = sig_ut[static_cast<size_t>(i)];
      const double r5a = dvs.dot(ub - ut) * pref;
      const double r5b = (eps * F.theta_t(i) / th) * mu *
                         (sb(0, 0) * du1 + sb(1, 0) * du2 + sb(2, 0) * du3);
      const double r5c = 0.5 * (mu_loc(i) - mu) * (su.array() * (su - sb).array()).sum();
      r5 += std::abs(r5a + r5b + r5c);

      const double r6a = (1.0 / (rr * th2) - 1.0) * 2.5 * heat_div(i) * (mb.theta_b(i) - F.theta_t(i));
      const double r6b = 2.5 * (1.0 - 1.0 / th2) * kappa * dtheta_b(i) * dtheta_t(i);
      const double r6c = 2.5 * (kappa_loc(i) - kappa) * dtheta_t(i) * (dtheta_t(i) - dtheta_b(i));
      r6 += std::abs(r6a + r6b + r6c);

      conv_constant = std::max(conv_constant, std::max(std::sqrt(2.0 / 3.0) / th, 1.25 / th2));
    }
    const double dx = sg.dx();
    R.iii = std::abs(dx * iii);
    R.iv = std::abs(dx * iv);
    R.r1 = dx * r1;
    R.r2 = dx * r2;
    R.r3 = dx * r3;
    R.r4 = dx * r4;
    R.r5 = dx * r5;
    R.r6 = dx * r6;
    R.grad_inf = gmax;

    // Lemma 2.2 residuals and R12/R13 need time neighbors.
    const size_t jp = (j == 0) ? 0 : j - 1;
    const size_t jn = (j + 1 == n) ? j : j + 1;
    if (jn > jp) {
      const AvBvResult ab = avbv_decomposition(kin.snapshots[jp], K, kin.snapshots[jn], kernel);
      R.closure_avbv = std::max(ab.max_defect_a, ab.max_defect_b);
      R.ra_l1 = ab.ra_l1;
      R.rb_l1 = ab.rb_l1;
      double rc = 0.0, r12 = 0.0, r13 = 0.0;
      // <A_hat, v d_x P-orth g> + <eps d_t g, A_hat>, contracted per the paper.
      const MatrixXd portho = K.g - project_hydro_cells(K.g, vg);
      const MatrixXd& Ah = a_hat_fields(kernel);
      const MatrixXd& Bh = b_hat_fields(kernel);
      MatrixXd ah_tr = bracket_cells(portho, vg.nodes.col(0).asDiagonal() * Ah, vg);
      MatrixXd bh_tr = bracket_cells(portho, vg.nodes.col(0).asDiagonal() * Bh, vg);
      for (int c = 0; c < 6; ++c) ah_tr.col(c) = sg.deriv(ah_tr.col(c).array()).matrix();
      for (int c = 0; c < 3; ++c) bh_tr.col(c) = sg.deriv(bh_tr.col(c).array()).matrix();
      const MatrixXd gdot = (kin.snapshots[jn].g - kin.snapshots[jp].g) /
                            (kin.snapshots[jn].time - kin.snapshots[jp].time);
      const MatrixXd ah_dt = bracket_cells(gdot, Ah, vg);
      const MatrixXd bh_dt = bracket_cells(gdot, Bh, vg);
      for (int i = 0; i < sg.cells(); ++i) {
        const Matrix3d ra = ab.r_a[static_cast<size_t>(i)];
        const Vector3d rbv = ab.r_b.row(i).transpose();
        const double th = theta_e(i), th2 = th * th;
        const double contr_a = (ra(0, 0) * du[0](i) + ra(1, 0) * du[1](i) + ra(2, 0) * du[2](i)) / th;
        const double contr_b = rbv(0) * dtheta_t(i) / th2;
        rc += std::abs(contr_a) + std::abs(contr_b);
        const Matrix3d m12 = pack_sym6(ah_tr.row(i).transpose()) + eps * pack_sym6(ah_dt.row(i).transpose());
        const Matrix3d& sb = sig_ub[static_cast<size_t>(i)];
        r12 += std::abs((m12.array() * sb.array()).sum());
        const Vector3d m13 = Vector3d(bh_tr.row(i).transpose()) + eps * Vector3d(bh_dt.row(i).transpose());
        r13 += std::abs(m13(0) * dtheta_b(i));
      }
      R.rab_contract = dx * rc;
      R.r12 = dx * r12;
      R.r13 = dx * r13;
    }

    const MomentFluxResult mf = moment_flux_expansions(K, F);
    R.closure_flux = mf.max_abs_defect;

    const int stride = std::max(1, opts.diag_stride);
    if (diag && (j % static_cast<size_t>(stride) == 0 || j + 1 == n)) {
      const DissipationEquivalence de = dissipation_equivalence(K, *diag, opts.diag_bgl);
      R.r11 = std::abs(de.r11);
      R.r3q = de.r3_l1;
      R.r4q = de.r4_l1;
      R.closure_diss = de.closure_defect;
      R.bgl = de.bgl_slack_min;
      R.has_diag = true;
    }
  }

  // Trapezoidal accumulation in time; the full-kernel diagnostics use their
  // own (possibly strided) subsequence of snapshot times.
  std::vector<EntropyReport> reports(n);
  double acc_diss = 0.0, acc_flux = 0.0, acc_iii = 0.0, acc_iv = 0.0;
  double acc_r[14] = {0};
  double acc_rab = 0.0, acc_ra = 0.0, acc_rb = 0.0, acc_r1s = 0.0, acc_r2s = 0.0;
  double acc_r3q = 0.0, acc_r4q = 0.0, acc_r7 = 0.0;
  double closure_flux_max = 0.0, closure_avbv_max = 0.0, closure_diss_max = 0.0;
  double bgl_min = std::numeric_limits<double>::infinity();
  int last_diag = -1;
  for (size_t j = 0; j < n; ++j) {
    if (j > 0) {
      const double dt = kin.snapshots[j].time - kin.snapshots[j - 1].time;
      auto trap = [&](double a, double b) { return 0.5 * dt * (a + b); };
      const InstantRow& p = rows[j - 1];
      const InstantRow& c = rows[j];
      acc_diss += trap(p.diss_integrand, c.diss_integrand);
      acc_flux += trap(p.flux_integrand, c.flux_integrand);
      acc_iii += trap(p.iii, c.iii);
      acc_iv += trap(p.iv, c.iv);
      acc_r[1] += trap(p.r1, c.r1);
      acc_r[2] += trap(p.r2, c.r2);
      acc_r[3] += trap(p.r3, c.r3);
      acc_r[4] += trap(p.r4, c.r4);
      acc_r[5] += trap(p.r5, c.r5);
      acc_r[6] += trap(p.r6, c.r6);
      acc_r[8] += trap(p.r8, c.r8);
      acc_r[9] += trap(p.r9, c.r9);
      acc_r[10] += trap(p.r10, c.r10);
      acc_r[12] += trap(p.r12, c.r12);
      acc_r[13] += trap(p.r13, c.r13);
      acc_r7 += trap(conv_constant * p.grad_inf * (p.r8 + p.r9 + p.r10),
                     conv_constant * c.grad_inf * (c.r8 + c.r9 + c.r10));
      acc_rab += trap(p.rab_contract, c.rab_contract);
      acc_ra += trap(p.ra_l1, c.ra_l1);
      acc_rb += trap(p.rb_l1, c.rb_l1);
      acc_r1s += trap(p.r1s, c.r1s);
      acc_r2s += trap(p.r2s, c.r2s);
    }
    if (rows[j].has_diag) {
      if (last_diag >= 0) {
        const double dt = kin.snapshots[j].time - kin.snapshots[static_cast<size_t>(last_diag)].time;
        const InstantRow& p = rows[static_cast<size_t>(last_diag)];
        const InstantRow& c = rows[j];
        acc_r[11] += 0.5 * dt * (p.r11 + c.r11);
        acc_r3q += 0.5 * dt * (p.r3q + c.r3q);
        acc_r4q += 0.5 * dt * (p.r4q + c.r4q);
      }
      last_diag = static_cast<int>(j);
      closure_diss_max = std::max(closure_diss_max, rows[j].closure_diss);
      if (std::isfinite(rows[j].bgl)) bgl_min = std::min(bgl_min, rows[j].bgl);
    }
    closure_flux_max = std::max(closure_flux_max, rows[j].closure_flux);
    closure_avbv_max = std::max(closure_avbv_max, rows[j].closure_avbv);

    EntropyReport& rep = reports[j];
    const InstantRow& c = rows[j];
    rep.time = kin.snapshots[j].time;
    rep.h_over_eps2 = c.h;
    rep.h_kinetic = c.h_kin;
    rep.h_fluid = c.h_fluid;
    rep.split_defect = c.split_defect;
    rep.quad_approx = c.quad;
    rep.dissipation_budget = acc_diss;
    rep.flux_budget = acc_flux;
    rep.dissipation_is_surrogate = surrogate;
    rep.conv_iii = acc_iii;
    rep.conv_iv = acc_iv;
    for (int q = 1; q <= 13; ++q) rep.r[q] = acc_r[q];
    rep.r[7] = acc_r7;
    rep.r_a = acc_ra;
    rep.r_b = acc_rb;
    rep.r_small[1] = acc_r1s;
    rep.r_small[2] = acc_r2s;
    rep.r_small[3] = acc_r3q;
    rep.r_small[4] = acc_r4q;
    rep.conv_constant = conv_constant;
    rep.closure_flux = closure_flux_max;
    rep.closure_avbv = closure_avbv_max;
    rep.closure_dissipation = closure_diss_max;
    rep.bgl_slack_min =
        std::isfinite(bgl_min) ? bgl_min : std::numeric_limits<double>::quiet_NaN();
    // Majorant of the mid-estimate with measured residual magnitudes.
    rep.majorant = rows[0].h + acc_iii + acc_iv + acc_r[1] + acc_r[2] + acc_r[3] + acc_r[4] +
                   acc_r[5] + acc_r[6] + acc_rab;
    rep.budget_slack = rep.majorant - (c.h + acc_diss + acc_flux);
  }
  return reports;
}

}  // namespace entlab

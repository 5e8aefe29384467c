#include "entlab/maxwellian.hpp"

#include <cmath>

namespace entlab {

namespace {
constexpr double kPi = 3.14159265358979323846;

void check_smooth(const ArrayXd& f, const SpatialGrid& sg, double tol, const char* name) {
  if (sg.spectral_tail_fraction(f) > tol)
    throw NonSmoothFieldError(std::string("field ") + name + " fails the spectral-tail check");
}
}  // namespace

MaxwellianParams::MaxwellianParams(double rho_, const Vector3d& u_, double theta_)
    : rho(rho_), u(u_), theta(theta_) {
  if (!(rho > 0.0) || !(theta > 0.0))
    throw DegenerateMomentsError("MaxwellianParams requires rho > 0 and theta > 0");
}

double maxwellian_eval(const MaxwellianParams& p, const Vector3d& v) {
  const double r2 = (v - p.u).squaredNorm();
  return p.rho * std::pow(2.0 * kPi * p.theta, -1.5) * std::exp(-r2 / (2.0 * p.theta));
}

VectorXd maxwellian_on_grid(const MaxwellianParams& p, const VelocityGrid& grid) {
  const double pref = p.rho * std::pow(2.0 * kPi * p.theta, -1.5);
  const double inv2t = 1.0 / (2.0 * p.theta);
  VectorXd out(grid.size());
  for (int k = 0; k < grid.size(); ++k) {
    const Vector3d v = grid.nodes.row(k);
    out(k) = pref * std::exp(-(v - p.u).squaredNorm() * inv2t);
  }
  return out;
}

MaxwellianParams from_raw_moments(const RawMoments& m) {
  if (!(m.mass > 0.0)) throw DegenerateMomentsError("from_raw_moments: mass must be > 0");
  const Vector3d u = m.momentum / m.mass;
  const double theta = (m.energy / m.mass - u.squaredNorm()) / 3.0;
  if (!(theta > 0.0)) throw DegenerateMomentsError("from_raw_moments: implied temperature <= 0");
  return MaxwellianParams(m.mass, u, theta);
}

Matrix3d tensor_A(const Vector3d& V) {
  Matrix3d A = V * V.transpose();
  const double t = V.squaredNorm() / 3.0;
  A(0, 0) -= t;
  A(1, 1) -= t;
  A(2, 2) -= t;
  return A;
}

Vector3d tensor_B(const Vector3d& V) { return V * (0.5 * V.squaredNorm() - 2.5); }

MatrixXd hydrodynamic_field(const ArrayXd& rho, const Eigen::Matrix<double, Eigen::Dynamic, 3>& u,
                            const ArrayXd& theta, const SpatialGrid& sg, const VelocityGrid& vg) {
  const int nx = sg.cells();
  const int nv = vg.size();
  MatrixXd g(nx, nv);
  for (int k = 0; k < nv; ++k) {
    const Vector3d v = vg.nodes.row(k);
    const double e = 0.5 * vg.vsq(k) - 1.5;
    g.col(k) = (rho + u.col(0).array() * v(0) + u.col(1).array() * v(1) + u.col(2).array() * v(2) +
                theta * e)
                   .matrix();
  }
  return g;
}

MatrixXd log_maxwellian_transport(const ParamsField& params, const SpatialGrid& sg,
                                  const VelocityGrid& vg, double tail_tol) {
  const int nx = sg.cells();
  const int nv = vg.size();
  if ((params.rho <= 0.0).any() || (params.theta <= 0.0).any())
    throw DegenerateMomentsError("log_maxwellian_transport: rho and theta must be positive");
  check_smooth(params.rho, sg, tail_tol, "rho");
  check_smooth(params.theta, sg, tail_tol, "theta");
  for (int c = 0; c < 3; ++c) check_smooth(params.u.col(c).array(), sg, tail_tol, "u");

  const ArrayXd drho = sg.deriv(params.rho);
  const ArrayXd dtheta = sg.deriv(params.theta);
  ArrayXd du[3];
  for (int c = 0; c < 3; ++c) du[c] = sg.deriv(params.u.col(c).array());

  // Euler-operator triple; the slab varies in x1 only.
  const ArrayXd e1 = params.u.col(0).array() * drho + params.rho * du[0];
  ArrayXd e2[3];
  for (int c = 0; c < 3; ++c) e2[c] = params.u.col(0).array() * du[c];
  e2[0] += (params.theta / params.rho) * drho + dtheta;
  const ArrayXd e3 = params.u.col(0).array() * dtheta + (2.0 / 3.0) * params.theta * du[0];

  const ArrayXd sqrt_theta = params.theta.sqrt();
  MatrixXd out(nx, nv);
  for (int i = 0; i < nx; ++i) {
    const double st = sqrt_theta(i);
    for (int k = 0; k < nv; ++k) {
      const Vector3d v = vg.nodes.row(k);
      Vector3d V;
      for (int c = 0; c < 3; ++c) V(c) = (v(c) - params.u(i, c)) / st;
      const Matrix3d A = tensor_A(V);
      const Vector3d B = tensor_B(V);
      double val = e1(i) / params.rho(i);
      for (int c = 0; c < 3; ++c) val += e2[c](i) * V(c) / st;
      val += e3(i) * (0.5 * V.squaredNorm() - 1.5) / params.theta(i);
      for (int c = 0; c < 3; ++c) val += A(c, 0) * du[c](i);  // A(V):grad u
      val += B(0) * dtheta(i) / st;
      out(i, k) = val;
    }
  }
  return out;
}

MatrixXd log_maxwellian_transport_direct(const ParamsField& params, const SpatialGrid& sg,
                                         const VelocityGrid& vg) {
  const int nx = sg.cells();
  const int nv = vg.size();
  MatrixXd out(nx, nv);
  ArrayXd logm(nx);
  for (int k = 0; k < nv; ++k) {
    const Vector3d v = vg.nodes.row(k);
    for (int i = 0; i < nx; ++i) {
      double r2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = v(c) - params.u(i, c);
        r2 += d * d;
      }
      logm(i) = std::log(params.rho(i)) - 1.5 * std::log(params.theta(i)) - r2 / (2.0 * params.theta(i));
    }
    out.col(k) = (vg.nodes(k, 0) * sg.deriv(logm)).matrix();
  }
  return out;
}

MatrixXd linearized_transport(const ArrayXd& rho, const Eigen::Matrix<double, Eigen::Dynamic, 3>& u,
                              const ArrayXd& theta, const SpatialGrid& sg, const VelocityGrid& vg,
                              double tail_tol) {
  check_smooth(rho, sg, tail_tol, "rho");
  check_smooth(theta, sg, tail_tol, "theta");
  for (int c = 0; c < 3; ++c) check_smooth(u.col(c).array(), sg, tail_tol, "u");

  const ArrayXd drho = sg.deriv(rho);
  const ArrayXd dtheta = sg.deriv(theta);
  ArrayXd du[3];
  for (int c = 0; c < 3; ++c) du[c] = sg.deriv(u.col(c).array());

  const int nx = sg.cells();
  const int nv = vg.size();
  MatrixXd out(nx, nv);
  for (int k = 0; k < nv; ++k) {
    const Vector3d v = vg.nodes.row(k);
    const Matrix3d A = tensor_A(v);
    const Vector3d B = tensor_B(v);
    ArrayXd col = du[0] + (drho + dtheta) * v(0) + (2.0 / 3.0) * du[0] * (0.5 * vg.vsq(k) - 1.5);
    for (int c = 0; c < 3; ++c) col += A(c, 0) * du[c];
    col += B(0) * dtheta;
    out.col(k) = col.matrix();
  }
  return out;
}

}  // namespace entlab

#include "entlab/velocity_grid.hpp"

#include <cmath>

namespace entlab {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Golub-Welsch: nodes/weights from the symmetric tridiagonal Jacobi matrix
// with off-diagonals beta_k; mu0 is the total mass of the weight function.
void golub_welsch(const std::vector<double>& beta, double mu0, std::vector<double>& nodes,
                  std::vector<double>& weights) {
  const int n = static_cast<int>(beta.size()) + 1;
  MatrixXd J = MatrixXd::Zero(n, n);
  for (int k = 0; k < n - 1; ++k) {
    J(k, k + 1) = beta[static_cast<size_t>(k)];
    J(k + 1, k) = beta[static_cast<size_t>(k)];
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(J);
  nodes.resize(static_cast<size_t>(n));
  weights.resize(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    nodes[static_cast<size_t>(k)] = es.eigenvalues()(k);
    const double q0 = es.eigenvectors()(0, k);
    weights[static_cast<size_t>(k)] = mu0 * q0 * q0;
  }
  // The weight functions are even; enforce the exact +/- symmetry that the
  // eigensolver only delivers to rounding.
  for (int k = 0; k < n / 2; ++k) {
    const int r = n - 1 - k;
    const double x = 0.5 * (nodes[static_cast<size_t>(r)] - nodes[static_cast<size_t>(k)]);
    nodes[static_cast<size_t>(k)] = -x;
    nodes[static_cast<size_t>(r)] = x;
    const double w =
        0.5 * (weights[static_cast<size_t>(k)] + weights[static_cast<size_t>(r)]);
    weights[static_cast<size_t>(k)] = w;
    weights[static_cast<size_t>(r)] = w;
  }
  if (n % 2 == 1) nodes[static_cast<size_t>(n / 2)] = 0.0;
}

double maxwell_1d(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }
}  // namespace

void gauss_hermite_probabilists(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  std::vector<double> beta(static_cast<size_t>(n - 1));
  for (int k = 1; k < n; ++k) beta[static_cast<size_t>(k - 1)] = std::sqrt(static_cast<double>(k));
  golub_welsch(beta, 1.0, nodes, weights);
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  std::vector<double> beta(static_cast<size_t>(n - 1));
  for (int k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    beta[static_cast<size_t>(k - 1)] = kk / std::sqrt(4.0 * kk * kk - 1.0);
  }
  golub_welsch(beta, 2.0, nodes, weights);
}

SphereRule build_sphere_rule(int n_polar, int n_azimuth) {
  if (n_polar < 1 || n_azimuth < 2 || n_azimuth % 2 != 0)
    throw ConfigError("sphere rule needs n_polar >= 1 and even n_azimuth >= 2");
  std::vector<double> t, wt;
  gauss_legendre(n_polar, t, wt);
  SphereRule rule;
  rule.n_polar = n_polar;
  rule.n_azimuth = n_azimuth;
  const int ns = n_polar * n_azimuth;
  rule.nodes.resize(ns, 3);
  rule.weights.resize(ns);
  const double wphi = 2.0 * kPi / n_azimuth;
  int m = 0;
  for (int i = 0; i < n_polar; ++i) {
    const double ct = t[static_cast<size_t>(i)];
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    for (int j = 0; j < n_azimuth; ++j) {
      // Midpoint azimuth keeps the node set closed under sigma -> -sigma.
      const double phi = wphi * (j + 0.5);
      rule.nodes(m, 0) = st * std::cos(phi);
      rule.nodes(m, 1) = st * std::sin(phi);
      rule.nodes(m, 2) = ct;
      rule.weights(m) = wt[static_cast<size_t>(i)] * wphi;
      ++m;
    }
  }
  return rule;
}

VelocityGrid build_grid(int points_per_axis, VelocityRule rule, double truncation_radius,
                        int sphere_polar, int sphere_azimuth, double tol_norm) {
  if (points_per_axis < 4) throw ConfigError("points_per_axis must be >= 4");
  if (rule == VelocityRule::uniform_trapezoid && !(truncation_radius > 0.0))
    throw ConfigError("uniform rule needs truncation_radius > 0");

  VelocityGrid grid;
  grid.rule = rule;
  grid.points_per_axis = points_per_axis;
  grid.sphere = build_sphere_rule(sphere_polar, sphere_azimuth);

  const int n = points_per_axis;
  std::vector<double> x(static_cast<size_t>(n)), w1(static_cast<size_t>(n));
  if (rule == VelocityRule::gauss_hermite) {
    std::vector<double> gw;
    gauss_hermite_probabilists(n, x, gw);
    // Store plain-dv weights; the Gaussian factor returns through maxwell_weights.
    for (int i = 0; i < n; ++i)
      w1[static_cast<size_t>(i)] = gw[static_cast<size_t>(i)] / maxwell_1d(x[static_cast<size_t>(i)]);
    grid.truncation_radius = std::abs(x.back());
    grid.tol_norm = (tol_norm > 0.0) ? tol_norm : 1e-12;
  } else {
    const double h = 2.0 * truncation_radius / n;
    for (int i = 0; i < n; ++i) {
      x[static_cast<size_t>(i)] = -truncation_radius + (i + 0.5) * h;  // cell centers
      w1[static_cast<size_t>(i)] = h;
    }
    grid.truncation_radius = truncation_radius;
    grid.tol_norm = (tol_norm > 0.0) ? tol_norm : 1e-6;
  }
  grid.axis = x;

  const int nv = n * n * n;
  grid.nodes.resize(nv, 3);
  grid.weights.resize(nv);
  grid.maxwell_weights.resize(nv);
  int k = 0;
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy)
      for (int iz = 0; iz < n; ++iz) {
        const double vx = x[static_cast<size_t>(ix)];
        const double vy = x[static_cast<size_t>(iy)];
        const double vz = x[static_cast<size_t>(iz)];
        grid.nodes(k, 0) = vx;
        grid.nodes(k, 1) = vy;
        grid.nodes(k, 2) = vz;
        grid.weights(k) =
            w1[static_cast<size_t>(ix)] * w1[static_cast<size_t>(iy)] * w1[static_cast<size_t>(iz)];
        grid.maxwell_weights(k) = maxwell_1d(vx) * maxwell_1d(vy) * maxwell_1d(vz);
        ++k;
      }
  grid.wm = grid.weights.cwiseProduct(grid.maxwell_weights);

  grid.v1 = grid.nodes.col(0);
  grid.v2 = grid.nodes.col(1);
  grid.v3 = grid.nodes.col(2);
  grid.vsq = grid.nodes.rowwise().squaredNorm();

  // Orthonormalize {1, v1, v2, v3, |v|^2} in the discrete <.,.> metric so the
  // projection is exactly idempotent on any grid.
  MatrixXd raw(5, nv);
  raw.row(0).setOnes();
  raw.row(1) = grid.v1.transpose();
  raw.row(2) = grid.v2.transpose();
  raw.row(3) = grid.v3.transpose();
  raw.row(4) = grid.vsq.transpose();
  grid.hydro_basis.resize(5, nv);
  for (int a = 0; a < 5; ++a) {
    VectorXd e = raw.row(a).transpose();
    for (int b = 0; b < a; ++b) {
      const VectorXd eb = grid.hydro_basis.row(b).transpose();
      e -= inner(eb, e, grid) * eb;
    }
    const double nrm = std::sqrt(inner(e, e, grid));
    if (!(nrm > 0.0)) throw ConfigError("degenerate hydro basis; grid too small");
    grid.hydro_basis.row(a) = (e / nrm).transpose();
  }
  grid.hydro_basis_wm = grid.hydro_basis * grid.wm.asDiagonal();

  // Invariants. The normalization check is the advertised tol_norm gate.
  const double norm = grid.wm.sum();
  if (std::abs(norm - 1.0) > grid.tol_norm)
    throw ConfigError("grid normalization " + std::to_string(norm) + " outside tol_norm " +
                      std::to_string(grid.tol_norm));
  const double sphere_sum = grid.sphere.weights.sum();
  if (std::abs(sphere_sum - 4.0 * kPi) > 1e-10) throw ConfigError("sphere weights do not sum to 4*pi");
  return grid;
}

double inner(const VectorXd& f, const VectorXd& g, const VelocityGrid& grid) {
  if (f.size() != grid.size() || g.size() != grid.size())
    throw DimensionError("inner: field size does not match grid");
  return grid.wm.dot(f.cwiseProduct(g));
}

RawMoments raw_moments(const VectorXd& f, const VelocityGrid& grid) {
  if (f.size() != grid.size()) throw DimensionError("raw_moments: field size does not match grid");
  RawMoments m;
  const VectorXd wf = grid.weights.cwiseProduct(f);
  m.mass = wf.sum();
  m.momentum = grid.nodes.transpose() * wf;
  m.energy = grid.vsq.dot(wf);
  return m;
}

VectorXd project_hydro(const VectorXd& g, const VelocityGrid& grid) {
  if (g.size() != grid.size()) throw DimensionError("project_hydro: field size does not match grid");
  const Eigen::Matrix<double, 5, 1> c = grid.hydro_basis_wm * g;
  return grid.hydro_basis.transpose() * c;
}

VectorXd project_ortho(const VectorXd& g, const VelocityGrid& grid) { return g - project_hydro(g, grid); }

double collision_bracket(const std::function<double(const Vector3d&, const Vector3d&, const Vector3d&)>& F,
                         const VelocityGrid& grid, double kernel_b) {
  if (grid.sphere.nodes.rows() == 0) throw ConfigError("collision_bracket: empty sphere rule");
  if (!(kernel_b > 0.0)) throw ConfigError("collision_bracket: kernel_b must be > 0");
  const int nv = grid.size();
  const int ns = static_cast<int>(grid.sphere.nodes.rows());
  double total = 0.0;
  for (int k = 0; k < nv; ++k) {
    const Vector3d v = grid.nodes.row(k);
    double part = 0.0;
    for (int l = 0; l < nv; ++l) {
      const Vector3d v1 = grid.nodes.row(l);
      double s = 0.0;
      for (int m = 0; m < ns; ++m) s += grid.sphere.weights(m) * F(v, v1, grid.sphere.nodes.row(m));
      part += grid.wm(l) * s;
    }
    total += grid.wm(k) * part;
  }
  return kernel_b * total;
}

}  // namespace entlab

#include "entlab/collision.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace entlab {

namespace {

// Divided-difference weights c_i = 1 / prod_{j != i} (x_i - x_j) over three
// nodes: sum c = 0, sum c x = 0, sum c x^2 = 1.
void second_difference_weights(double a, double b, double c, double* w) {
  w[0] = 1.0 / ((a - b) * (a - c));
  w[1] = 1.0 / ((b - a) * (b - c));
  w[2] = 1.0 / ((c - a) * (c - b));
}

// log(1+p) - p + p^2/2, the cubic-and-higher Taylor remainder, computed
// without cancellation for small p.
double log_remainder(double p) {
  if (std::abs(p) < 0.1) {
    double term = p * p * p;
    double sum = 0.0;
    double sign = 1.0;
    for (int n = 3; n < 60; ++n) {
      const double add = sign * term / n;
      sum += add;
      if (std::abs(add) < 1e-18 * (std::abs(sum) + 1e-300)) break;
      term *= p;
      sign = -sign;
    }
    return sum;
  }
  return std::log1p(p) - p + 0.5 * p * p;
}

// A components at nodes, columns (11,22,33,12,13,23); B components (1,2,3).
MatrixXd a_component_fields(const VelocityGrid& g) {
  MatrixXd out(g.size(), 6);
  for (int k = 0; k < g.size(); ++k) {
    const Vector3d v = g.nodes.row(k);
    const Matrix3d A = tensor_A(v);
    out(k, 0) = A(0, 0);
    out(k, 1) = A(1, 1);
    out(k, 2) = A(2, 2);
    out(k, 3) = A(0, 1);
    out(k, 4) = A(0, 2);
    out(k, 5) = A(1, 2);
  }
  return out;
}

MatrixXd b_component_fields(const VelocityGrid& g) {
  MatrixXd out(g.size(), 3);
  for (int k = 0; k < g.size(); ++k) {
    const Vector3d B = tensor_B(g.nodes.row(k));
    out.row(k) = B.transpose();
  }
  return out;
}

Matrix3d pack_sym(const Eigen::Matrix<double, 6, 1>& c) {
  Matrix3d m;
  m << c(0), c(3), c(4), c(3), c(1), c(5), c(4), c(5), c(2);
  return m;
}

struct FluctuationMomentsV {
  double a = 0.0;
  Vector3d b = Vector3d::Zero();
  double c = 0.0;
};

FluctuationMomentsV v_moments(const VectorXd& g, const VelocityGrid& grid) {
  FluctuationMomentsV m;
  const VectorXd wmg = grid.wm.cwiseProduct(g);
  m.a = wmg.sum();
  m.b = grid.nodes.transpose() * wmg;
  m.c = (grid.vsq.dot(wmg) - 3.0 * m.a) / 3.0;
  return m;
}

}  // namespace

struct CollisionKernel::Cache {
  std::mutex mutex;
  VectorXd inv_w, inv_wm;
  std::shared_ptr<const MatrixXd> dirichlet;
  std::shared_ptr<const MatrixXd> a_hat;
  std::shared_ptr<const MatrixXd> b_hat;
  std::shared_ptr<const TransportCoefficients> coeffs;
};

static CollisionKernel make_kernel(std::shared_ptr<const VelocityGrid> grid, KernelMode mode,
                                   double rate, double b) {
  if (!grid) throw ConfigError("collision kernel needs a grid");
  CollisionKernel k;
  k.mode = mode;
  k.relaxation_rate = rate;
  k.b_const = b;
  k.grid = std::move(grid);
  k.cache = std::make_shared<CollisionKernel::Cache>();
  k.cache->inv_w = k.g().weights.cwiseInverse();
  k.cache->inv_wm = k.g().wm.cwiseInverse();
  return k;
}

CollisionKernel make_bgk_kernel(std::shared_ptr<const VelocityGrid> grid, double relaxation_rate) {
  if (!(relaxation_rate > 0.0)) throw ConfigError("bgk kernel needs relaxation_rate > 0");
  return make_kernel(std::move(grid), KernelMode::bgk, relaxation_rate, 0.0);
}

CollisionKernel make_maxwell_kernel(std::shared_ptr<const VelocityGrid> grid, double b_const) {
  if (!(b_const > 0.0)) throw ConfigError("maxwell_molecules kernel needs b_const > 0");
  return make_kernel(std::move(grid), KernelMode::maxwell_molecules, 1.0, b_const);
}

bool make_eval_stencil(const VelocityGrid& grid, const Vector3d& p, EvalStencil& s) {
  const int n = grid.points_per_axis;
  const auto& x = grid.axis;
  if (p(0) < x.front() || p(0) > x.back() || p(1) < x.front() || p(1) > x.back() ||
      p(2) < x.front() || p(2) > x.back())
    return false;

  int j[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    int hi = static_cast<int>(std::upper_bound(x.begin(), x.end(), p(a)) - x.begin());
    int lo = std::clamp(hi - 1, 0, n - 2);
    j[a] = lo;
    t[a] = (p(a) - x[static_cast<size_t>(lo)]) /
           (x[static_cast<size_t>(lo) + 1] - x[static_cast<size_t>(lo)]);
  }

  // Trilinear part.
  s.n = 0;
  double defect = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double x0 = x[static_cast<size_t>(j[a])];
    const double x1 = x[static_cast<size_t>(j[a]) + 1];
    defect += (1.0 - t[a]) * x0 * x0 + t[a] * x1 * x1 - p(a) * p(a);
  }
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        const double w = (dx ? t[0] : 1.0 - t[0]) * (dy ? t[1] : 1.0 - t[1]) * (dz ? t[2] : 1.0 - t[2]);
        s.idx[static_cast<size_t>(s.n)] = grid.node_index(j[0] + dx, j[1] + dy, j[2] + dz);
        s.w[static_cast<size_t>(s.n)] = w;
        ++s.n;
      }

  // Second-difference correction along axis 0 restores the |v|^2 moment.
  const int near1 = (t[1] < 0.5) ? j[1] : j[1] + 1;
  const int near2 = (t[2] < 0.5) ? j[2] : j[2] + 1;
  const int m = std::clamp((t[0] < 0.5) ? j[0] : j[0] + 1, 1, n - 2);
  double cw[3];
  second_difference_weights(x[static_cast<size_t>(m - 1)], x[static_cast<size_t>(m)],
                            x[static_cast<size_t>(m + 1)], cw);
  for (int r = 0; r < 3; ++r) {
    s.idx[static_cast<size_t>(s.n)] = grid.node_index(m - 1 + r, near1, near2);
    s.w[static_cast<size_t>(s.n)] = -defect * cw[r];
    ++s.n;
  }
  return true;
}

// ---------------------------------------------------------------------------
// BGK pieces

static VectorXd bgk_target_fluctuation(const VectorXd& g, double eps, const VelocityGrid& grid) {
  // (M_f - M)/(eps M) for f = M(1 + eps g), via expm1 of the log ratio.
  const RawMoments m = raw_moments(grid.maxwell_weights.cwiseProduct(VectorXd::Ones(grid.size()) + eps * g),
                                   grid);
  const MaxwellianParams p = from_raw_moments(m);
  VectorXd out(grid.size());
  const double lr = std::log(p.rho) - 1.5 * std::log(p.theta);
  for (int k = 0; k < grid.size(); ++k) {
    const Vector3d v = grid.nodes.row(k);
    const double dlog = lr + 0.5 * grid.vsq(k) - (v - p.u).squaredNorm() / (2.0 * p.theta);
    out(k) = std::expm1(dlog) / eps;
  }
  return out;
}

static VectorXd bgk_bilinear_q(const FluctuationMomentsV& mf, const FluctuationMomentsV& mg,
                               double rate, const VelocityGrid& grid) {
  // Polarization of the quadratic term of the moment-Maxwellian expansion
  // M_f/M = 1 + eps L1 + eps^2 (L2 + L1^2/2) + O(eps^3).
  const double af = mf.a, cf = mf.c, ag = mg.a, cg = mg.c;
  const Vector3d bf = mf.b, bg = mg.b;
  const double s_aa = -0.5 * af * ag;
  const double s_ac = 0.75 * (af * cg + ag * cf);
  const double s_cc = 0.75 * cf * cg;
  const double q_vsq = -0.5 * (cf * cg + 0.5 * (af * cg + ag * cf) + bf.dot(bg) / 3.0);
  const Vector3d q_v = -0.5 * ((af + cf) * bg + (ag + cg) * bf);
  VectorXd out(grid.size());
  for (int k = 0; k < grid.size(); ++k) {
    const Vector3d v = grid.nodes.row(k);
    const double vsq = grid.vsq(k);
    const double l1f = af + bf.dot(v) + cf * (vsq - 3.0) / 2.0;
    const double l1g = ag + bg.dot(v) + cg * (vsq - 3.0) / 2.0;
    out(k) = s_aa + s_ac + s_cc + q_vsq * vsq + q_v.dot(v) + 0.5 * l1f * l1g;
  }
  return rate * out;
}

// ---------------------------------------------------------------------------
// Maxwell-molecules deposits

namespace {

struct DepositBuffers {
  VectorXd out;
};

template <class GammaFn>
void mm_deposit(const CollisionKernel& kernel, const VectorXd& divisor_inv, VectorXd& out,
                GammaFn&& gamma_of) {
  const VelocityGrid& grid = kernel.g();
  detail::for_each_collision_triple(grid, kernel.b_const, [&](const detail::TripleTerm& t) {
    const double gamma = gamma_of(t);
    if (gamma == 0.0) return;
    out(t.k) += gamma * divisor_inv(t.k);
    out(t.l) += gamma * divisor_inv(t.l);
    for (int i = 0; i < t.s1->n; ++i) {
      const int id = t.s1->idx[static_cast<size_t>(i)];
      out(id) -= gamma * t.s1->w[static_cast<size_t>(i)] * divisor_inv(id);
    }
    for (int i = 0; i < t.s2->n; ++i) {
      const int id = t.s2->idx[static_cast<size_t>(i)];
      out(id) -= gamma * t.s2->w[static_cast<size_t>(i)] * divisor_inv(id);
    }
  });
}

}  // namespace

VectorXd collide(const VectorXd& f, const CollisionKernel& kernel) {
  const VelocityGrid& grid = kernel.g();
  if (f.size() != grid.size()) throw DimensionError("collide: field size mismatch");
  if ((f.array() < 0.0).any()) throw PositivityError("collide: negative number density");
  if (kernel.mode == KernelMode::bgk) {
    const MaxwellianParams p = from_raw_moments(raw_moments(f, kernel.g()));
    return kernel.relaxation_rate * (maxwellian_on_grid(p, grid) - f);
  }
  const VectorXd G = f.cwiseQuotient(grid.maxwell_weights);
  VectorXd out = VectorXd::Zero(grid.size());
  mm_deposit(kernel, kernel.cache->inv_w, out, [&](const detail::TripleTerm& t) {
    const double gp = stencil_eval(G, *t.s1);
    const double gp1 = stencil_eval(G, *t.s2);
    return 0.25 * t.weight * (gp * gp1 - G(t.k) * G(t.l));
  });
  return out;
}

VectorXd linearized_L(const VectorXd& g, const CollisionKernel& kernel) {
  const VelocityGrid& grid = kernel.g();
  if (g.size() != grid.size()) throw DimensionError("linearized_L: field size mismatch");
  if (kernel.mode == KernelMode::bgk) return kernel.relaxation_rate * project_ortho(g, grid);
  VectorXd out = VectorXd::Zero(grid.size());
  mm_deposit(kernel, kernel.cache->inv_wm, out, [&](const detail::TripleTerm& t) {
    const double dg = g(t.k) + g(t.l) - stencil_eval(g, *t.s1) - stencil_eval(g, *t.s2);
    return 0.25 * t.weight * dg;
  });
  return out;
}

VectorXd bilinear_Q(const VectorXd& f, const VectorXd& g, const CollisionKernel& kernel) {
  const VelocityGrid& grid = kernel.g();
  if (f.size() != grid.size() || g.size() != grid.size())
    throw DimensionError("bilinear_Q: field size mismatch");
  if (kernel.mode == KernelMode::bgk)
    return bgk_bilinear_q(v_moments(f, grid), v_moments(g, grid), kernel.relaxation_rate, grid);
  VectorXd out = VectorXd::Zero(grid.size());
  mm_deposit(kernel, kernel.cache->inv_wm, out, [&](const detail::TripleTerm& t) {
    const double fp = stencil_eval(f, *t.s1);
    const double fp1 = stencil_eval(f, *t.s2);
    const double gp = stencil_eval(g, *t.s1);
    const double gp1 = stencil_eval(g, *t.s2);
    const double s_prime = gp1 * fp + fp1 * gp;
    const double s_node = g(t.l) * f(t.k) + f(t.l) * g(t.k);
    return 0.125 * t.weight * (s_prime - s_node);
  });
  return out;
}

VectorXd bilinear_Q_sym(const VectorXd& f, const VectorXd& g, const CollisionKernel& kernel) {
  // The mm quadrature is already symmetric in (f,g); bgk polarization too.
  // Kept as the advertised symmetrized entry point.
  return 0.5 * (bilinear_Q(f, g, kernel) + bilinear_Q(g, f, kernel));
}

VectorXd fluctuation_collision(const VectorXd& g, double eps, const CollisionKernel& kernel) {
  const VelocityGrid& grid = kernel.g();
  if (g.size() != grid.size()) throw DimensionError("fluctuation_collision: field size mismatch");
  if (kernel.mode == KernelMode::bgk) {
    const VectorXd h = bgk_target_fluctuation(g, eps, grid);
    return kernel.relaxation_rate * (h - g);
  }
  VectorXd out = VectorXd::Zero(grid.size());
  mm_deposit(kernel, kernel.cache->inv_wm, out, [&](const detail::TripleTerm& t) {
    const double gp = stencil_eval(g, *t.s1);
    const double gp1 = stencil_eval(g, *t.s2);
    const double xy_over_eps = (gp + gp1 - g(t.k) - g(t.l)) + eps * (gp * gp1 - g(t.k) * g(t.l));
    return 0.25 * t.weight * xy_over_eps;
  });
  return out;
}

VectorXd collision_q_remainder(const VectorXd& g, double eps, const CollisionKernel& kernel) {
  if (kernel.mode == KernelMode::maxwell_molecules) return bilinear_Q(g, g, kernel);
  const VelocityGrid& grid = kernel.g();
  const VectorXd h = bgk_target_fluctuation(g, eps, grid);  // (M_f - M)/(eps M)
  return kernel.relaxation_rate * (h - project_hydro(g, grid)) / eps;
}

// ---------------------------------------------------------------------------
// Dirichlet form assembly and the A_hat / B_hat solves

static std::shared_ptr<const MatrixXd> dirichlet_matrix(const CollisionKernel& kernel) {
  auto& cache = *kernel.cache;
  std::lock_guard<std::mutex> lock(cache.mutex);
  if (cache.dirichlet) return cache.dirichlet;
  const VelocityGrid& grid = kernel.g();
  const int nv = grid.size();
  auto S = std::make_shared<MatrixXd>(MatrixXd::Zero(nv, nv));
  detail::for_each_collision_triple(grid, kernel.b_const, [&](const detail::TripleTerm& t) {
    int idx[24];
    double val[24];
    int n = 0;
    idx[n] = t.k;
    val[n++] = 1.0;
    idx[n] = t.l;
    val[n++] = 1.0;
    for (int i = 0; i < t.s1->n; ++i) {
      idx[n] = t.s1->idx[static_cast<size_t>(i)];
      val[n++] = -t.s1->w[static_cast<size_t>(i)];
    }
    for (int i = 0; i < t.s2->n; ++i) {
      idx[n] = t.s2->idx[static_cast<size_t>(i)];
      val[n++] = -t.s2->w[static_cast<size_t>(i)];
    }
    const double c = 0.25 * t.weight;
    for (int i = 0; i < n; ++i) {
      const double cv = c * val[i];
      for (int j = 0; j <= i; ++j) (*S)(idx[i], idx[j]) += cv * val[j];
    }
  });
  // Mirror the accumulated lower triangle.
  for (int i = 0; i < nv; ++i)
    for (int j = i + 1; j < nv; ++j) (*S)(i, j) = (*S)(j, i);
  cache.dirichlet = S;
  return S;
}

VectorXd solve_hat(const VectorXd& h, const CollisionKernel& kernel) {
  const VelocityGrid& grid = kernel.g();
  if (h.size() != grid.size()) throw DimensionError("solve_hat: field size mismatch");
  const double hnorm = std::sqrt(inner(h, h, grid));
  const VectorXd ph = project_hydro(h, grid);
  if (std::sqrt(inner(ph, ph, grid)) > 1e-8 * std::max(1.0, hnorm))
    throw ConfigError("solve_hat: input has a hydrodynamic component");
  if (kernel.mode == KernelMode::bgk) return h / kernel.relaxation_rate;

  const auto S = dirichlet_matrix(kernel);
  const VectorXd& inv_wm = kernel.cache->inv_wm;
  auto apply_L = [&](const VectorXd& x) -> VectorXd { return ((*S) * x).cwiseProduct(inv_wm); };

  // CG in the <.,.> inner product with re-projection to N^perp each iteration.
  const double tol = 1e-10 * std::max(1.0, hnorm);
  VectorXd x = VectorXd::Zero(grid.size());
  VectorXd r = project_ortho(h, grid);
  VectorXd p = r;
  double rr = inner(r, r, grid);
  for (int it = 0; it < 10000; ++it) {
    if (std::sqrt(rr) <= tol) {
      return x;
    }
    const VectorXd Lp = apply_L(p);
    const double pLp = inner(p, Lp, grid);
    if (!(pLp > 0.0)) throw SolverError("solve_hat: curvature lost, residual " + std::to_string(std::sqrt(rr)));
    const double alpha = rr / pLp;
    x += alpha * p;
    x = project_ortho(x, grid);
    r -= alpha * Lp;
    r = project_ortho(r, grid);
    const double rr_new = inner(r, r, grid);
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  throw SolverError("solve_hat: no convergence, residual " + std::to_string(std::sqrt(rr)));
}

const MatrixXd& a_hat_fields(const CollisionKernel& kernel) {
  auto& cache = *kernel.cache;
  {
    std::lock_guard<std::mutex> lock(cache.mutex);
    if (cache.a_hat) return *cache.a_hat;
  }
  const VelocityGrid& grid = kernel.g();
  const MatrixXd A = a_component_fields(grid);
  auto out = std::make_shared<MatrixXd>(grid.size(), 6);
  for (int c = 0; c < 6; ++c) {
    if (kernel.mode == KernelMode::bgk)
      out->col(c) = A.col(c) / kernel.relaxation_rate;
    else
      out->col(c) = solve_hat(project_ortho(A.col(c), grid), kernel);
  }
  std::lock_guard<std::mutex> lock(cache.mutex);
  if (!cache.a_hat) cache.a_hat = out;
  return *cache.a_hat;
}

const MatrixXd& b_hat_fields(const CollisionKernel& kernel) {
  auto& cache = *kernel.cache;
  {
    std::lock_guard<std::mutex> lock(cache.mutex);
    if (cache.b_hat) return *cache.b_hat;
  }
  const VelocityGrid& grid = kernel.g();
  const MatrixXd B = b_component_fields(grid);
  auto out = std::make_shared<MatrixXd>(grid.size(), 3);
  for (int c = 0; c < 3; ++c) {
    if (kernel.mode == KernelMode::bgk)
      out->col(c) = B.col(c) / kernel.relaxation_rate;
    else
      out->col(c) = solve_hat(project_ortho(B.col(c), grid), kernel);
  }
  std::lock_guard<std::mutex> lock(cache.mutex);
  if (!cache.b_hat) cache.b_hat = out;
  return *cache.b_hat;
}

TransportCoefficients transport_coefficients(const CollisionKernel& kernel) {
  {
    std::lock_guard<std::mutex> lock(kernel.cache->mutex);
    if (kernel.cache->coeffs) return *kernel.cache->coeffs;
  }
  const VelocityGrid& grid = kernel.g();
  const MatrixXd A = a_component_fields(grid);
  const MatrixXd B = b_component_fields(grid);
  const MatrixXd& Ah = a_hat_fields(kernel);
  const MatrixXd& Bh = b_hat_fields(kernel);
  TransportCoefficients tc;
  double a_sum = 0.0;
  for (int c = 0; c < 6; ++c) {
    const double mult = (c < 3) ? 1.0 : 2.0;  // off-diagonal components appear twice
    a_sum += mult * inner(A.col(c), Ah.col(c), grid);
  }
  tc.mu = a_sum / 10.0;
  double b_sum = 0.0;
  for (int c = 0; c < 3; ++c) b_sum += inner(B.col(c), Bh.col(c), grid);
  tc.kappa = 2.0 * b_sum / 15.0;
  if (kernel.mode == KernelMode::maxwell_molecules) {
    double res = 0.0;
    for (int c = 0; c < 6; ++c) {
      const VectorXd r = linearized_L(Ah.col(c), kernel) - project_ortho(A.col(c), grid);
      res = std::max(res, std::sqrt(inner(r, r, grid)));
    }
    for (int c = 0; c < 3; ++c) {
      const VectorXd r = linearized_L(Bh.col(c), kernel) - project_ortho(B.col(c), grid);
      res = std::max(res, std::sqrt(inner(r, r, grid)));
    }
    tc.solver_residual = res;
  }
  std::lock_guard<std::mutex> lock(kernel.cache->mutex);
  if (!kernel.cache->coeffs) kernel.cache->coeffs = std::make_shared<const TransportCoefficients>(tc);
  return tc;
}

// ---------------------------------------------------------------------------
// Entropy dissipation and the q machinery

double entropy_dissipation(const VectorXd& f, const CollisionKernel& kernel) {
  const VelocityGrid& grid = kernel.g();
  if (f.size() != grid.size()) throw DimensionError("entropy_dissipation: field size mismatch");
  if ((f.array() <= 0.0).any()) throw PositivityError("entropy_dissipation: f must be positive");
  if (kernel.mode == KernelMode::bgk) {
    const MaxwellianParams p = from_raw_moments(raw_moments(f, grid));
    const VectorXd mf = maxwellian_on_grid(p, grid);
    double d = 0.0;
    for (int k = 0; k < grid.size(); ++k)
      d += grid.weights(k) * (f(k) - mf(k)) * (std::log(f(k)) - std::log(mf(k)));
    return kernel.relaxation_rate * d;
  }
  const VectorXd G = f.cwiseQuotient(grid.maxwell_weights);
  double d = 0.0;
  detail::for_each_collision_triple(grid, kernel.b_const, [&](const detail::TripleTerm& t) {
    const double x = stencil_eval(G, *t.s1) * stencil_eval(G, *t.s2);
    const double y = G(t.k) * G(t.l);
    if (!(x > 0.0)) throw PositivityError("entropy_dissipation: interpolated density non-positive");
    d += 0.25 * t.weight * (x - y) * (std::log(x) - std::log(y));
  });
  return d;
}

DissipationStats dissipation_stats(const VectorXd& g, double eps, const CollisionKernel& kernel) {
  if (kernel.mode != KernelMode::maxwell_molecules)
    throw ConfigError("dissipation_stats requires maxwell_molecules mode");
  const VelocityGrid& grid = kernel.g();
  if (g.size() != grid.size()) throw DimensionError("dissipation_stats: field size mismatch");
  DissipationStats st;
  std::array<double, 5> inv_cancel{};
  detail::for_each_collision_triple(grid, kernel.b_const, [&](const detail::TripleTerm& t) {
    const double gp = stencil_eval(g, *t.s1);
    const double gp1 = stencil_eval(g, *t.s2);
    const double gk = g(t.k), gl = g(t.l);
    const double q = (gp + gp1 - gk - gl) / eps + (gp * gp1 - gk * gl);
    const double Pp = eps * (gp + gp1) + eps * eps * gp * gp1;   // G'G'1 - 1
    const double Pn = eps * (gk + gl) + eps * eps * gk * gl;     // G G1 - 1
    const double x = 1.0 + Pp, y = 1.0 + Pn;
    if (!(x > 0.0) || !(y > 0.0))
      throw PositivityError("dissipation_stats: reconstructed density non-positive");
    const double w4 = 0.25 * t.weight;
    st.d_over_eps4 += w4 * (x - y) * (std::log(x) - std::log(y)) / (eps * eps * eps * eps);
    st.quarter_q2 += w4 * q * q;
    const double r3 = log_remainder(Pp);
    const double r4 = log_remainder(Pn);
    st.r11 += w4 * (-0.5 * q * q * (Pp + Pn) + q * (r3 - r4) / (eps * eps));
    st.r3_mag += t.weight * std::abs(r3) / (eps * eps);
    st.r4_mag += t.weight * std::abs(r4) / (eps * eps);
    // Collision-invariant cancellation: << q (phi + phi1 - phi' - phi'1) >>.
    const Vector3d dv = t.vk + t.vl - t.vp - t.vp1;
    const double de = t.vk.squaredNorm() + t.vl.squaredNorm() - t.vp.squaredNorm() - t.vp1.squaredNorm();
    inv_cancel[0] += t.weight * q * 0.0;  // phi = 1 cancels identically
    for (int c = 0; c < 3; ++c) inv_cancel[static_cast<size_t>(1 + c)] += t.weight * q * dv(c);
    inv_cancel[4] += t.weight * q * de;
  });
  st.closure_defect = st.d_over_eps4 - st.quarter_q2 - st.r11;
  for (double v : inv_cancel) st.invariant_cancellation = std::max(st.invariant_cancellation, std::abs(v));
  return st;
}

QBrackets q_brackets(const VectorXd& g, double eps, const CollisionKernel& kernel) {
  if (kernel.mode != KernelMode::maxwell_molecules)
    throw ConfigError("q_brackets requires maxwell_molecules mode");
  const VelocityGrid& grid = kernel.g();
  const MatrixXd& Ah = a_hat_fields(kernel);
  const MatrixXd& Bh = b_hat_fields(kernel);
  QBrackets out;
  Eigen::Matrix<double, 6, 1> aq = Eigen::Matrix<double, 6, 1>::Zero();
  detail::for_each_collision_triple(grid, kernel.b_const, [&](const detail::TripleTerm& t) {
    const double gp = stencil_eval(g, *t.s1);
    const double gp1 = stencil_eval(g, *t.s2);
    const double q = (gp + gp1 - g(t.k) - g(t.l)) / eps + (gp * gp1 - g(t.k) * g(t.l));
    out.q2 += t.weight * q * q;
    const double wq = 0.25 * t.weight * q;
    for (int c = 0; c < 6; ++c) {
      const double tc = Ah(t.k, c) + Ah(t.l, c) - stencil_eval(Ah.col(c), *t.s1) -
                        stencil_eval(Ah.col(c), *t.s2);
      aq(c) += wq * tc;
    }
    for (int c = 0; c < 3; ++c) {
      const double tc = Bh(t.k, c) + Bh(t.l, c) - stencil_eval(Bh.col(c), *t.s1) -
                        stencil_eval(Bh.col(c), *t.s2);
      out.b_hat_q(c) += wq * tc;
    }
  });
  out.a_hat_q = pack_sym(aq);
  return out;
}

BglReport bgl_random_slack(const CollisionKernel& kernel, int n_fields, std::uint64_t seed) {
  if (kernel.mode != KernelMode::maxwell_molecules)
    throw ConfigError("bgl_random_slack requires maxwell_molecules mode (consistent A_hat, mu, kappa)");
  const VelocityGrid& grid = kernel.g();
  const MatrixXd& Ah = a_hat_fields(kernel);
  const MatrixXd& Bh = b_hat_fields(kernel);
  const TransportCoefficients tc = transport_coefficients(kernel);

  constexpr int nf = 18;
  auto features = [](const Vector3d& v, const Vector3d& v1, const Vector3d& s,
                     std::array<double, nf>& F) {
    F[0] = 1.0;
    F[1] = v(0);
    F[2] = v(1);
    F[3] = v(2);
    F[4] = v1(0);
    F[5] = v1(1);
    F[6] = v1(2);
    F[7] = s(0);
    F[8] = s(1);
    F[9] = s(2);
    F[10] = v.dot(v1);
    F[11] = v.squaredNorm() - 3.0;
    F[12] = v1.squaredNorm() - 3.0;
    F[13] = s.dot(v);
    F[14] = s.dot(v1);
    F[15] = v(0) * v1(1);
    F[16] = s.dot(v) * s.dot(v1);
    F[17] = v(0) * v(1);
  };

  Eigen::Matrix<double, nf, nf> gram = Eigen::Matrix<double, nf, nf>::Zero();
  Eigen::Matrix<double, 6, nf> ta = Eigen::Matrix<double, 6, nf>::Zero();
  Eigen::Matrix<double, 3, nf> tb = Eigen::Matrix<double, 3, nf>::Zero();

  std::array<double, nf> F{}, Fr{};
  detail::for_each_collision_triple(kernel.g(), kernel.b_const, [&](const detail::TripleTerm& t) {
    features(t.vk, t.vl, t.sigma, F);
    features(t.vl, t.vk, t.sigma, Fr);
    const double hw = 0.5 * t.weight;  // split the unordered-pair weight over both orientations
    double TA[6], TB[3];
    for (int c = 0; c < 6; ++c)
      TA[c] = Ah(t.k, c) + Ah(t.l, c) - stencil_eval(Ah.col(c), *t.s1) - stencil_eval(Ah.col(c), *t.s2);
    for (int c = 0; c < 3; ++c)
      TB[c] = Bh(t.k, c) + Bh(t.l, c) - stencil_eval(Bh.col(c), *t.s1) - stencil_eval(Bh.col(c), *t.s2);
    for (int i = 0; i < nf; ++i) {
      for (int j = 0; j <= i; ++j) gram(i, j) += hw * (F[static_cast<size_t>(i)] * F[static_cast<size_t>(j)] +
                                                       Fr[static_cast<size_t>(i)] * Fr[static_cast<size_t>(j)]);
      const double fs = hw * (F[static_cast<size_t>(i)] + Fr[static_cast<size_t>(i)]);
      for (int c = 0; c < 6; ++c) ta(c, i) += 0.25 * TA[c] * fs;
      for (int c = 0; c < 3; ++c) tb(c, i) += 0.25 * TB[c] * fs;
    }
  });
  for (int i = 0; i < nf; ++i)
    for (int j = i + 1; j < nf; ++j) gram(i, j) = gram(j, i);

  std::mt19937_64 rng(seed);
  auto uniform = [&rng]() { return 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0; };
  BglReport rep;
  rep.slacks.resize(n_fields);
  for (int s = 0; s < n_fields; ++s) {
    Eigen::Matrix<double, nf, 1> c;
    for (int i = 0; i < nf; ++i) c(i) = uniform();
    const double q2 = c.dot(gram * c);
    const Eigen::Matrix<double, 6, 1> aq6 = ta * c;
    const Matrix3d X = pack_sym(aq6);
    const Vector3d Y = tb * c;
    const double slack = 0.25 * q2 - 0.5 / tc.mu * (X.array() * X.array()).sum() -
                         0.4 / tc.kappa * Y.squaredNorm();
    rep.slacks(s) = slack;
  }
  rep.min_slack = rep.slacks.minCoeff();
  return rep;
}

}  // namespace entlab

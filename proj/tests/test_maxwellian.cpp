#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "entlab/maxwellian.hpp"
#include "oracles.hpp"

using namespace entlab;

namespace {
constexpr double kPi = 3.14159265358979323846;

ParamsField random_params_field(const SpatialGrid& sg, oracle::Rng& rng, double amp) {
  ParamsField p;
  p.rho = 1.0 + oracle::smooth_field(sg.x(), rng, amp);
  p.theta = 1.0 + oracle::smooth_field(sg.x(), rng, amp);
  p.u.resize(sg.cells(), 3);
  for (int c = 0; c < 3; ++c) p.u.col(c) = oracle::smooth_field(sg.x(), rng, amp).matrix();
  return p;
}
}  // namespace

TEST_CASE("maxwellian evaluation closed forms") {
  const double pref = std::pow(2.0 * kPi, -1.5);
  CHECK(maxwellian_eval(MaxwellianParams(1.0, Vector3d::Zero(), 1.0), Vector3d::Zero()) ==
        doctest::Approx(pref).epsilon(1e-14));
  CHECK(pref == doctest::Approx(0.063494).epsilon(1e-5));
  CHECK(maxwellian_eval(MaxwellianParams(2.0, Vector3d::Zero(), 1.0), Vector3d::Zero()) ==
        doctest::Approx(2.0 * pref).epsilon(1e-14));
  CHECK(maxwellian_eval(MaxwellianParams(1.0, Vector3d(1, 0, 0), 1.0), Vector3d(1, 0, 0)) ==
        doctest::Approx(pref).epsilon(1e-14));
  CHECK_THROWS_AS(MaxwellianParams(-1.0, Vector3d::Zero(), 1.0), DegenerateMomentsError);
  CHECK_THROWS_AS(MaxwellianParams(1.0, Vector3d::Zero(), 0.0), DegenerateMomentsError);
}

TEST_CASE("from_raw_moments closed-form inversion") {
  RawMoments m;
  m.mass = 1.0;
  m.momentum = Vector3d::Zero();
  m.energy = 3.0;
  auto p = from_raw_moments(m);
  CHECK(p.rho == doctest::Approx(1.0));
  CHECK(p.theta == doctest::Approx(1.0));

  m.mass = 2.0;
  m.momentum = Vector3d(2, 0, 0);
  m.energy = 8.0;
  p = from_raw_moments(m);
  CHECK(p.rho == doctest::Approx(2.0));
  CHECK(p.u(0) == doctest::Approx(1.0));
  CHECK(p.theta == doctest::Approx(1.0));  // (4 - 1)/3

  m.energy = 2.0 * m.momentum.squaredNorm() / m.mass / 2.0;  // degenerate
  CHECK_THROWS_AS(from_raw_moments(m), DegenerateMomentsError);
  m.mass = -1.0;
  CHECK_THROWS_AS(from_raw_moments(m), DegenerateMomentsError);
}

TEST_CASE("moment inversion of a perturbed Maxwellian matches the appendix expansion") {
  const auto g = build_grid(16, VelocityRule::gauss_hermite);
  const double eps = 0.05;
  // f = M(1 + eps v1): u_f = (eps,0,0), theta_f = 1 - eps^2/3.
  VectorXd f(g.size());
  for (int k = 0; k < g.size(); ++k) f(k) = g.maxwell_weights(k) * (1.0 + eps * g.nodes(k, 0));
  const auto p = from_raw_moments(raw_moments(f, g));
  CHECK(p.rho == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.u(0) == doctest::Approx(eps).epsilon(1e-12));
  CHECK(p.theta == doctest::Approx(1.0 - eps * eps / 3.0).epsilon(1e-12));
}

TEST_CASE("from_raw_moments roundtrip on random parameters") {
  const auto g = build_grid(16, VelocityRule::gauss_hermite);
  oracle::Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const MaxwellianParams p(1.0 + 0.3 * rng.uniform(),
                             0.3 * Vector3d(rng.uniform(), rng.uniform(), rng.uniform()),
                             1.0 + 0.3 * rng.uniform());
    const auto q = from_raw_moments(raw_moments(maxwellian_on_grid(p, g), g));
    CHECK(q.rho == doctest::Approx(p.rho).epsilon(1e-10));
    CHECK(q.theta == doctest::Approx(p.theta).epsilon(1e-10));
    for (int c = 0; c < 3; ++c) CHECK(q.u(c) == doctest::Approx(p.u(c)).epsilon(1e-10));
  }
}

TEST_CASE("tensor A and B pointwise") {
  const Matrix3d A = tensor_A(Vector3d(1, 0, 0));
  CHECK(A(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(A(1, 1) == doctest::Approx(-1.0 / 3.0));
  CHECK(A(2, 2) == doctest::Approx(-1.0 / 3.0));
  CHECK(tensor_A(Vector3d::Zero()).norm() == 0.0);
  CHECK(tensor_B(Vector3d::Zero()).norm() == 0.0);
  CHECK((tensor_B(Vector3d(1, 1, 1)) - Vector3d(-1, -1, -1)).norm() < 1e-14);
  oracle::Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const Vector3d V(rng.uniform() * 3, rng.uniform() * 3, rng.uniform() * 3);
    CHECK(std::abs(tensor_A(V).trace()) < 1e-14);
    CHECK((tensor_B(-V) + tensor_B(V)).norm() < 1e-14);
  }
}

TEST_CASE("A and B lie in the orthogonal complement of the invariants") {
  const auto g = build_grid(12, VelocityRule::gauss_hermite);
  const VectorXd one = VectorXd::Ones(g.size());
  for (int c = 0; c < 6; ++c) {
    VectorXd comp(g.size());
    const int ii[6] = {0, 1, 2, 0, 0, 1};
    const int jj[6] = {0, 1, 2, 1, 2, 2};
    for (int k = 0; k < g.size(); ++k)
      comp(k) = tensor_A(g.nodes.row(k))(ii[c], jj[c]);
    CHECK(std::abs(inner(comp, one, g)) < 1e-10);
    for (int d = 0; d < 3; ++d)
      CHECK(std::abs(inner(comp, VectorXd(g.nodes.col(d)), g)) < 1e-10);
    CHECK(std::abs(inner(comp, g.vsq, g)) < 1e-10);
  }
  for (int c = 0; c < 3; ++c) {
    VectorXd comp(g.size());
    for (int k = 0; k < g.size(); ++k) comp(k) = tensor_B(g.nodes.row(k))(c);
    CHECK(std::abs(inner(comp, one, g)) < 1e-10);
    for (int d = 0; d < 3; ++d)
      CHECK(std::abs(inner(comp, VectorXd(g.nodes.col(d)), g)) < 1e-10);
    CHECK(std::abs(inner(comp, g.vsq, g)) < 1e-10);
  }
}

TEST_CASE("transport identity: constant fields give zero") {
  SpatialGrid sg(16);
  const auto vg = build_grid(6, VelocityRule::gauss_hermite);
  ParamsField p;
  p.rho = ArrayXd::Constant(sg.cells(), 1.3);
  p.theta = ArrayXd::Constant(sg.cells(), 0.9);
  p.u = Vec3Field::Constant(sg.cells(), 3, 0.2);
  const MatrixXd rhs = log_maxwellian_transport(p, sg, vg);
  CHECK(rhs.cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("transport identity: pure density gradient") {
  SpatialGrid sg(32);
  const auto vg = build_grid(6, VelocityRule::gauss_hermite);
  ParamsField p;
  p.rho = 1.0 + 0.1 * sg.x().sin();
  p.theta = ArrayXd::Ones(sg.cells());
  p.u = Vec3Field::Zero(sg.cells(), 3);
  const MatrixXd rhs = log_maxwellian_transport(p, sg, vg);
  // v . grad log rho = v1 * 0.1 cos(x) / rho
  const ArrayXd dlogrho = 0.1 * sg.x().cos() / p.rho;
  for (int k = 0; k < vg.size(); ++k)
    for (int i = 0; i < sg.cells(); ++i)
      CHECK(rhs(i, k) == doctest::Approx(vg.nodes(k, 0) * dlogrho(i)).epsilon(1e-8));
}

TEST_CASE("transport identity matches the direct derivative on random smooth fields") {
  SpatialGrid sg(64);
  const auto vg = build_grid(6, VelocityRule::gauss_hermite);
  oracle::Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const ParamsField p = random_params_field(sg, rng, 0.15);
    const MatrixXd rhs = log_maxwellian_transport(p, sg, vg);
    const MatrixXd direct = log_maxwellian_transport_direct(p, sg, vg);
    CHECK((rhs - direct).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("transport identity rejects rough fields") {
  SpatialGrid sg(32);
  const auto vg = build_grid(4, VelocityRule::gauss_hermite);
  ParamsField p;
  p.rho = ArrayXd::Ones(sg.cells());
  p.theta = ArrayXd::Ones(sg.cells());
  p.u = Vec3Field::Zero(sg.cells(), 3);
  // Sawtooth density: spectral tail dominated.
  for (int i = 0; i < sg.cells(); ++i) p.rho(i) += 0.2 * ((i % 2 == 0) ? 1.0 : -1.0);
  CHECK_THROWS_AS(log_maxwellian_transport(p, sg, vg), NonSmoothFieldError);
}

TEST_CASE("linearized transport identity") {
  SpatialGrid sg(32);
  const auto vg = build_grid(6, VelocityRule::gauss_hermite);

  // Constant u, zero rho/theta: zero.
  {
    ArrayXd z = ArrayXd::Zero(sg.cells());
    Vec3Field u = Vec3Field::Constant(sg.cells(), 3, 0.7);
    CHECK(linearized_transport(z, u, z, sg, vg).cwiseAbs().maxCoeff() < 1e-13);
  }
  // rho = sin x1, rest zero: RHS = cos(x1) v1.
  {
    ArrayXd rho = sg.x().sin();
    ArrayXd z = ArrayXd::Zero(sg.cells());
    Vec3Field u = Vec3Field::Zero(sg.cells(), 3);
    const MatrixXd rhs = linearized_transport(rho, u, z, sg, vg);
    for (int k = 0; k < vg.size(); ++k)
      for (int i = 0; i < sg.cells(); ++i)
        CHECK(rhs(i, k) == doctest::Approx(std::cos(sg.x()(i)) * vg.nodes(k, 0)).epsilon(1e-10));
  }
  // Random smooth fields: RHS equals v . grad_x g for the hydrodynamic g.
  oracle::Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    const ArrayXd rho = oracle::smooth_field(sg.x(), rng, 0.3);
    const ArrayXd theta = oracle::smooth_field(sg.x(), rng, 0.3);
    Vec3Field u(sg.cells(), 3);
    for (int c = 0; c < 3; ++c) u.col(c) = oracle::smooth_field(sg.x(), rng, 0.3).matrix();
    const MatrixXd rhs = linearized_transport(rho, u, theta, sg, vg);
    const MatrixXd g = hydrodynamic_field(rho, u, theta, sg, vg);
    MatrixXd direct(sg.cells(), vg.size());
    for (int k = 0; k < vg.size(); ++k)
      direct.col(k) = (vg.nodes(k, 0) * sg.deriv(g.col(k).array())).matrix();
    CHECK((rhs - direct).cwiseAbs().maxCoeff() < 1e-8);
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "entlab/velocity_grid.hpp"
#include "oracles.hpp"

using namespace entlab;

namespace {
constexpr double kPi = 3.14159265358979323846;

VectorXd monomial(const VelocityGrid& g, int a, int b, int c) {
  VectorXd f(g.size());
  for (int k = 0; k < g.size(); ++k)
    f(k) = std::pow(g.nodes(k, 0), a) * std::pow(g.nodes(k, 1), b) * std::pow(g.nodes(k, 2), c);
  return f;
}

const VectorXd ones(const VelocityGrid& g) { return VectorXd::Ones(g.size()); }
}  // namespace

TEST_CASE("gauss-hermite normalization and size") {
  const auto g = build_grid(4, VelocityRule::gauss_hermite);
  CHECK(g.size() == 64);
  CHECK(g.wm.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("gauss-hermite radial moments on 24 points") {
  const auto g = build_grid(24, VelocityRule::gauss_hermite);
  CHECK(std::abs(inner(ones(g), ones(g), g) - 1.0) < 1e-10);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      VectorXd vi = g.nodes.col(i), vj = g.nodes.col(j);
      const double expect = (i == j) ? 1.0 : 0.0;
      CHECK(std::abs(inner(vi, vj, g) - expect) < 1e-10);
    }
  const VectorXd vsq = g.vsq;
  CHECK(std::abs(inner(vsq, ones(g), g) - 3.0) < 1e-10);
  CHECK(std::abs(inner(vsq, vsq, g) - oracle::gaussian_radial_moment(2)) < 1e-10);  // 15
  VectorXd v6(g.size());
  for (int k = 0; k < g.size(); ++k) v6(k) = std::pow(g.vsq(k), 3);
  CHECK(oracle::gaussian_radial_moment(2) == 15.0);
  CHECK(oracle::gaussian_radial_moment(3) == 105.0);
  CHECK(std::abs(inner(v6, ones(g), g) - 105.0) < 1e-10);
}

TEST_CASE("gauss-hermite exactness against the separable-moment oracle") {
  const int n = 6;
  const auto g = build_grid(n, VelocityRule::gauss_hermite);
  // All monomials of per-axis degree <= 2n-1 integrate exactly (machine
  // precision relative to the even-moment magnitude).
  for (int a = 0; a <= 2 * n - 1; a += 2)
    for (int b = 0; b <= 7; b += 1)
      for (int c = 0; c <= 4; c += 2) {
        const double got = inner(monomial(g, a, b, c), ones(g), g);
        const double expect = oracle::gaussian_moment(a, b, c);
        const double scale = std::sqrt(oracle::gaussian_moment(2 * a, 0, 0) *
                                       oracle::gaussian_moment(0, 2 * b, 0) *
                                       oracle::gaussian_moment(0, 0, 2 * c));
        CHECK(std::abs(got - expect) < 1e-13 * std::max(1.0, scale));
      }
}

TEST_CASE("uniform cell-centered grid normalization") {
  const auto g = build_grid(8, VelocityRule::uniform_trapezoid, 6.0, 6, 12, 1e-2);
  const double norm = g.wm.sum();
  CHECK(norm > 0.999);
  CHECK(norm < 1.001);
}

TEST_CASE("grids are symmetric under v -> -v") {
  for (auto rule : {VelocityRule::gauss_hermite, VelocityRule::uniform_trapezoid}) {
    const auto g = build_grid(6, rule, 5.0, 6, 12, rule == VelocityRule::uniform_trapezoid ? 1e-2 : -1.0);
    for (int k = 0; k < g.size(); ++k) {
      const Vector3d neg = -Vector3d(g.nodes.row(k));
      bool found = false;
      for (int l = 0; l < g.size(); ++l)
        if ((Vector3d(g.nodes.row(l)) - neg).norm() < 1e-12) {
          found = true;
          CHECK(g.weights(l) == doctest::Approx(g.weights(k)));
          break;
        }
      CHECK(found);
    }
    CHECK((g.weights.array() > 0.0).all());
  }
}

TEST_CASE("grid construction rejects bad input") {
  CHECK_THROWS_AS(build_grid(3, VelocityRule::gauss_hermite), ConfigError);
  CHECK_THROWS_AS(build_grid(8, VelocityRule::uniform_trapezoid, 0.0), ConfigError);
  CHECK_THROWS_AS(build_grid(8, VelocityRule::gauss_hermite, 0.0, 6, 11), ConfigError);
}

TEST_CASE("inner product examples and bilinearity") {
  const auto g = build_grid(12, VelocityRule::gauss_hermite);
  const VectorXd one = ones(g);
  CHECK(std::abs(inner(one, one, g) - 1.0) < 1e-12);
  CHECK(std::abs(inner(g.v1, g.v2, g)) < 1e-12);
  CHECK(std::abs(inner(g.v1, g.v1, g) - 1.0) < 1e-12);
  oracle::Rng rng(11);
  const VectorXd f = oracle::random_velocity_poly(g.nodes, rng, 1.0);
  const VectorXd h = oracle::random_velocity_poly(g.nodes, rng, 1.0);
  CHECK(inner(f, h, g) == doctest::Approx(inner(h, f, g)).epsilon(1e-13));
  CHECK(inner(f + h, h, g) ==
        doctest::Approx(inner(f, h, g) + inner(h, h, g)).epsilon(1e-12));
  VectorXd bad(3);
  CHECK_THROWS_AS(inner(bad, h, g), DimensionError);
}

TEST_CASE("raw moments of Maxwellians") {
  const auto g = build_grid(16, VelocityRule::gauss_hermite);
  auto check = [&](double rho, const Vector3d& u, double theta, double energy) {
    VectorXd f(g.size());
    for (int k = 0; k < g.size(); ++k) {
      const Vector3d v = g.nodes.row(k);
      f(k) = rho * std::pow(2 * kPi * theta, -1.5) * std::exp(-(v - u).squaredNorm() / (2 * theta));
    }
    const RawMoments m = raw_moments(f, g);
    CHECK(m.mass == doctest::Approx(rho).epsilon(1e-10));
    for (int c = 0; c < 3; ++c) CHECK(m.momentum(c) == doctest::Approx(rho * u(c)).epsilon(1e-10));
    CHECK(m.energy == doctest::Approx(energy).epsilon(1e-10));
  };
  check(1.0, Vector3d::Zero(), 1.0, 3.0);
  check(2.0, Vector3d::Zero(), 1.0, 6.0);
  check(1.0, Vector3d(1, 0, 0), 1.0, 4.0);  // 3*theta + |u|^2
}

TEST_CASE("hydrodynamic projection") {
  const auto g = build_grid(10, VelocityRule::gauss_hermite);
  // Fixed point.
  VectorXd f = VectorXd::Ones(g.size()) + g.v1;
  CHECK((project_hydro(f, g) - f).cwiseAbs().maxCoeff() < 1e-12);
  // v1^2 -> |v|^2/3.
  VectorXd v1sq = g.v1.cwiseProduct(g.v1);
  CHECK((project_hydro(v1sq, g) - g.vsq / 3.0).cwiseAbs().maxCoeff() < 1e-10);
  // v1^3 -> 3 v1.
  VectorXd v1cu = v1sq.cwiseProduct(g.v1);
  CHECK((project_hydro(v1cu, g) - 3.0 * g.v1).cwiseAbs().maxCoeff() < 1e-10);

  oracle::Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    const VectorXd r = oracle::random_velocity_poly(g.nodes, rng, 1.0);
    const VectorXd p = project_hydro(r, g);
    CHECK((project_hydro(p, g) - p).cwiseAbs().maxCoeff() < 1e-12);
    const VectorXd orth = project_ortho(r, g);
    CHECK(std::abs(inner(orth, VectorXd::Ones(g.size()), g)) < 1e-10);
    for (int c = 0; c < 3; ++c)
      CHECK(std::abs(inner(orth, VectorXd(g.nodes.col(c)), g)) < 1e-10);
    CHECK(std::abs(inner(orth, g.vsq, g)) < 1e-10);
  }
}

TEST_CASE("projection is idempotent on the uniform grid too") {
  const auto g = build_grid(8, VelocityRule::uniform_trapezoid, 5.0, 6, 12, 1e-2);
  oracle::Rng rng(7);
  const VectorXd r = oracle::random_velocity_poly(g.nodes, rng, 1.0);
  const VectorXd p = project_hydro(r, g);
  CHECK((project_hydro(p, g) - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("collision bracket quadratures") {
  const auto g = build_grid(8, VelocityRule::gauss_hermite);
  const double four_pi = 4.0 * kPi;
  const double b1 = collision_bracket([](const Vector3d&, const Vector3d&, const Vector3d&) { return 1.0; },
                                      g, 1.0);
  CHECK(b1 == doctest::Approx(four_pi).epsilon(1e-12));
  const double bvv = collision_bracket(
      [](const Vector3d& v, const Vector3d& v1, const Vector3d&) { return v.dot(v1); }, g, 1.0);
  CHECK(std::abs(bvv) < 1e-12);
  const double bv2 = collision_bracket(
      [](const Vector3d& v, const Vector3d&, const Vector3d&) { return v.squaredNorm(); }, g, 1.0);
  CHECK(bv2 == doctest::Approx(3.0 * four_pi).epsilon(1e-12));  // 12 pi
  CHECK_THROWS_AS(collision_bracket([](const Vector3d&, const Vector3d&, const Vector3d&) { return 1.0; },
                                    g, 0.0),
                  ConfigError);
}

#pragma once

// Test-only oracles, independent of the library's quadrature path.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

namespace oracle {

// (n-1)!! with (-1)!! = 1.
inline double double_factorial(int n) {
  double r = 1.0;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

// E[v1^a v2^b v3^c] for v ~ N(0, I3): closed-form separable Gaussian moments.
inline double gaussian_moment(int a, int b, int c) {
  if (a % 2 || b % 2 || c % 2) return 0.0;
  return double_factorial(a - 1) * double_factorial(b - 1) * double_factorial(c - 1);
}

// E|v|^(2n) by multinomial expansion of (v1^2+v2^2+v3^2)^n.
inline double gaussian_radial_moment(int n) {
  double sum = 0.0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; i + j <= n; ++j) {
      const int k = n - i - j;
      double multinom = 1.0;
      for (int t = 1; t <= n; ++t) multinom *= t;
      for (int t = 1; t <= i; ++t) multinom /= t;
      for (int t = 1; t <= j; ++t) multinom /= t;
      for (int t = 1; t <= k; ++t) multinom /= t;
      sum += multinom * gaussian_moment(2 * i, 2 * j, 2 * k);
    }
  return sum;
}

// Deterministic uniform in [-1, 1).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return 2.0 * (static_cast<double>(eng_() >> 11) * 0x1.0p-53) - 1.0; }

 private:
  std::mt19937_64 eng_;
};

// Smooth periodic field on [0, 2pi): a few random Fourier modes.
inline Eigen::ArrayXd smooth_field(const Eigen::ArrayXd& x, Rng& rng, double amplitude,
                                   int modes = 3) {
  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(x.size());
  for (int m = 1; m <= modes; ++m) {
    const double a = rng.uniform() * amplitude / m;
    const double b = rng.uniform() * amplitude / m;
    f += a * (m * x).sin() + b * (m * x).cos();
  }
  return f;
}

// Random low-degree polynomial in v on the velocity nodes.
inline Eigen::VectorXd random_velocity_poly(const Eigen::Matrix<double, Eigen::Dynamic, 3>& nodes,
                                            Rng& rng, double amplitude) {
  Eigen::VectorXd f(nodes.rows());
  const double c0 = rng.uniform(), c1 = rng.uniform(), c2 = rng.uniform(), c3 = rng.uniform();
  const double c4 = rng.uniform(), c5 = rng.uniform(), c6 = rng.uniform();
  for (Eigen::Index k = 0; k < nodes.rows(); ++k) {
    const double v1 = nodes(k, 0), v2 = nodes(k, 1), v3 = nodes(k, 2);
    f(k) = amplitude * (c0 + c1 * v1 + c2 * v2 + c3 * v3 + c4 * v1 * v2 + c5 * (v1 * v1 - v3 * v3) +
                        c6 * v2 * v3);
  }
  return f;
}

}  // namespace oracle

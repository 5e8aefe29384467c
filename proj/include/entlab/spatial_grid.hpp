#pragma once

#include <Eigen/Dense>
#include <complex>
#include <memory>
#include <vector>

#include "entlab/errors.hpp"

namespace entlab {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Periodic 1D slab of length 2*pi with n uniform cells. Spectral derivative
/// and advection through FFTW; integration by the rectangle rule (spectrally
/// accurate on the periodic slab).
class SpatialGrid {
 public:
  explicit SpatialGrid(int cells);
  ~SpatialGrid();

  SpatialGrid(const SpatialGrid&) = delete;
  SpatialGrid& operator=(const SpatialGrid&) = delete;

  int cells() const { return n_; }
  double length() const { return length_; }
  double dx() const { return length_ / n_; }
  const ArrayXd& x() const { return x_; }

  /// Spectral d/dx of a periodic field.
  ArrayXd deriv(const ArrayXd& f) const;

  /// length/n * sum(f).
  double integrate(const ArrayXd& f) const;

  /// Energy fraction carried by the top third of the spectrum; smoothness probe.
  double spectral_tail_fraction(const ArrayXd& f) const;

  /// In-place shift of every column of g by its own speed: column k becomes
  /// f(x - speeds[k] * time). Exact (unconditionally stable) advection.
  void advect_columns(MatrixXd& g, const VectorXd& speeds, double time) const;

  /// Forward/backward real FFT of a single field (modes 0..n/2).
  void forward(const ArrayXd& f, std::vector<std::complex<double>>& out) const;
  void backward(const std::vector<std::complex<double>>& in, ArrayXd& out) const;

 private:
  int n_;
  double length_;
  ArrayXd x_;
  struct Plans;
  std::unique_ptr<Plans> plans_;
};

}  // namespace entlab

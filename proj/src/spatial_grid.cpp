#include "entlab/spatial_grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>

namespace entlab {

namespace {
constexpr double kPi = 3.14159265358979323846;
// FFTW planning is not thread-safe; execution through the new-array API is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct SpatialGrid::Plans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
  ~Plans() {
    std::lock_guard<std::mutex> lock(plan_mutex());
    if (r2c) fftw_destroy_plan(r2c);
    if (c2r) fftw_destroy_plan(c2r);
  }
};

SpatialGrid::SpatialGrid(int cells) : n_(cells), length_(2.0 * kPi) {
  if (cells < 4) throw ConfigError("SpatialGrid needs at least 4 cells");
  x_.resize(n_);
  for (int i = 0; i < n_; ++i) x_(i) = length_ * i / n_;
  plans_ = std::make_unique<Plans>();
  std::vector<double> re(static_cast<size_t>(n_));
  std::vector<fftw_complex> co(static_cast<size_t>(n_ / 2 + 1));
  std::lock_guard<std::mutex> lock(plan_mutex());
  plans_->r2c = fftw_plan_dft_r2c_1d(n_, re.data(), co.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans_->c2r = fftw_plan_dft_c2r_1d(n_, co.data(), re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
}

SpatialGrid::~SpatialGrid() = default;

void SpatialGrid::forward(const ArrayXd& f, std::vector<std::complex<double>>& out) const {
  if (f.size() != n_) throw DimensionError("SpatialGrid::forward: size mismatch");
  out.resize(static_cast<size_t>(n_ / 2 + 1));
  std::vector<double> buf(f.data(), f.data() + n_);
  fftw_execute_dft_r2c(plans_->r2c, buf.data(), reinterpret_cast<fftw_complex*>(out.data()));
}

void SpatialGrid::backward(const std::vector<std::complex<double>>& in, ArrayXd& out) const {
  std::vector<std::complex<double>> buf(in);  // c2r destroys its input
  out.resize(n_);
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(buf.data()), out.data());
  out /= n_;
}

ArrayXd SpatialGrid::deriv(const ArrayXd& f) const {
  std::vector<std::complex<double>> hat;
  forward(f, hat);
  const int nh = n_ / 2;
  for (int m = 0; m <= nh; ++m) {
    const double k = m;  // length 2*pi => integer wavenumbers
    hat[static_cast<size_t>(m)] *= std::complex<double>(0.0, k);
  }
  if (n_ % 2 == 0) hat[static_cast<size_t>(nh)] = 0.0;  // Nyquist mode of an odd operator
  ArrayXd out;
  backward(hat, out);
  return out;
}

double SpatialGrid::integrate(const ArrayXd& f) const {
  if (f.size() != n_) throw DimensionError("SpatialGrid::integrate: size mismatch");
  return dx() * f.sum();
}

double SpatialGrid::spectral_tail_fraction(const ArrayXd& f) const {
  std::vector<std::complex<double>> hat;
  forward(f, hat);
  double total = 0.0, tail = 0.0;
  const int nh = n_ / 2;
  const int cut = (2 * nh) / 3;
  for (int m = 1; m <= nh; ++m) {
    const double e = std::norm(hat[static_cast<size_t>(m)]);
    total += e;
    if (m >= cut) tail += e;
  }
  return total > 0.0 ? tail / total : 0.0;
}

void SpatialGrid::advect_columns(MatrixXd& g, const VectorXd& speeds, double time) const {
  if (g.rows() != n_ || g.cols() != speeds.size())
    throw DimensionError("advect_columns: shape mismatch");
  const int nh = n_ / 2;
  std::vector<std::complex<double>> hat(static_cast<size_t>(nh + 1));
  std::vector<double> buf(static_cast<size_t>(n_));
  for (int c = 0; c < g.cols(); ++c) {
    std::copy(g.col(c).data(), g.col(c).data() + n_, buf.begin());
    fftw_execute_dft_r2c(plans_->r2c, buf.data(), reinterpret_cast<fftw_complex*>(hat.data()));
    const double a = speeds(c) * time;
    for (int m = 0; m <= nh; ++m) {
      const double phase = -a * m;
      hat[static_cast<size_t>(m)] *= std::complex<double>(std::cos(phase), std::sin(phase));
    }
    fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(hat.data()), buf.data());
    for (int i = 0; i < n_; ++i) g(i, c) = buf[static_cast<size_t>(i)] / n_;
  }
}

}  // namespace entlab

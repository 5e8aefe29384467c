#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "entlab/entropy_diagnostics.hpp"

namespace entlab {

enum class Scenario { well_prepared, ill_prepared, homogeneous_relaxation, acoustic_mode };

struct RunConfig {
  Scenario scenario = Scenario::well_prepared;
  std::vector<double> epsilon_list;
  int spatial_cells = 64;
  int velocity_points = 16;
  VelocityRule velocity_rule = VelocityRule::gauss_hermite;
  double truncation_radius = 6.0;
  int sphere_polar = 6;
  int sphere_azimuth = 12;
  KernelMode kernel_mode = KernelMode::bgk;
  double relaxation_rate = 1.0;
  double b_const = 1.0;
  double t_end = 1.0;
  double cadence = 0.05;
  double amplitude = 0.2;
  std::uint64_t seed = 0;
  bool nonlinear = true;
  bool local_coefficients = true;
  HeatFluxForm heat_flux = HeatFluxForm::grad_theta;
  // Full-kernel diagnostics grid (uniform, maxwell molecules); 0 disables.
  int diag_points = 0;
  double diag_radius = 4.0;
  int diag_sphere_polar = 4;
  int diag_sphere_azimuth = 8;
  int diag_stride = 5;
  bool diag_bgl = false;
  // Optional assertion: fitted slope of sup_t H/eps^2 within [slope_min, slope_max].
  double slope_min = 0.0;
  double slope_max = 0.0;
  double budget_slack_tol = 1e-6;

  void validate() const;  // throws ConfigError
};

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

/// Least-squares fit of log(value) against log(eps).
struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
FitResult fit_rate(const std::vector<std::pair<double, double>>& pairs);

/// Scenario initial data on the given grid (deterministic in the seed).
FluidState make_initial_fluid(const RunConfig& cfg, std::shared_ptr<const SpatialGrid> sg, double eps);
KineticState make_initial_kinetic(const RunConfig& cfg, const FluidState& fluid,
                                  std::shared_ptr<const VelocityGrid> vg);

struct EpsilonRunResult {
  double epsilon = 0.0;
  double initial_h = 0.0;
  double sup_h = 0.0;
  double final_h = 0.0;
  double min_budget_slack = 0.0;
  bool h_monotone = true;
  std::vector<EntropyReport> series;
  std::string csv_path;
  std::string error;  // non-empty if the run aborted
};

struct StudyResult {
  std::vector<EpsilonRunResult> runs;
  FitResult h_fit;
  std::map<std::string, std::string> residual_floor;  // residuals below the fitting floor
  std::map<std::string, FitResult> residual_fits;
  std::vector<std::string> failed_assertions;
  int exit_code = 0;  // 0 pass, 1 assertion failure, 2 configuration error, 3 solver abort
};

/// Runs the configured study: per-epsilon paired kinetic/fluid runs, entropy
/// budgets, per-epsilon CSV files and a study-level JSON summary in out_dir.
StudyResult run_study(const RunConfig& cfg, const std::string& out_dir, int parallel = 1);

}  // namespace entlab

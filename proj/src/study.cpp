#include "entlab/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "entlab/report_io.hpp"
#include "json.hpp"

namespace entlab {

void RunConfig::validate() const {
  if (epsilon_list.empty()) throw ConfigError("epsilon_list must not be empty");
  double prev = 1.0;
  for (double e : epsilon_list) {
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("epsilon values must lie in (0,1)");
    if (!(e < prev)) throw ConfigError("epsilon_list must be strictly decreasing");
    prev = e;
  }
  if (spatial_cells < 4) throw ConfigError("spatial_cells must be >= 4");
  if (velocity_points < 4) throw ConfigError("velocity_points must be >= 4");
  if (!(t_end >= 0.0)) throw ConfigError("t_end must be >= 0");
  if (!(cadence > 0.0)) throw ConfigError("observer cadence must be > 0");
  if (kernel_mode == KernelMode::bgk && !(relaxation_rate > 0.0))
    throw ConfigError("relaxation_rate must be > 0");
  if (kernel_mode == KernelMode::maxwell_molecules && !(b_const > 0.0))
    throw ConfigError("b_const must be > 0");
  if (diag_points != 0 && diag_points < 4) throw ConfigError("diag_points must be 0 or >= 4");
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("invalid boolean: " + v);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "scenario") {
        if (val == "well_prepared")
          cfg.scenario = Scenario::well_prepared;
        else if (val == "ill_prepared")
          cfg.scenario = Scenario::ill_prepared;
        else if (val == "homogeneous_relaxation")
          cfg.scenario = Scenario::homogeneous_relaxation;
        else if (val == "acoustic_mode")
          cfg.scenario = Scenario::acoustic_mode;
        else
          throw ConfigError("unknown scenario " + val);
      } else if (key == "epsilon_list")
        cfg.epsilon_list = parse_list(val);
      else if (key == "spatial_cells")
        cfg.spatial_cells = std::stoi(val);
      else if (key == "velocity_points")
        cfg.velocity_points = std::stoi(val);
      else if (key == "velocity_rule")
        cfg.velocity_rule = (val == "uniform_trapezoid") ? VelocityRule::uniform_trapezoid
                                                         : VelocityRule::gauss_hermite;
      else if (key == "truncation_radius")
        cfg.truncation_radius = std::stod(val);
      else if (key == "sphere_polar")
        cfg.sphere_polar = std::stoi(val);
      else if (key == "sphere_azimuth")
        cfg.sphere_azimuth = std::stoi(val);
      else if (key == "kernel")
        cfg.kernel_mode = (val == "maxwell_molecules") ? KernelMode::maxwell_molecules : KernelMode::bgk;
      else if (key == "relaxation_rate")
        cfg.relaxation_rate = std::stod(val);
      else if (key == "b_const")
        cfg.b_const = std::stod(val);
      else if (key == "t_end")
        cfg.t_end = std::stod(val);
      else if (key == "observer_cadence")
        cfg.cadence = std::stod(val);
      else if (key == "amplitude")
        cfg.amplitude = std::stod(val);
      else if (key == "seed")
        cfg.seed = std::stoull(val);
      else if (key == "nonlinear")
        cfg.nonlinear = parse_bool(val);
      else if (key == "local_coefficients")
        cfg.local_coefficients = parse_bool(val);
      else if (key == "heat_flux")
        cfg.heat_flux = (val == "grad_kappa_theta") ? HeatFluxForm::grad_kappa_theta
                                                    : HeatFluxForm::grad_theta;
      else if (key == "diag_points")
        cfg.diag_points = std::stoi(val);
      else if (key == "diag_radius")
        cfg.diag_radius = std::stod(val);
      else if (key == "diag_sphere_polar")
        cfg.diag_sphere_polar = std::stoi(val);
      else if (key == "diag_sphere_azimuth")
        cfg.diag_sphere_azimuth = std::stoi(val);
      else if (key == "diag_stride")
        cfg.diag_stride = std::stoi(val);
      else if (key == "diag_bgl")
        cfg.diag_bgl = parse_bool(val);
      else if (key == "slope_band") {
        const auto band = parse_list(val);
        if (band.size() != 2) throw ConfigError("slope_band needs two values");
        cfg.slope_min = band[0];
        cfg.slope_max = band[1];
      } else if (key == "budget_slack_tol")
        cfg.budget_slack_tol = std::stod(val);
      else
        throw ConfigError("unknown key " + key);
    } catch (const std::invalid_argument&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

FitResult fit_rate(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 2) throw ConfigError("fit_rate needs at least 2 pairs");
  for (const auto& p : pairs)
    if (!(p.first > 0.0) || !(p.second > 0.0))
      throw ConfigError("fit_rate requires positive epsilon and values");
  const double n = static_cast<double>(pairs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : pairs) {
    const double x = std::log(p.first), y = std::log(p.second);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  FitResult f;
  const double den = n * sxx - sx * sx;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  const double ss_res = syy - sy * sy / n - f.slope * (sxy - sx * sy / n);
  const double ss_tot = syy - sy * sy / n;
  f.r2 = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

FluidState make_initial_fluid(const RunConfig& cfg, std::shared_ptr<const SpatialGrid> sg, double eps) {
  FluidState s;
  s.sg = sg;
  s.epsilon = eps;
  const int nx = sg->cells();
  s.rho_t = ArrayXd::Zero(nx);
  s.theta_t = ArrayXd::Zero(nx);
  s.u_t = Vec3Field::Zero(nx, 3);
  const ArrayXd& x = sg->x();
  const double a = cfg.amplitude;
  // Seed enters through deterministic phase offsets.
  const double p1 = 0.1 * static_cast<double>(cfg.seed % 7);
  const double p2 = 0.2 * static_cast<double>(cfg.seed % 5);
  switch (cfg.scenario) {
    case Scenario::well_prepared:
      // Incompressible shear (u1 = 0) with Boussinesq-compatible rho = -theta.
      s.u_t.col(1) = (a * (x + p1).sin() + 0.5 * a * (2.0 * x + p2).sin()).matrix();
      s.u_t.col(2) = (a * (x + 2.0 * p2).cos()).matrix();
      s.theta_t = 0.8 * a * (x + p1).sin() + 0.3 * a * (2.0 * x).cos();
      s.rho_t = -s.theta_t;
      break;
    case Scenario::ill_prepared:
      s.u_t.col(0) = (a * (x + p1).sin()).matrix();
      s.u_t.col(1) = (a * (x + p2).cos()).matrix();
      s.rho_t = a * x.cos();
      s.theta_t = 0.5 * a * x.sin();
      break;
    case Scenario::homogeneous_relaxation:
      break;  // fluid stays at the reference state
    case Scenario::acoustic_mode:
      // Pure acoustic eigenmode content: theta = (2/3) rho.
      s.rho_t = a * x.cos();
      s.theta_t = (2.0 / 3.0) * s.rho_t;
      s.u_t.col(0) = (a * x.sin()).matrix();
      break;
  }
  s.check_positivity();
  return s;
}

KineticState make_initial_kinetic(const RunConfig& cfg, const FluidState& fluid,
                                  std::shared_ptr<const VelocityGrid> vg) {
  if (cfg.scenario == Scenario::homogeneous_relaxation) {
    KineticState s;
    s.sg = fluid.sg;
    s.vg = vg;
    s.epsilon = fluid.epsilon;
    const double a = cfg.amplitude;
    VectorXd gv(vg->size());
    for (int k = 0; k < vg->size(); ++k) {
      const Vector3d v = vg->nodes.row(k);
      gv(k) = a * (v(0) * v(1) + 0.5 * (v(0) * v(0) - v(1) * v(1)) + 0.3 * v(0));
    }
    s.g = MatrixXd::Zero(fluid.sg->cells(), vg->size());
    s.g.rowwise() = gv.transpose();
    s.check_positivity();
    return s;
  }
  return well_prepared_initial(fluid, std::move(vg));
}

namespace {

EpsilonRunResult run_one_epsilon(const RunConfig& cfg, double eps, const std::string& out_dir) {
  EpsilonRunResult res;
  res.epsilon = eps;
  try {
    auto sg = std::make_shared<const SpatialGrid>(cfg.spatial_cells);
    auto vg = std::make_shared<const VelocityGrid>(
        build_grid(cfg.velocity_points, cfg.velocity_rule,
                   cfg.velocity_rule == VelocityRule::uniform_trapezoid ? cfg.truncation_radius : 0.0,
                   cfg.sphere_polar, cfg.sphere_azimuth));
    const CollisionKernel kernel = (cfg.kernel_mode == KernelMode::bgk)
                                       ? make_bgk_kernel(vg, cfg.relaxation_rate)
                                       : make_maxwell_kernel(vg, cfg.b_const);

    const FluidState fluid0 = make_initial_fluid(cfg, sg, eps);
    const KineticState kin0 = make_initial_kinetic(cfg, fluid0, vg);
    res.initial_h = relative_entropy_states(kin0, fluid0) / (eps * eps);
    if (cfg.scenario == Scenario::well_prepared && res.initial_h > 1e-10)
      throw ConfigError("well_prepared construction failed: initial H/eps^2 = " +
                        std::to_string(res.initial_h));

    const CoefficientTable table(kernel);
    CnsOptions copts;
    copts.local_coefficients = cfg.local_coefficients;
    copts.heat_flux = cfg.heat_flux;
    KineticOptions kopts;
    kopts.nonlinear = cfg.nonlinear;

    const FluidTrajectory ftraj = cns_run(fluid0, cfg.t_end, cfg.cadence, copts, table);
    const KineticTrajectory ktraj = kinetic_run(kin0, cfg.t_end, kernel, cfg.cadence, kopts);

    BudgetOptions bopts;
    bopts.table = table;
    bopts.local_coefficients = cfg.local_coefficients;
    bopts.diag_bgl = cfg.diag_bgl;
    bopts.diag_stride = cfg.diag_stride;
    if (cfg.diag_points > 0) {
      // Coarse full-kernel grid: the normalization gate is opened accordingly.
      bopts.diag_grid = std::make_shared<const VelocityGrid>(
          build_grid(cfg.diag_points, VelocityRule::uniform_trapezoid, cfg.diag_radius,
                     cfg.diag_sphere_polar, cfg.diag_sphere_azimuth, 1e-2));
      bopts.diag_b = cfg.b_const;
    }
    res.series = theorem_budget(ktraj, ftraj, kernel, bopts);

    res.sup_h = 0.0;
    res.min_budget_slack = std::numeric_limits<double>::infinity();
    double prev_h = std::numeric_limits<double>::infinity();
    for (const auto& r : res.series) {
      res.sup_h = std::max(res.sup_h, r.h_over_eps2);
      res.min_budget_slack = std::min(res.min_budget_slack, r.budget_slack);
      if (r.h_over_eps2 > prev_h + 1e-12) res.h_monotone = false;
      prev_h = r.h_over_eps2;
    }
    res.final_h = res.series.back().h_over_eps2;

    std::ostringstream name;
    name << out_dir << "/report_eps_" << eps << ".csv";
    res.csv_path = name.str();
    write_report_csv(res.csv_path, res.series);
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  return res;
}

}  // namespace

StudyResult run_study(const RunConfig& cfg, const std::string& out_dir, int parallel) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  StudyResult out;
  out.runs.resize(cfg.epsilon_list.size());

  const int workers = std::max(1, std::min<int>(parallel, static_cast<int>(cfg.epsilon_list.size())));
  if (workers == 1) {
    for (size_t i = 0; i < cfg.epsilon_list.size(); ++i)
      out.runs[i] = run_one_epsilon(cfg, cfg.epsilon_list[i], out_dir);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (size_t i = next.fetch_add(1); i < cfg.epsilon_list.size(); i = next.fetch_add(1))
          out.runs[i] = run_one_epsilon(cfg, cfg.epsilon_list[i], out_dir);
      });
    for (auto& t : pool) t.join();
  }

  bool solver_abort = false;
  for (const auto& r : out.runs)
    if (!r.error.empty()) solver_abort = true;

  // Slope fits over the epsilon sweep.
  const double floor = 1e-13;
  if (!solver_abort && out.runs.size() >= 2) {
    std::vector<std::pair<double, double>> hp;
    for (const auto& r : out.runs)
      if (r.sup_h > floor) hp.push_back({r.epsilon, r.sup_h});
    if (hp.size() == out.runs.size()) out.h_fit = fit_rate(hp);

    auto fit_residual = [&](const std::string& name, auto getter) {
      std::vector<std::pair<double, double>> rp;
      bool floored = false;
      for (const auto& r : out.runs) {
        const double v = getter(r.series.back());
        if (v > floor)
          rp.push_back({r.epsilon, v});
        else
          floored = true;
      }
      if (floored || rp.size() < 2)
        out.residual_floor[name] = "floor";
      else
        out.residual_fits[name] = fit_rate(rp);
    };
    for (int q = 1; q <= 13; ++q) {
      if (q == 11 && cfg.diag_points == 0) continue;
      fit_residual("R_" + std::to_string(q),
                   [q](const EntropyReport& r) { return r.r[q]; });
    }
    fit_residual("R_A", [](const EntropyReport& r) { return r.r_a; });
    fit_residual("R_B", [](const EntropyReport& r) { return r.r_b; });
  }

  // Configured assertions.
  if (solver_abort) {
    out.exit_code = 3;
  } else {
    for (const auto& r : out.runs) {
      if (cfg.scenario == Scenario::well_prepared && r.min_budget_slack < -cfg.budget_slack_tol)
        out.failed_assertions.push_back("budget slack " + std::to_string(r.min_budget_slack) +
                                        " at eps=" + std::to_string(r.epsilon));
      if (cfg.scenario == Scenario::homogeneous_relaxation && !r.h_monotone)
        out.failed_assertions.push_back("H not monotone at eps=" + std::to_string(r.epsilon));
    }
    if (cfg.slope_max > cfg.slope_min && out.runs.size() >= 2) {
      if (!(out.h_fit.slope >= cfg.slope_min && out.h_fit.slope <= cfg.slope_max))
        out.failed_assertions.push_back("H slope " + std::to_string(out.h_fit.slope) +
                                        " outside [" + std::to_string(cfg.slope_min) + ", " +
                                        std::to_string(cfg.slope_max) + "]");
    }
    out.exit_code = out.failed_assertions.empty() ? 0 : 1;
  }

  // Study-level JSON summary.
  nlohmann::json j;
  j["schema"] = kReportSchemaVersion;
  j["exit_code"] = out.exit_code;
  j["epsilon_list"] = cfg.epsilon_list;
  for (const auto& r : out.runs) {
    nlohmann::json jr;
    jr["epsilon"] = r.epsilon;
    jr["initial_H_over_eps2"] = r.initial_h;
    jr["sup_H_over_eps2"] = r.sup_h;
    jr["final_H_over_eps2"] = r.final_h;
    jr["min_budget_slack"] = r.min_budget_slack;
    jr["h_monotone"] = r.h_monotone;
    jr["csv"] = r.csv_path;
    if (!r.error.empty()) jr["error"] = r.error;
    j["runs"].push_back(jr);
  }
  if (out.runs.size() >= 2 && !solver_abort) {
    j["sup_H_slope"] = out.h_fit.slope;
    j["sup_H_r2"] = out.h_fit.r2;
    for (const auto& [name, fit] : out.residual_fits) {
      j["residual_slopes"][name] = {{"slope", fit.slope}, {"r2", fit.r2}};
    }
    for (const auto& [name, tag] : out.residual_floor) j["residual_slopes"][name] = tag;
  }
  j["failed_assertions"] = out.failed_assertions;
  std::ofstream f(out_dir + "/study.json");
  f << j.dump(2) << "\n";

  return out;
}

}  // namespace entlab

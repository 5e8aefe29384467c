#include "entlab/report_io.hpp"

#include <cstdio>
#include <fstream>

namespace entlab {

const char* kReportSchemaVersion = "entlab-report-v1";

std::vector<std::string> report_columns() {
  std::vector<std::string> cols = {
      "time",          "H_over_eps2",  "H_kinetic",    "H_fluid",      "split_defect",
      "quad_approx",   "dissipation_budget", "flux_budget", "dissipation_is_surrogate",
      "conv_III",      "conv_IV"};
  for (int i = 1; i <= 13; ++i) cols.push_back("R_" + std::to_string(i));
  cols.insert(cols.end(), {"R_A", "R_B", "r_1", "r_2", "r_3", "r_4", "budget_slack", "majorant",
                           "conv_constant", "bgl_slack_min", "closure_flux", "closure_avbv",
                           "closure_dissipation"});
  return cols;
}

namespace {
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

std::string report_csv_header() {
  std::string out = std::string("# ") + kReportSchemaVersion + "\n";
  const auto cols = report_columns();
  for (size_t i = 0; i < cols.size(); ++i) {
    out += cols[i];
    out += (i + 1 < cols.size()) ? ',' : '\n';
  }
  return out;
}

std::string report_csv_row(const EntropyReport& r) {
  std::vector<double> vals = {r.time,         r.h_over_eps2, r.h_kinetic,
                              r.h_fluid,      r.split_defect, r.quad_approx,
                              r.dissipation_budget, r.flux_budget,
                              r.dissipation_is_surrogate ? 1.0 : 0.0,
                              r.conv_iii,     r.conv_iv};
  for (int i = 1; i <= 13; ++i) vals.push_back(r.r[i]);
  vals.insert(vals.end(), {r.r_a, r.r_b, r.r_small[1], r.r_small[2], r.r_small[3], r.r_small[4],
                           r.budget_slack, r.majorant, r.conv_constant, r.bgl_slack_min,
                           r.closure_flux, r.closure_avbv, r.closure_dissipation});
  std::string out;
  for (size_t i = 0; i < vals.size(); ++i) {
    out += fmt(vals[i]);
    out += (i + 1 < vals.size()) ? ',' : '\n';
  }
  return out;
}

void write_report_csv(const std::string& path, const std::vector<EntropyReport>& series) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  f << report_csv_header();
  for (const auto& r : series) f << report_csv_row(r);
}

}  // namespace entlab

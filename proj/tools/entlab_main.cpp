#include <iostream>

#include "CLI11.hpp"
#include "entlab/study.hpp"

int main(int argc, char** argv) {
  CLI::App app{"entlab: kinetic-fluid relative-entropy laboratory"};
  std::string config_path, out_dir;
  long long seed = -1;
  int parallel = 1;
  app.add_option("--config", config_path, "run configuration file (key = value)")->required();
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--parallel", parallel, "parallel worker slots for the epsilon sweep")
      ->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    entlab::RunConfig cfg = entlab::load_config_file(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    const entlab::StudyResult res = entlab::run_study(cfg, out_dir, parallel);
    for (const auto& r : res.runs) {
      if (!r.error.empty()) {
        std::cerr << "eps=" << r.epsilon << " aborted: " << r.error << "\n";
      } else {
        std::cout << "eps=" << r.epsilon << " sup_t H/eps^2=" << r.sup_h
                  << " min budget slack=" << r.min_budget_slack << " -> " << r.csv_path << "\n";
      }
    }
    if (res.runs.size() >= 2 && res.exit_code != 3)
      std::cout << "sup_t H/eps^2 slope: " << res.h_fit.slope << " (r2 " << res.h_fit.r2 << ")\n";
    for (const auto& msg : res.failed_assertions) std::cerr << "assertion failed: " << msg << "\n";
    std::cout << "study summary: " << out_dir << "/study.json\n";
    return res.exit_code;
  } catch (const entlab::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

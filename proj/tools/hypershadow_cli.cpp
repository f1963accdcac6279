// hypershadow: run, sweep and verify scenario files.
#include "hypershadow/scenario.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace hypershadow;

int main(int argc, char** argv) {
  CLI::App app{"Fixed-point construction of shadowing solutions for perturbed functional differential equations"};
  app.require_subcommand(1);
  Options opt;
  std::string scenario_path, state_dir;
  int max_iters = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("scenario", scenario_path, "scenario JSON")->required();
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--max-iters", max_iters, "override config.max_iters")->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", opt.quiet, "no progress output");
  };
  CLI::App* run_cmd = app.add_subcommand("run", "iterate Gamma to a fixed point");
  add_common(run_cmd);
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "runs over epsilon_sweep and fits log-log slopes");
  add_common(sweep_cmd);
  CLI::App* verify_cmd = app.add_subcommand("verify", "certify a stored state");
  add_common(verify_cmd);
  verify_cmd->add_option("state_dir", state_dir, "directory with X_minus_1.csv, xs.csv, xu.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : exit_code::config;
  }
  if (max_iters > 0) opt.max_iters = max_iters;
  if (const char* th = std::getenv("HYPERSHADOW_THREADS")) {
    int n = std::atoi(th);
    if (n > 0) numerics::set_thread_cap(n);
  }

  Scenario sc;
  try {
    sc = load_scenario(scenario_path);
  } catch (const Error& e) {
    std::cerr << "hypershadow: " << e.what() << '\n';
    return exit_code::config;
  }

  Outcome res;
  try {
    if (run_cmd->parsed())
      res = run(sc, opt);
    else if (sweep_cmd->parsed())
      res = sweep(sc, opt);
    else
      res = verify(sc, state_dir, opt);
  } catch (const Error& e) {
    std::cerr << "hypershadow: " << e.what() << '\n';
    return exit_code::config;
  }
  if (!opt.quiet) std::cout << sc.name << ": " << res.message << '\n';
  return res.code;
}

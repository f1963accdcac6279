// Times the OpenMP kernel-sum Gamma against the serial reference and checks that they agree.
#include "hypershadow/invariance.hpp"
#include "hypershadow/scenario.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>

using namespace hypershadow;

namespace {

template <class F>
double seconds(F&& f, int reps) {
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

double max_diff(const GridFunction& a, const GridFunction& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bench_gamma"};
  bool quick = false;
  int threads = 0, reps = 3;
  std::string scenario = std::string(HS_SCENARIO_DIR) + "/sdd_cubic.json";
  app.add_flag("--quick", quick, "small window, single repetition");
  app.add_option("--threads", threads, "thread cap for the parallel path");
  app.add_option("--reps", reps, "repetitions per timing");
  app.add_option("--scenario", scenario, "scenario JSON");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) numerics::set_thread_cap(threads);

  Scenario sc = load_scenario(scenario);
  OperatorConfig cfg = sc.cfg;
  if (quick) {
    cfg.T = 12.0;
    cfg.T_int = 8.0;
    reps = 1;
  }
  const PerturbationSpec spec = sc.spec();
  auto [st, rep] = iterate(*sc.frame, spec, cfg);
  std::printf("scenario %s  T %.1f  T_int %.1f  nodes %d  thread cap %d\n", sc.name.c_str(), cfg.T, cfg.T_int,
              st.xs.size(), numerics::thread_cap());

  int failures = 0;
  for (Bundle b : {Bundle::stable, Bundle::unstable}) {
    BundleIntegral par, ser;
    OperatorConfig pc = cfg, sc1 = cfg;
    pc.parallel = true;
    sc1.parallel = false;
    double tp = seconds([&] { par = gamma_bundle(*sc.frame, st, spec, pc, b); }, reps);
    double ts = seconds([&] { ser = gamma_bundle(*sc.frame, st, spec, sc1, b); }, reps);
    double tr = seconds([&] { (void)gamma_bundle_reference(*sc.frame, st, spec, cfg, b); }, 1);
    BundleIntegral ref = gamma_bundle_reference(*sc.frame, st, spec, cfg, b);
    double d = std::max(max_diff(par.value, ref.value), max_diff(ser.value, par.value));
    std::printf("%-8s parallel %.4fs  kernel-serial %.4fs  reference %.4fs  max|diff| %.2e\n",
                b == Bundle::stable ? "stable" : "unstable", tp, ts, tr, d);
    if (d > 1e-12) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

#include "hypershadow/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace hypershadow {

namespace fs = std::filesystem;

double SineOracle::xs(double eps, double rho) const {
  double p = omega * (rho - 1.0);
  return eps * a * (std::sin(p) - omega * std::cos(p)) / (1.0 + omega * omega);
}

double SineOracle::dxs(double eps, double rho) const {
  double p = omega * (rho - 1.0);
  return eps * a * omega * (std::cos(p) + omega * std::sin(p)) / (1.0 + omega * omega);
}

PerturbationSpec Scenario::spec() const {
  if (!frame) throw Error("scenario has no frame");
  return perturbation_from_json(perturbation, *frame);
}

namespace {

std::optional<BallRadii> radii_entry(const nlohmann::json& r, const char* key) {
  if (!r.contains(key)) return std::nullopt;
  return BallRadii(r.at(key).get<std::vector<double>>());
}

void load_config(const nlohmann::json& c, const HyperbolicFrame& fr, OperatorConfig& cfg) {
  const double lam = fr.quality().lambda_min();
  cfg.eta = c.value("eta", 0.25 * lam);
  cfg.delta = c.value("delta", 0.05);
  cfg.quadrature_step = c.value("quadrature_step", cfg.delta / 2.0);
  cfg.T_int = c.value("T_int", 10.0 / lam);
  cfg.T = c.value("T", cfg.T_int + 10.0);
  cfg.max_iters = c.value("max_iters", 60);
  cfg.tol_eta = c.value("tol_eta", 1e-9);
  cfg.interp_order = c.value("interp_order", 7);
  cfg.use_updated_field = c.value("use_updated_field", false);
  cfg.parallel = c.value("parallel", true);
  if (cfg.max_iters < 1) throw Error("config: max_iters must be positive");
  if (!(cfg.tol_eta > 0)) throw Error("config: tol_eta must be positive");
}

void check_dyadic(const std::vector<double>& e) {
  if (e.size() < 3) throw Error("sweep: at least three epsilon values are needed");
  for (double x : e)
    if (!(x > 0)) throw Error("sweep: epsilon values must be positive for a log-log fit");
  for (std::size_t i = 1; i < e.size(); ++i) {
    double r = e[i - 1] / e[i];
    if (std::abs(r - 2.0) > 1e-9 && std::abs(r - 0.5) > 1e-9)
      throw Error("sweep: epsilon values must be dyadically spaced");
  }
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  os << s;
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

double xhat_core_norm(const CorrectionState& st, double core) {
  return sup_on(st.xs + st.xu, -core, core);
}

struct CoreRun {
  CorrectionState state;
  IterationReport report;
  double core = 0.0;
};

CoreRun solve(const Scenario& sc, const PerturbationSpec& spec, const OperatorConfig& cfg) {
  auto [st, rep] = iterate(*sc.frame, spec, cfg);
  double t0 = cfg.t_radii ? cfg.t_radii->level(0) : 0.0;
  return {std::move(st), std::move(rep), core_half_width(cfg, spec.h, t0)};
}

nlohmann::json residual_table(const Scenario& sc, const CoreRun& r, const PerturbationSpec& spec, double eps,
                              const fs::path& csv) {
  std::ostringstream os;
  os << "rho_lo,rho_hi,residual,at\n";
  double worst = 0.0, at = 0.0;
  const double width = 2.0;
  for (double lo = -r.core; lo < r.core - 1e-12; lo += width) {
    double hi = std::min(lo + width, r.core);
    std::vector<double> probe;
    for (int i = 0; i < r.state.xs.size(); ++i) {
      double rho = r.state.xs.node(i);
      if (rho >= lo - 1e-12 && rho <= hi + 1e-12) probe.push_back(rho);
    }
    if (probe.empty()) continue;
    ResidualReport rr = residual_fde(*sc.frame, r.state, spec, eps, probe);
    os << format_number(lo) << ',' << format_number(hi) << ',' << format_number(rr.sup) << ','
       << format_number(rr.at) << '\n';
    if (rr.sup >= worst) {
      worst = rr.sup;
      at = rr.at;
    }
  }
  write_text(csv, os.str());
  return {{"sup", worst}, {"at", at}};
}

nlohmann::json oracle_table(const SineOracle& o, const CoreRun& r, double eps, const fs::path& csv) {
  std::ostringstream os;
  os << "rho,xs,exact,error\n";
  double worst = 0.0;
  for (int i = 0; i < r.state.xs.size(); ++i) {
    double rho = r.state.xs.node(i);
    if (std::abs(rho) > r.core + 1e-12) continue;
    double x = r.state.xs.at(i, 1), ex = o.xs(eps, rho);
    worst = std::max(worst, std::abs(x - ex));
    os << format_number(rho) << ',' << format_number(x) << ',' << format_number(ex) << ','
       << format_number(std::abs(x - ex)) << '\n';
  }
  write_text(csv, os.str());
  return {{"max_error", worst}, {"core_half_width", r.core}};
}

Outcome run_charges(const Scenario& sc, const Options& opt) {
  const ChargeScenario& c = *sc.charges;
  Outcome out;
  NonsingularityReport ns = nonsingularity_check(c.system, c.lo, c.hi);
  DelayField f;
  try {
    f = solve_delay_field(c.system, c.lo, c.hi, c.delta);
  } catch (const Error& e) {
    out.code = exit_code::diverged;
    out.message = e.what();
    out.summary = {{"status", "delay_failure"}, {"message", e.what()}};
    fs::create_directories(opt.out);
    write_json(fs::path(opt.out) / "report.json", out.summary);
    return out;
  }
  fs::create_directories(opt.out);
  write_delay_field(f, (fs::path(opt.out) / "delays").string());
  out.summary = {{"status", ns.pass ? "nonsingular" : "singular"},
                 {"min_distance", ns.min_distance},
                 {"max_speed", ns.max_speed},
                 {"closest", {ns.closest.first, ns.closest.second}},
                 {"closest_time", ns.closest_time},
                 {"fastest", ns.fastest},
                 {"max_iterations", f.max_iterations},
                 {"max_defect", f.max_defect}};
  write_json(fs::path(opt.out) / "report.json", out.summary);
  out.code = ns.pass && f.max_defect <= 1e-12 ? exit_code::ok : exit_code::diverged;
  out.message = ns.pass ? "delays solved" : "configuration is singular";
  return out;
}

}  // namespace

Scenario parse_scenario(const nlohmann::json& j) {
  Scenario sc;
  sc.raw = j;
  sc.name = j.value("name", "scenario");
  sc.seed = j.value("seed", 0u);
  if (j.contains("charges")) {
    const auto& c = j.at("charges");
    ChargeScenario cs;
    cs.system = charge_system_from_json(c);
    const auto w = c.value("window", std::vector<double>{-5.0, 5.0});
    if (w.size() != 2 || !(w[0] < w[1])) throw Error("charges: window must be [lo, hi] with lo < hi");
    cs.lo = w[0];
    cs.hi = w[1];
    cs.delta = c.value("delta", 0.05);
    if (!(cs.delta > 0)) throw Error("charges: delta must be positive");
    sc.charges = std::move(cs);
    return sc;
  }
  if (!j.contains("frame")) throw Error("scenario: missing frame descriptor");
  sc.frame = frame_from_json(j.at("frame"));
  sc.perturbation = j.value("perturbation", nlohmann::json{{"kind", "zero"}});
  load_config(j.value("config", nlohmann::json::object()), *sc.frame, sc.cfg);
  sc.cfg.eps = j.value("epsilon", 0.0);
  if (sc.cfg.eps < 0) throw Error("scenario: epsilon must be nonnegative");
  if (j.contains("epsilon_sweep")) sc.eps_list = j.at("epsilon_sweep").get<std::vector<double>>();
  if (j.contains("radii")) {
    const auto& r = j.at("radii");
    sc.t_radii = radii_entry(r, "t");
    sc.s_radii = radii_entry(r, "s");
    sc.u_radii = radii_entry(r, "u");
    sc.cfg.t_radii = sc.t_radii;
    sc.cfg.s_radii = sc.s_radii;
    sc.cfg.u_radii = sc.u_radii;
  }
  const auto ap = j.value("aposteriori", nlohmann::json::object());
  const auto iv = ap.value("interval", std::vector<double>{-2.0, 2.0});
  if (iv.size() != 2 || !(iv[0] < iv[1])) throw Error("aposteriori: interval must be [a, b] with a < b");
  sc.apost.a = iv[0];
  sc.apost.b = iv[1];
  sc.apost.M = ap.value("M", 1.0);
  sc.apost.ell = ap.value("ell", 1);
  sc.apost.eta = sc.cfg.eta;
  if (j.contains("oracle")) {
    const auto& o = j.at("oracle");
    if (o.value("kind", "") != "lin-saddle-sine") throw Error("oracle: unknown kind");
    if (sc.frame->model().id != "lin-saddle") throw Error("oracle: lin-saddle-sine needs the lin-saddle frame");
    sc.oracle = SineOracle{o.value("a", 1.0), o.value("omega", 1.0)};
  }
  validate_config(*sc.frame, sc.cfg);
  (void)sc.spec();
  if (!sc.eps_list.empty()) check_dyadic(sc.eps_list);
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open scenario " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed scenario: ") + e.what());
  }
  try {
    return parse_scenario(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad scenario entry: ") + e.what());
  }
}

void write_state(const CorrectionState& st, const std::string& dir) {
  fs::create_directories(dir);
  write_with_sidecar(st.X.xhat, (fs::path(dir) / "X_minus_1.csv").string());
  write_with_sidecar(st.xs, (fs::path(dir) / "xs.csv").string());
  write_with_sidecar(st.xu, (fs::path(dir) / "xu.csv").string());
}

CorrectionState read_state(const std::string& dir, const OperatorConfig& cfg) {
  CorrectionState st;
  GridFunction X = read_with_sidecar((fs::path(dir) / "X_minus_1.csv").string());
  st.xs = read_with_sidecar((fs::path(dir) / "xs.csv").string());
  st.xu = read_with_sidecar((fs::path(dir) / "xu.csv").string());
  for (const GridFunction* g : {&X, &st.xs, &st.xu}) {
    if (std::abs(g->lo() + cfg.T) > 1e-9 || std::abs(g->hi() - cfg.T) > 1e-9 ||
        std::abs(g->delta() - cfg.delta) > 1e-12)
      throw Error("state grid does not match the scenario window");
  }
  if (!X.same_grid(st.xs) || !X.same_grid(st.xu)) throw Error("state files disagree on the grid");
  st.X = make_field(std::move(X), cfg.t_radii ? *cfg.t_radii : BallRadii{});
  return st;
}

Outcome run(const Scenario& sc, const Options& opt) {
  if (sc.charges) return run_charges(sc, opt);
  OperatorConfig cfg = sc.cfg;
  if (opt.max_iters) cfg.max_iters = *opt.max_iters;
  const PerturbationSpec spec = sc.spec();
  const fs::path out(opt.out);
  Outcome res;
  nlohmann::json summary = {{"name", sc.name}, {"seed", sc.seed}, {"epsilon", cfg.eps}};

  if (sc.t_radii && sc.s_radii && sc.u_radii) {
    PropagatedReport pr = propagated_bounds_report(*sc.frame, spec, cfg, *sc.t_radii, *sc.s_radii, *sc.u_radii);
    summary["propagated"] = propagated_to_json(pr);
    if (!pr.feasible) {
      fs::create_directories(out);
      summary["status"] = "infeasible";
      write_json(out / "report.json", summary);
      res.code = exit_code::infeasible;
      res.message = "radii are infeasible for this epsilon";
      res.summary = summary;
      return res;
    }
  }

  CoreRun r;
  try {
    r = solve(sc, spec, cfg);
  } catch (const RangeError& e) {
    fs::create_directories(out);
    summary["status"] = "diverged";
    summary["message"] = e.what();
    write_json(out / "report.json", summary);
    res.code = exit_code::diverged;
    res.message = e.what();
    res.summary = summary;
    return res;
  }
  fs::create_directories(out);
  write_state(r.state, (out / "state").string());
  write_iteration_csv(r.report, (out / "iterations.csv").string());
  summary["report"] = report_to_json(r.report);
  summary["core_half_width"] = r.core;
  summary["xhat_core"] = xhat_core_norm(r.state, r.core);
  summary["X_minus_1"] = sup_on(r.state.X.xhat, -r.core, r.core);

  if (r.report.converged()) {
    summary["residual"] = residual_table(sc, r, spec, cfg.eps, out / "residual.csv");
    if (r.report.kappa_hat < 1.0) {
      AposterioriInput in = sc.apost;
      in.E_eta = r.report.E_eta;
      in.kappa = r.report.kappa_hat;
      write_bounds_csv(aposteriori_bounds(in), (out / "bounds.csv").string());
    }
    if (sc.oracle) summary["oracle"] = oracle_table(*sc.oracle, r, cfg.eps, out / "oracle.csv");
    res.code = exit_code::ok;
  } else {
    res.code = exit_code::diverged;
  }
  summary["status"] = r.report.status;
  write_json(out / "report.json", summary);
  res.message = r.report.status + " after " + std::to_string(r.report.iterations) + " iterations";
  res.summary = summary;
  return res;
}

Outcome sweep(const Scenario& sc, const Options& opt) {
  if (sc.charges) throw Error("sweep: not available for charge scenarios");
  check_dyadic(sc.eps_list);
  const fs::path out(opt.out);
  Outcome res;
  std::vector<double> xh, Xn;
  std::ostringstream csv;
  csv << "epsilon,xhat_c0,X_minus_1_c0,iterations,status\n";
  nlohmann::json runs = nlohmann::json::array();
  for (double e : sc.eps_list) {
    OperatorConfig cfg = sc.cfg;
    cfg.eps = e;
    if (opt.max_iters) cfg.max_iters = *opt.max_iters;
    Scenario member = sc;
    member.cfg = cfg;
    CoreRun r;
    try {
      r = solve(member, member.spec(), cfg);
    } catch (const RangeError& ex) {
      res.code = exit_code::diverged;
      res.message = std::string("member run failed: ") + ex.what();
      return res;
    }
    if (!r.report.converged()) {
      res.code = exit_code::diverged;
      res.message = "member run at epsilon " + format_number(e) + " ended with " + r.report.status;
      return res;
    }
    double a = xhat_core_norm(r.state, r.core), b = sup_on(r.state.X.xhat, -r.core, r.core);
    xh.push_back(a);
    Xn.push_back(b);
    csv << format_number(e) << ',' << format_number(a) << ',' << format_number(b) << ',' << r.report.iterations
        << ',' << r.report.status << '\n';
    runs.push_back({{"epsilon", e}, {"xhat_c0", a}, {"X_minus_1_c0", b}, {"iterations", r.report.iterations}});
  }
  auto fit = [&](const std::vector<double>& y) -> nlohmann::json {
    if (std::any_of(y.begin(), y.end(), [](double v) { return !(v > 0); })) return nullptr;
    return numerics::loglog_slope(sc.eps_list, y);
  };
  res.summary = {{"name", sc.name}, {"runs", runs}, {"slope_xhat", fit(xh)}, {"slope_X", fit(Xn)}};
  fs::create_directories(out);
  write_text(out / "sweep.csv", csv.str());
  write_json(out / "sweep.json", res.summary);
  res.message = "slope of |xhat| " + res.summary["slope_xhat"].dump();
  return res;
}

Outcome verify(const Scenario& sc, const std::string& state_dir, const Options& opt) {
  if (sc.charges) throw Error("verify: not available for charge scenarios");
  const CorrectionState st = read_state(state_dir, sc.cfg);
  const PerturbationSpec spec = sc.spec();
  Certificate c = certify(*sc.frame, spec, sc.cfg, st);
  const fs::path out(opt.out);
  Outcome res;
  res.summary = {{"name", sc.name}, {"d_eta", c.d_eta}, {"d_next", c.d_next}, {"kappa_hat", c.kappa_hat},
                 {"E_eta", c.E_eta}, {"E_c", c.E_c}, {"E_s", c.E_s}, {"E_u", c.E_u}, {"tail", c.tail}};
  fs::create_directories(out);
  if (c.kappa_hat >= 1.0) {
    res.code = exit_code::diverged;
    res.message = "estimated contraction rate is not below 1";
    res.summary["status"] = "not_contracting";
  } else {
    AposterioriInput in = sc.apost;
    in.E_eta = c.E_eta;
    in.kappa = c.kappa_hat;
    write_bounds_csv(aposteriori_bounds(in), (out / "bounds.csv").string());
    res.summary["status"] = "certified";
    res.message = "E_eta " + format_number(c.E_eta);
  }
  write_json(out / "verify.json", res.summary);
  return res;
}

}  // namespace hypershadow

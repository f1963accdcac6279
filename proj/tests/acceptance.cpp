// Runs the ten acceptance criteria and prints one PASS/FAIL line each.
#include "hypershadow/electrodynamics.hpp"
#include "hypershadow/scenario.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>

using namespace hypershadow;

namespace {

const std::string kScenarios = std::string(HS_SOURCE_DIR) + "/scenarios/";

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Solved {
  Scenario sc;
  CorrectionState st;
  IterationReport rep;
  double core = 0.0;
};

std::map<std::string, Solved>& cache() {
  static std::map<std::string, Solved> c;
  return c;
}

const Solved& solved(const std::string& name) {
  auto it = cache().find(name);
  if (it != cache().end()) return it->second;
  Solved s;
  s.sc = load_scenario(kScenarios + name + ".json");
  auto [st, rep] = iterate(*s.sc.frame, s.sc.spec(), s.sc.cfg);
  s.st = std::move(st);
  s.rep = std::move(rep);
  s.core = core_half_width(s.sc.cfg, s.sc.spec().h, s.sc.cfg.t_radii ? s.sc.cfg.t_radii->level(0) : 0.0);
  return cache().emplace(name, std::move(s)).first->second;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

double oracle_s(const SineOracle& o, double eps, double r) { return o.xs(eps, r); }

std::vector<double> core_nodes(const GridFunction& g, double core) {
  std::vector<double> r;
  for (int i = 0; i < g.size(); ++i)
    if (std::abs(g.node(i)) <= core + 1e-12) r.push_back(g.node(i));
  return r;
}

const std::vector<std::string> kOracles{"oracle_a05_w1", "oracle_a05_w2", "oracle_a1_w1", "oracle_a1_w2"};

// ---------------------------------------------------------------- criteria

Verdict trivial_fixed_point() {
  Verdict v{true, ""};
  double worst = 0;
  int iters = 0;
  for (const char* n : {"trivial", "trivial_cubic", "trivial_cycle"}) {
    Scenario sc = load_scenario(kScenarios + n + ".json");
    auto [st, rep] = iterate(*sc.frame, sc.spec(), sc.cfg);
    double d = state_distance(st, zero_state(*sc.frame, sc.cfg), sc.cfg.eta).total();
    worst = std::max(worst, d);
    iters = std::max(iters, rep.iterations);
    v.pass = v.pass && rep.converged() && rep.iterations <= 2 && d <= 1e-12;
  }
  v.detail = "max iterations " + std::to_string(iters) + ", max distance " + fmt("%.1e", worst);
  return v;
}

Verdict linear_oracle() {
  Verdict v{true, ""};
  double worst = 0;
  for (const auto& n : kOracles) {
    const Solved& s = solved(n);
    double e = 0;
    for (int i = 0; i < s.st.xs.size(); ++i) {
      double r = s.st.xs.node(i);
      if (std::abs(r) <= s.core) e = std::max(e, std::abs(s.st.xs.at(i, 1) - oracle_s(*s.sc.oracle, s.sc.cfg.eps, r)));
    }
    worst = std::max(worst, e);
    v.pass = v.pass && s.rep.converged() && e <= 1e-6;
  }
  v.detail = "max C0 error " + fmt("%.2e", worst);
  return v;
}

Verdict independent_residual() {
  Verdict v{true, ""};
  double lin = 0, non = 0;
  for (const char* n : {"oracle_a05_w1", "oracle_a05_w2", "oracle_a1_w1", "oracle_a1_w2", "trivial", "trivial_cubic",
                        "trivial_cycle", "sdd_cubic", "neutral_cubic", "nested_cubic", "small_delay_cycle",
                        "radii_feasible"}) {
    const Solved& s = solved(n);
    if (!s.rep.converged()) {
      v.pass = false;
      continue;
    }
    double r = residual_fde(*s.sc.frame, s.st, s.sc.spec(), s.sc.cfg.eps, core_nodes(s.st.xs, s.core)).sup;
    bool linear = s.sc.frame->model().id == "lin-saddle";
    (linear ? lin : non) = std::max(linear ? lin : non, r);
  }
  v.pass = v.pass && lin <= 1e-6 && non <= 1e-5;
  v.detail = "linear " + fmt("%.2e", lin) + ", nonlinear/Floquet " + fmt("%.2e", non);
  return v;
}

ScalarField random_field(std::mt19937& g, double amp) {
  std::uniform_real_distribution<double> U(-1, 1);
  double a = amp * U(g), b = amp * U(g) / 2, k1 = 0.5 + std::abs(U(g)), k2 = 1.0 + std::abs(U(g)), p = 3 * U(g);
  return field_from_function(-20, 20, 0.01, [=](double r) { return 1 + a * std::sin(k1 * r + p) + b * std::cos(k2 * r); },
                             7);
}

CorrectionState random_state(const HyperbolicFrame& fr, const OperatorConfig& cfg, std::mt19937& g, double amp) {
  std::uniform_real_distribution<double> U(-1, 1);
  const double a = amp * U(g), k = 0.3 + 0.5 * std::abs(U(g)), p = 3 * U(g), k2 = 0.3 + 0.5 * std::abs(U(g));
  CorrectionState s = zero_state(fr, cfg);
  s.X = field_from_function(-cfg.T, cfg.T, cfg.delta, [&](double r) { return 1 + a * std::sin(k * r + p); },
                            cfg.interp_order);
  const int n = fr.n();
  Vec c(n), ph(n);
  for (int i = 0; i < n; ++i) {
    c(i) = amp * U(g);
    ph(i) = 3 * U(g);
  }
  for (int i = 0; i < s.xs.size(); ++i) {
    double r = s.xs.node(i);
    Vec w(n);
    for (int j = 0; j < n; ++j) w(j) = c(j) * std::cos(k2 * r + ph(j));
    s.xs.set(i, fr.proj(r, Bundle::stable) * w);
    s.xu.set(i, fr.proj(r, Bundle::unstable) * w);
  }
  return s;
}

Verdict contraction_lemmas() {
  std::mt19937 rng(20240501);
  int flow_bad = 0, comp_bad = 0, B_bad = 0, phi_bad = 0, con_bad = 0;
  double worst_B = 0, worst_phi = 0, worst_con = 0;
  for (int k = 0; k < 100; ++k) {
    ScalarField X = random_field(rng, 0.2), Y = random_field(rng, 0.2);
    flow_bad += !flow_difference_eta(X, Y, {0.5}).holds();
    comp_bad += !composite_difference_eta(X, Y, {0.5}, 1.0).holds();
  }
  const std::vector<std::string> names{"sdd_cubic", "neutral_cubic", "nested_cubic", "small_delay_cycle"};
  std::vector<Scenario> scs;
  for (const auto& n : names) {
    Scenario sc = load_scenario(kScenarios + n + ".json");
    sc.cfg.T = 12;
    sc.cfg.T_int = 8;
    scs.push_back(std::move(sc));
  }
  for (int k = 0; k < 100; ++k) {
    const Scenario& sc = scs[k % scs.size()];
    const PerturbationSpec spec = sc.spec();
    CorrectionState a = random_state(*sc.frame, sc.cfg, rng, 0.02), b = random_state(*sc.frame, sc.cfg, rng, 0.02);
    DifferenceProbe d = difference_probe(*sc.frame, spec, sc.cfg, a, b);
    ContractionProbe c = contraction_probe(*sc.frame, spec, sc.cfg, a, b);
    B_bad += !d.B.holds();
    phi_bad += !d.varphi.holds();
    con_bad += !c.holds;
    if (d.B.rhs > 0) worst_B = std::max(worst_B, d.B.lhs / d.B.rhs);
    if (d.varphi.rhs > 0) worst_phi = std::max(worst_phi, d.varphi.lhs / d.varphi.rhs);
    if (c.predicted > 0) worst_con = std::max(worst_con, c.measured / c.predicted);
  }
  Verdict v;
  v.pass = flow_bad + comp_bad + B_bad + phi_bad + con_bad == 0;
  std::ostringstream os;
  os << "violations flow " << flow_bad << ", composite " << comp_bad << ", B " << B_bad << ", varphi " << phi_bad
     << ", contraction " << con_bad << "; worst ratios B " << fmt("%.2f", worst_B) << ", varphi "
     << fmt("%.2f", worst_phi) << ", contraction " << fmt("%.3f", worst_con);
  v.detail = os.str();
  return v;
}

Verdict flow_distortion() {
  std::mt19937 rng(77);
  int bad = 0;
  for (int k = 0; k < 100; ++k) bad += distortion_check(solve_flow(random_field(rng, 0.3), -8, 8)).violations;
  auto constant = [](double c) { return field_from_function(-20, 20, 0.01, [=](double) { return c; }, 7); };
  DistortionReport up = distortion_check(solve_flow(constant(1.2), -5, 5));
  DistortionReport lo = distortion_check(solve_flow(constant(0.8), -5, 5));
  double eq = std::max({std::abs(up.worst_upper), std::abs(up.worst_inverse_lower), std::abs(lo.worst_lower),
                        std::abs(lo.worst_inverse_upper)});
  Verdict v;
  v.pass = bad == 0 && up.violations == 0 && lo.violations == 0 && eq <= 1e-9;
  v.detail = std::to_string(bad) + " violations on 100 fields; constant-field equality gap " + fmt("%.1e", eq);
  return v;
}

Verdict eps_scaling() {
  Verdict v{true, ""};
  std::ostringstream os;
  for (const char* n : {"sdd_cubic", "neutral_cubic", "small_delay_cycle"}) {
    Scenario sc = load_scenario(kScenarios + n + ".json");
    std::vector<double> nx;
    for (double e : sc.eps_list) {
      OperatorConfig cfg = sc.cfg;
      cfg.eps = e;
      Scenario m = sc;
      m.cfg = cfg;
      const PerturbationSpec spec = m.spec();
      auto [st, rep] = iterate(*m.frame, spec, cfg);
      double core = core_half_width(cfg, spec.h, 0.0);
      nx.push_back(rep.converged() ? sup_on(st.xs + st.xu, -core, core) : 0.0);
    }
    bool ok = std::all_of(nx.begin(), nx.end(), [](double x) { return x > 0; });
    double slope = ok ? numerics::loglog_slope(sc.eps_list, nx) : 0.0;
    v.pass = v.pass && ok && std::abs(slope - 1.0) <= 0.05;
    os << n << " " << fmt("%.3f", slope) << ", ";
  }
  MultiArgField g = single_arg_field(limit_cycle_model());
  std::vector<DelayFunctional> taus{state_delay(1.0, 0.3, 0)};
  PerturbationSpec p = small_delay_q(g, taus, 1.0);
  HistorySegment off;
  off.t = 1.0;
  off.h = 1.0;
  off.eval = [](double s) { Vec x(2); x << 1.2 * std::cos(1 + s), 0.8 * std::sin(1 + s); return x; };
  off.eval_deriv = [](double s) { Vec x(2); x << -1.2 * std::sin(1 + s), 0.8 * std::cos(1 + s); return x; };
  std::vector<double> eps{0.04, 0.02, 0.01}, gap;
  const Vec limit = p.evaluate(1.0, off, 0.0);
  double same = 0;
  for (double e : eps) {
    Vec q = small_delay_difference_quotient(g, taus, off, e);
    same = std::max(same, (q - p.evaluate(1.0, off, e)).norm());
    gap.push_back((q - limit).norm());
  }
  double qs = numerics::loglog_slope(eps, gap);
  v.pass = v.pass && same <= 1e-10 && std::abs(qs - 1.0) <= 0.05;
  os << "quotient rate " << fmt("%.3f", qs);
  v.detail = os.str();
  return v;
}

Verdict normalizations() {
  Verdict v{true, ""};
  double cn = 0, ph = 0;
  int n = 0;
  for (const auto& [name, s] : cache()) {
    for (const auto& r : s.rep.records) {
      cn = std::max(cn, r.center_norm);
      ph = std::max(ph, std::abs(r.phi0));
      ++n;
    }
  }
  v.pass = n > 0 && cn <= 1e-8 && ph == 0.0;
  v.detail = std::to_string(n) + " iterates, max center component " + fmt("%.1e", cn) + ", max |phi(0)| " +
             fmt("%.1e", ph);
  return v;
}

Verdict electrodynamic_delays() {
  Verdict v{true, ""};
  ChargePath origin = static_path(v3(0, 0, 0));
  double defect = 0;
  DelaySolution st = solve_delay(origin, static_path(v3(0, 2, 0)), 0.1, DelayMode::retarded, -5, 5, 0.05);
  defect = std::max(defect, st.max_defect);
  ChargePath mv = uniform_path(v3(2, 0, 0), v3(0.5, 0, 0));
  DelaySolution un = solve_delay(origin, mv, 0.2, DelayMode::retarded, -3, 3, 0.05);
  defect = std::max(defect, un.max_defect);
  double closed = 0;
  for (int i = 0; i < un.tau.size(); ++i)
    closed = std::max(closed, std::abs(un.tau.at(i) - uniform_motion_delay(2, 0.5, 0.2, un.tau.node(i))));
  ChargePath circ = circular_path(v3(0, 0, 0), 1.0, 1.0);
  for (DelayMode m : {DelayMode::retarded, DelayMode::advanced}) {
    DelaySolution c = solve_delay(static_path(v3(3, 0, 0)), circ, 0.05, m, -5, 5, 0.05);
    defect = std::max(defect, c.max_defect);
    DelaySolution cc = solve_delay(origin, circ, 0.05, m, -5, 5, 0.05);
    defect = std::max(defect, cc.max_defect);
  }
  const std::vector<double> eps{1e-2, 5e-3, 2.5e-3};
  double s_un = delay_expansion_check(origin, mv, eps, -1, 1, 0.05).slope;
  double s_ci = delay_expansion_check(static_path(v3(3, 0, 0)), circ, eps, -5, 5, 0.05).slope;
  v.pass = defect <= 1e-12 && closed <= 1e-12 && s_un >= 2.7 && s_ci >= 2.7;
  v.detail = "max defect " + fmt("%.1e", defect) + ", closed-form error " + fmt("%.1e", closed) +
             ", expansion slopes " + fmt("%.2f", s_un) + " / " + fmt("%.2f", s_ci);
  return v;
}

Verdict aposteriori_sandwich() {
  Verdict v{true, ""};
  double lo_ratio = 1e300, hi_ratio = 0;
  std::string worst_case;
  auto check = [&](const Scenario& sc, const CorrectionState& st, double E, double kappa, const char* tag) {
    AposterioriInput in = sc.apost;
    in.E_eta = E;
    in.kappa = kappa;
    GridFunction d = derivative(st.xs, 1);
    double e0 = 0, e1 = 0;
    for (int i = 0; i < st.xs.size(); ++i) {
      double r = st.xs.node(i);
      if (r < in.a - 1e-12 || r > in.b + 1e-12) continue;
      e0 = std::max(e0, std::abs(st.xs.at(i, 1) - sc.oracle->xs(sc.cfg.eps, r)));
      e1 = std::max(e1, std::abs(d.at(i, 1) - sc.oracle->dxs(sc.cfg.eps, r)));
    }
    for (const auto& row : aposteriori_bounds(in)) {
      if (row.quantity != "xhat" || row.kind != "interval" || row.j > 1) continue;
      double err = row.j == 0 ? e0 : e1;
      bool ok = err <= row.bound && row.bound <= 1e4 * err;
      v.pass = v.pass && ok;
      if (err > 0) {
        lo_ratio = std::min(lo_ratio, row.bound / err);
        if (row.bound / err > hi_ratio) {
          hi_ratio = row.bound / err;
          worst_case = sc.name + " " + tag + " j=" + std::to_string(row.j) + " E_eta " + fmt("%.1e", E);
        }
      }
    }
  };
  for (const auto& n : kOracles) {
    const Solved& s = solved(n);
    check(s.sc, s.st, s.rep.E_eta, s.rep.kappa_hat, "converged");
    CorrectionState bumped = s.st;
    for (int i = 0; i < bumped.xs.size(); ++i) {
      double r = bumped.xs.node(i);
      Vec x = bumped.xs.value(i);
      x(1) += 1e-4 * std::exp(-r * r);
      bumped.xs.set(i, x);
    }
    Certificate c = certify(*s.sc.frame, s.sc.spec(), s.sc.cfg, bumped);
    check(s.sc, bumped, c.E_eta, c.kappa_hat, "perturbed");
  }
  v.detail = "bound / true error in [" + fmt("%.2f", lo_ratio) + ", " + fmt("%.1f", hi_ratio) + "], largest at " +
             worst_case;
  return v;
}

Verdict propagated_feasibility() {
  PropagatedInputs in;
  in.q.C_Pi = in.q.C_U = 1;
  in.q.lambda_s = in.q.lambda_u = 1;
  in.norms.f0 = in.norms.f1 = in.norms.f2 = 1;
  in.b = 1;
  in.t0 = 0.1;
  in.s0 = 0.1;
  in.u0 = 0.1;
  double bs0 = propagated_bounds(in, 0.0).b_s0;
  double hand = (0.1 * 0.2 + 0.5 * 0.2 * 0.2) / (1 - 0.1);
  const Solved& s = solved("radii_feasible");
  PropagatedReport pr = propagated_bounds_report(*s.sc.frame, s.sc.spec(), s.sc.cfg, *s.sc.t_radii, *s.sc.s_radii,
                                                 *s.sc.u_radii);
  int outside = 0;
  for (const auto& r : s.rep.records) outside += !r.inside_ball;
  Verdict v;
  v.pass = std::abs(bs0 - hand) <= 1e-12 && pr.feasible && s.rep.converged() && outside == 0;
  v.detail = "b_s0 " + fmt("%.15f", bs0) + ", feasible " + (pr.feasible ? "yes" : "no") + ", " +
             std::to_string(outside) + " of " + std::to_string(s.rep.records.size()) + " iterates outside the balls";
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
    double budget;
  };
  const std::vector<Criterion> all{
      {1, "trivial fixed point", trivial_fixed_point, 1.0},
      {2, "linear oracle", linear_oracle, 40.0},
      {3, "independent residual", independent_residual, 0.0},
      {4, "contraction lemmas", contraction_lemmas, 60.0},
      {5, "flow distortion", flow_distortion, 0.0},
      {6, "epsilon scaling", eps_scaling, 0.0},
      {7, "normalizations", normalizations, 0.0},
      {8, "electrodynamic delays", electrodynamic_delays, 10.0},
      {9, "a-posteriori sandwich", aposteriori_sandwich, 0.0},
      {10, "propagated bounds", propagated_feasibility, 0.0},
  };
  int failed = 0;
  for (const auto& c : all) {
    auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget > 0 && sec > c.budget) {
      v.pass = false;
      v.detail += " (over the " + fmt("%.0f", c.budget) + " s budget)";
    }
    failed += !v.pass;
    std::printf("%s  %2d %-24s %7.2fs  %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, sec, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}

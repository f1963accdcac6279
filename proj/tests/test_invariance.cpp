#include "hypershadow/invariance.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace hypershadow;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

FramePtr lin() { return analytic_frame({"lin-saddle", 1, 1, 0, 0, 0}); }
FramePtr cubic(double c = 0.5) { return analytic_frame({"cubic-saddle", 1, 1.5, c, 0, 0}); }

OperatorConfig base_config(double eps) {
  OperatorConfig cfg;
  cfg.T = 30;
  cfg.T_int = 20;
  cfg.eps = eps;
  return cfg;
}

/// (0, a sin(omega x_0(t - 1)), 0) in the stable slot, or the unstable one.
PerturbationSpec sine_forcing(double a, double w, int slot = 1) {
  return state_dependent_delay(3, trig_map(3, slot, 0, a, w, 0, 0), constant_shift(-1), 1.0);
}

PerturbationSpec cubic_sdd() {
  return state_dependent_delay(3, trig_map(3, 1, 0, 1, 1, 0, 0.3), tanh_shift(-0.5, 0.2, 1), 1.0);
}

double oracle_s(double eps, double a, double w, double r) {
  double p = w * (r - 1);
  return eps * a * (std::sin(p) - w * std::cos(p)) / (1 + w * w);
}
double oracle_ds(double eps, double a, double w, double r) {
  double p = w * (r - 1);
  return eps * a * w * (std::cos(p) + w * std::sin(p)) / (1 + w * w);
}
double oracle_u(double eps, double a, double w, double r) {
  double p = w * (r - 1);
  return -eps * a * (std::sin(p) + w * std::cos(p)) / (1 + w * w);
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
    Vec v(n);
    for (int j = 0; j < n; ++j) v(j) = c(j) * std::cos(k2 * r + ph(j));
    s.xs.set(i, fr.proj(r, Bundle::stable) * v);
    s.xu.set(i, fr.proj(r, Bundle::unstable) * v);
  }
  return s;
}

std::vector<double> core_nodes(const GridFunction& g, double core) {
  std::vector<double> r;
  for (int i = 0; i < g.size(); ++i)
    if (std::abs(g.node(i)) <= core + 1e-12) r.push_back(g.node(i));
  return r;
}

}  // namespace

TEST_CASE("config validation") {
  FramePtr fr = lin();
  OperatorConfig cfg = base_config(0.0);
  CHECK_NOTHROW(validate_config(*fr, cfg));
  OperatorConfig bad = cfg;
  bad.eta = 1.0;
  CHECK_THROWS_AS(validate_config(*fr, bad), Error);
  bad = cfg;
  bad.quadrature_step = 0.03;
  CHECK_THROWS_AS(validate_config(*fr, bad), Error);
  bad = cfg;
  bad.T_int = -1;
  CHECK_THROWS_AS(validate_config(*fr, bad), Error);
}

TEST_CASE("Taylor remainder") {
  CHECK(taylor_remainder(*cubic(1.0), Vec::Zero(3), 0.3).norm() == 0.0);
  CHECK(taylor_remainder(*lin(), v3(0.3, -0.2, 0.5), 1.0).norm() <= 1e-15);
  Vec T = taylor_remainder(*cubic(1.0), v3(0, 0.1, 0), 0.0);
  CHECK(std::abs(T(1) - 1e-3) <= 1e-15);
  CHECK(std::abs(T(0) - 1e-2) <= 1e-15);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> U(-0.2, 0.2);
  FramePtr fc = cubic(0.7);
  for (int k = 0; k < 20; ++k) {
    Vec x = v3(U(rng), U(rng), U(rng));
    double rho = 10 * U(rng);
    CHECK((taylor_remainder(*fc, x, rho) - taylor_remainder_integral(*fc, x, rho)).norm() <= 1e-12);
  }
}

TEST_CASE("quadratic term") {
  CHECK(quadratic_term(*cubic(), 1.0, Vec::Zero(3), 0.5).norm() == 0.0);
  CHECK(quadratic_term(*lin(), 1.0, v3(0, 0.3, -0.1), 0.5).norm() <= 1e-15);
  Vec B = quadratic_term(*lin(), 0.9, v3(0, 0.2, 0), 0.5);
  CHECK(B(1) == doctest::Approx(0.1 * (-1.0 * 0.2)).epsilon(1e-14));
}

TEST_CASE("perturbation term along the orbit") {
  FramePtr fr = lin();
  OperatorConfig cfg = base_config(0.01);
  CorrectionState z = zero_state(*fr, cfg);
  PerturbationSpec zs = zero_perturbation(3);
  zs.h = 1.0;
  StateView v0(*fr, z, cfg, 1.0);
  CHECK(perturb_term(*fr, v0, zs, 2.0, 0.01).norm() == 0.0);
  PerturbationSpec s = sine_forcing(0.7, 2.0);
  Vec p = perturb_term(*fr, v0, s, 2.0, 0.01);
  CHECK(p(1) == doctest::Approx(0.7 * std::sin(2.0)).epsilon(1e-14));
  CHECK(p(0) == 0.0);
}

TEST_CASE("center equation") {
  FramePtr fr = lin();
  OperatorConfig cfg = base_config(0.0);
  CorrectionState z = zero_state(*fr, cfg);
  ScalarField X0 = gamma_c(*fr, z, sine_forcing(1, 1), cfg);
  CHECK(norm_ck(X0.xhat, 0) == 0.0);
  cfg.eps = 0.01;
  CHECK(norm_ck(gamma_c(*fr, z, sine_forcing(1, 1), cfg).xhat, 0) <= 1e-15);
  VectorMap cst{[](double, const Vec&) { return v3(0.3, 0, 0); }, 0, 0};
  PerturbationSpec c = ode_term(3, cst);
  c.h = 1.0;
  ScalarField X = gamma_c(*fr, z, c, cfg);
  CHECK(sup_on(X.xhat, -10, 10) == doctest::Approx(0.003).epsilon(1e-12));
}

TEST_CASE("bundle integrals against closed forms") {
  FramePtr fr = lin();
  OperatorConfig cfg = base_config(0.01);
  CorrectionState z = zero_state(*fr, cfg);
  const double a = 1.0, w = 2.0, core = core_half_width(cfg, 1.0, 0.0);
  GridFunction gs = gamma_s(*fr, z, sine_forcing(a, w, 1), cfg);
  GridFunction gu = gamma_u(*fr, z, sine_forcing(a, w, 2), cfg);
  double es = 0, eu = 0;
  for (int i = 0; i < gs.size(); ++i) {
    double r = gs.node(i);
    if (std::abs(r) > core) continue;
    es = std::max(es, std::abs(gs.at(i, 1) - oracle_s(0.01, a, w, r)));
    eu = std::max(eu, std::abs(gu.at(i, 2) - oracle_u(0.01, a, w, r)));
  }
  CHECK(es <= 1e-8);
  CHECK(eu <= 1e-8);
}

TEST_CASE("parallel kernel sums match the serial reference") {
  FramePtr fr = cubic();
  OperatorConfig cfg = base_config(0.004);
  cfg.T = 12;
  cfg.T_int = 8;
  std::mt19937 rng(9);
  CorrectionState st = random_state(*fr, cfg, rng, 0.01);
  PerturbationSpec sp = cubic_sdd();
  for (Bundle b : {Bundle::stable, Bundle::unstable}) {
    BundleIntegral par = gamma_bundle(*fr, st, sp, cfg, b);
    OperatorConfig ser = cfg;
    ser.parallel = false;
    BundleIntegral seq = gamma_bundle(*fr, st, sp, ser, b);
    BundleIntegral ref = gamma_bundle_reference(*fr, st, sp, cfg, b);
    double d1 = 0, d2 = 0;
    for (std::size_t i = 0; i < par.value.data().size(); ++i) {
      d1 = std::max(d1, std::abs(par.value.data()[i] - ref.value.data()[i]));
      d2 = std::max(d2, std::abs(par.value.data()[i] - seq.value.data()[i]));
    }
    CHECK(d1 <= 1e-12);
    CHECK(d2 == 0.0);
    CHECK(par.tail == doctest::Approx(ref.tail));
  }
}

TEST_CASE("gamma step") {
  FramePtr fr = lin();
  OperatorConfig cfg = base_config(0.0);
  CorrectionState z = zero_state(*fr, cfg);
  StepResult r0 = gamma_step(*fr, z, sine_forcing(1, 2), cfg);
  CHECK(r0.defect.total() == 0.0);
  CHECK(norm_ck(r0.next.xs, 0) == 0.0);
  cfg.eps = 0.01;
  StepResult r1 = gamma_step(*fr, z, sine_forcing(1, 2), cfg);
  const double core = core_half_width(cfg, 1.0, 0.0);
  double err = 0;
  for (double r : core_nodes(r1.next.xs, core)) err = std::max(err, std::abs(r1.next.xs(r)(1) - oracle_s(0.01, 1, 2, r)));
  CHECK(err <= 1e-8);
  CHECK(r1.center_norm <= 1e-8);
  CHECK(r1.phi0 == 0.0);
}

TEST_CASE("trivial fixed point") {
  for (FramePtr fr : {lin(), cubic()}) {
    auto [st, rep] = iterate(*fr, cubic_sdd(), base_config(0.0));
    CHECK(rep.converged());
    CHECK(rep.iterations == 1);
    CHECK(norm_ck(st.X.xhat, 0) == 0.0);
    CHECK(norm_ck(st.xs, 0) + norm_ck(st.xu, 0) == 0.0);
  }
}

TEST_CASE("linear oracle") {
  FramePtr fr = lin();
  for (double a : {0.5, 1.0})
    for (double w : {1.0, 2.0}) {
      OperatorConfig cfg = base_config(0.01);
      auto [st, rep] = iterate(*fr, sine_forcing(a, w), cfg);
      REQUIRE(rep.converged());
      const double core = core_half_width(cfg, 1.0, 0.0);
      GridFunction d = derivative(st.xs, 1);
      double e0 = 0, e1 = 0;
      for (int i = 0; i < st.xs.size(); ++i) {
        double r = st.xs.node(i);
        if (std::abs(r) > core) continue;
        e0 = std::max(e0, std::abs(st.xs.at(i, 1) - oracle_s(0.01, a, w, r)));
        e1 = std::max(e1, std::abs(d.at(i, 1) - oracle_ds(0.01, a, w, r)));
      }
      CHECK(e0 <= 1e-6);
      CHECK(e1 <= 1e-5);
      CHECK(norm_ck(st.X.xhat, 0) <= 1e-15);
      ResidualReport rr = residual_fde(*fr, st, sine_forcing(a, w), 0.01, core_nodes(st.xs, core));
      CHECK(rr.sup <= 1e-6);
    }
}

TEST_CASE("nonlinear run: invariants along the iteration") {
  FramePtr fr = cubic();
  OperatorConfig cfg = base_config(0.004);
  PerturbationSpec sp = cubic_sdd();
  auto [st, rep] = iterate(*fr, sp, cfg);
  REQUIRE(rep.converged());
  CHECK(rep.kappa_hat < 1.0);
  for (std::size_t k = 2; k < rep.records.size(); ++k) CHECK(rep.records[k].d_eta <= rep.records[k - 1].d_eta);
  for (const auto& r : rep.records) {
    CHECK(r.center_norm <= 1e-8);
    CHECK(r.phi0 == 0.0);
  }
  StepResult again = gamma_step(*fr, st, sp, cfg);
  CHECK(again.defect.X <= 2 * cfg.tol_eta);
  CHECK(again.defect.xs + again.defect.dxs <= 2 * cfg.tol_eta);
  CHECK(again.defect.xu + again.defect.dxu <= 2 * cfg.tol_eta);
  const double core = core_half_width(cfg, sp.h, 0.0);
  CHECK(residual_fde(*fr, st, sp, cfg.eps, core_nodes(st.xs, core)).sup <= 1e-5);
  // range constraints of the two displacements
  for (int i = 0; i < st.xs.size(); i += 5) {
    double r = st.xs.node(i);
    CHECK((st.xs.value(i) - fr->proj(r, Bundle::stable) * st.xs.value(i)).norm() <= 1e-8);
    CHECK((st.xu.value(i) - fr->proj(r, Bundle::unstable) * st.xu.value(i)).norm() <= 1e-8);
  }
  // derivative identity xs' = Df(x0) xs + Pi^s (B + eps varphi) / X
  StateView view(*fr, st, cfg, sp.h);
  GridFunction dxs = derivative(st.xs, 1);
  double worst = 0;
  for (int i = 0; i < st.xs.size(); ++i) {
    double r = st.xs.node(i);
    if (std::abs(r) > core) continue;
    Vec rhs = fr->model().Df(fr->orbit(r)) * st.xs.value(i) +
              fr->proj(r, Bundle::stable) * forcing(*fr, view, sp, r, cfg.eps) / st.X(r);
    worst = std::max(worst, (dxs.value(i) - rhs).norm());
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("first-order response in epsilon") {
  FramePtr fr = cubic();
  std::vector<double> eps{4e-3, 2e-3, 1e-3}, nx;
  for (double e : eps) {
    OperatorConfig cfg = base_config(e);
    auto [st, rep] = iterate(*fr, cubic_sdd(), cfg);
    REQUIRE(rep.converged());
    const double core = core_half_width(cfg, 1.0, 0.0);
    nx.push_back(sup_on(st.xs + st.xu, -core, core));
  }
  CHECK(numerics::loglog_slope(eps, nx) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(numerics::loglog_r2(eps, nx) >= 0.999);
}

TEST_CASE("independent residual") {
  FramePtr fr = lin();
  OperatorConfig cfg = base_config(0.0);
  CorrectionState z = zero_state(*fr, cfg);
  CHECK(residual_fde(*fr, z, sine_forcing(1, 1), 0.0, core_nodes(z.xs, 5)).sup <= 1e-8);
  cfg.eps = 0.01;
  auto [st, rep] = iterate(*fr, sine_forcing(1, 1), cfg);
  CorrectionState bumped = st;
  for (int i = 0; i < bumped.xs.size(); ++i) {
    double r = bumped.xs.node(i);
    bumped.xs.set(i, bumped.xs.value(i) + v3(0, 1e-3 * std::exp(-r * r), 0));
  }
  CHECK(residual_fde(*fr, bumped, sine_forcing(1, 1), 0.01, core_nodes(st.xs, 5)).sup > 1e-4);
}

TEST_CASE("a-posteriori bounds") {
  AposterioriInput in;
  in.E_eta = 0.0;
  for (const auto& row : aposteriori_bounds(in)) CHECK(row.bound == 0.0);
  in.E_eta = 1e-4;
  in.kappa = 0.5;
  in.a = -2;
  in.b = 2;
  in.eta = 0.25;
  in.ell = 1;
  in.M = 1;
  bool seen = false;
  for (const auto& row : aposteriori_bounds(in))
    if (row.quantity == "X" && row.kind == "interval" && row.j == 0) {
      CHECK(row.bound == doctest::Approx(std::exp(0.5) * 2 * 1e-4).epsilon(1e-12));
      seen = true;
    }
  CHECK(seen);
  in.kappa = 1.0;
  CHECK_THROWS_AS((void)aposteriori_bounds(in), Error);
}

TEST_CASE("a-posteriori bounds sandwich the true error") {
  FramePtr fr = lin();
  OperatorConfig cfg = base_config(0.01);
  const double a = 1, w = 1;
  CorrectionState v = zero_state(*fr, cfg);
  for (int i = 0; i < v.xs.size(); ++i) {
    double r = v.xs.node(i);
    v.xs.set(i, v3(0, oracle_s(0.01, a, w, r) + 1e-4 * std::exp(-r * r), 0));
  }
  Certificate c = certify(*fr, sine_forcing(a, w), cfg, v);
  AposterioriInput in;
  in.E_eta = c.E_eta;
  in.kappa = c.kappa_hat;
  in.eta = cfg.eta;
  double e0 = 0, e1 = 0;
  GridFunction d = derivative(v.xs, 1);
  for (int i = 0; i < v.xs.size(); ++i) {
    double r = v.xs.node(i);
    if (std::abs(r) > 2) continue;
    e0 = std::max(e0, std::abs(v.xs.at(i, 1) - oracle_s(0.01, a, w, r)));
    e1 = std::max(e1, std::abs(d.at(i, 1) - oracle_ds(0.01, a, w, r)));
  }
  for (const auto& row : aposteriori_bounds(in)) {
    if (row.quantity != "xhat" || row.kind != "interval" || row.j > 1) continue;
    double err = row.j == 0 ? e0 : e1;
    CHECK(err <= row.bound);
    CHECK(row.bound <= 1e4 * err);
  }
}

TEST_CASE("propagated bounds") {
  PropagatedInputs in;
  in.q.C_Pi = in.q.C_U = 1;
  in.q.lambda_s = in.q.lambda_u = 1;
  in.norms.f0 = in.norms.f1 = in.norms.f2 = 1;
  in.b = 1;
  in.t0 = 0.1;
  in.s0 = 0.1;
  in.u0 = 0.1;
  PropagatedReport r = propagated_bounds(in, 0.0);
  CHECK(std::abs(r.b_s0 - (0.1 * 0.2 + 0.5 * 0.04) / 0.9) <= 1e-12);
  CHECK(std::abs(r.b_s0 - 0.044444444444444446) <= 1e-12);
  CHECK(zero_order_bundle_constant(1, 1, 1, 0.1, 1, 1, 0.2) == doctest::Approx(r.b_s0));
  PropagatedInputs z;
  z.p_sup = 1.0;
  z.s1 = z.u1 = 0.5;
  PropagatedReport rz = propagated_bounds(z, 0.0);
  CHECK(rz.b_c0 == 0.0);
  CHECK(rz.b_s0 == 0.0);
  CHECK(rz.b_u0 == 0.0);
  FramePtr fr = lin();
  OperatorConfig cfg = base_config(0.01);
  PropagatedReport tiny =
      propagated_bounds_report(*fr, sine_forcing(1, 1), cfg, BallRadii({0.01, 0.1, 0.1}), BallRadii({1e-5, 1e-4, 1e-4}),
                               BallRadii({1e-5, 1e-4, 1e-4}));
  CHECK_FALSE(tiny.feasible);
  PropagatedReport ok = propagated_bounds_report(*fr, sine_forcing(1, 1), cfg, BallRadii({0.1, 1, 1}),
                                                 BallRadii({0.1, 1, 1}), BallRadii({0.1, 1, 1}));
  CHECK(ok.feasible);
}

TEST_CASE("contraction probe") {
  FramePtr fr = lin();
  OperatorConfig cfg = base_config(0.01);
  cfg.T = 12;
  cfg.T_int = 8;
  std::mt19937 rng(42);
  CorrectionState v = random_state(*fr, cfg, rng, 0.02);
  ContractionProbe same = contraction_probe(*fr, sine_forcing(1, 1), cfg, v, v);
  CHECK(same.input.total() == 0.0);
  CHECK(same.output.total() == 0.0);
  for (int k = 0; k < 8; ++k) {
    CorrectionState a = random_state(*fr, cfg, rng, 0.02), b = random_state(*fr, cfg, rng, 0.02);
    ContractionProbe p = contraction_probe(*fr, sine_forcing(1, 1), cfg, a, b);
    CHECK(p.holds);
    DifferenceProbe d = difference_probe(*fr, sine_forcing(1, 1), cfg, a, b);
    CHECK(d.B.holds());
    CHECK(d.varphi.holds());
  }
  OperatorConfig bad = cfg;
  bad.eta = 1.0;
  CHECK_THROWS_AS((void)contraction_probe(*fr, sine_forcing(1, 1), bad, v, v), Error);
}

TEST_CASE("report serialization") {
  FramePtr fr = lin();
  auto [st, rep] = iterate(*fr, sine_forcing(1, 1), base_config(0.01));
  nlohmann::json j = report_to_json(rep);
  CHECK(j["status"] == "converged");
  CHECK(j["records"].size() == rep.records.size());
  auto p = std::filesystem::temp_directory_path() / "hs_iter.csv";
  write_iteration_csv(rep, p.string());
  CHECK(std::filesystem::file_size(p) > 10);
}

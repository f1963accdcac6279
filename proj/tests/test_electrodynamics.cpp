#include "hypershadow/electrodynamics.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace hypershadow;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

ChargeSystem moving_pair(double eps, double mixing) {
  ChargeSystem s;
  s.paths = {static_path(v3(2, 0, 0)), circular_path(v3(0, 0, 0), 1.0, 1.0)};
  s.masses = {1, 1};
  s.charges = {1, -1};
  s.eps = eps;
  s.mixing = mixing;
  return s;
}

Vec accel(const ChargeSystem& s, double t) {
  PerturbationSpec p = assemble_charge_perturbation(s, force_from_system(s));
  return apply_P(p, stacked_trajectory(s, -5, 5), s.eps, t);
}

}  // namespace

TEST_CASE("static pair") {
  ChargePath a = static_path(v3(0, 0, 0)), b = static_path(v3(0, 2.5, 0));
  DelaySolution s = solve_delay(a, b, 0.1, DelayMode::retarded, -3, 3, 0.05);
  for (int i = 0; i < s.tau.size(); ++i) CHECK(s.tau.at(i) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(s.max_defect <= 1e-12);
  CHECK(delay_defect(s.tau, a, b, 0.1, DelayMode::retarded) <= 1e-12);
  ExpansionReport e = delay_expansion_check(a, b, {1e-2, 5e-3, 2.5e-3}, -3, 3, 0.05);
  CHECK(e.exact);
  for (double d : e.deviation) CHECK(d <= 1e-15);
}

TEST_CASE("uniform motion closed form") {
  const double d = 2.0, v = 0.5, eps = 0.2;
  ChargePath a = static_path(v3(0, 0, 0)), b = uniform_path(v3(d, 0, 0), v3(v, 0, 0));
  DelaySolution s = solve_delay(a, b, eps, DelayMode::retarded, -3, 3, 0.05);
  double err = 0;
  for (int i = 0; i < s.tau.size(); ++i)
    err = std::max(err, std::abs(s.tau.at(i) - uniform_motion_delay(d, v, eps, s.tau.node(i))));
  CHECK(err <= 1e-12);
  CHECK(s.max_defect <= 1e-12);
  CHECK(s.max_iterations <= 200);
  ExpansionReport e = delay_expansion_check(a, b, {1e-2, 5e-3, 2.5e-3}, -1, 1, 0.05);
  CHECK(e.slope == doctest::Approx(3.0).epsilon(0.1 / 3));
  for (std::size_t k = 0; k < e.eps.size(); ++k) {
    // closed form minus the two-term expansion at t = 0, the worst node for this geometry up to O(eps^4)
    double ee = e.eps[k];
    double tail = ee * d / (1 + ee * v) - ee * d + ee * ee * d * v;
    CHECK(e.deviation[k] >= 0.5 * std::abs(tail));
  }
}

TEST_CASE("circular motion about the observer") {
  ChargePath a = static_path(v3(0, 0, 0)), b = circular_path(v3(0, 0, 0), 1.5, 2.0, 0.3);
  DelaySolution s = solve_delay(a, b, 0.05, DelayMode::retarded, -3, 3, 0.05);
  for (int i = 0; i < s.tau.size(); ++i) CHECK(std::abs(s.tau.at(i) - 0.075) <= 1e-14);
  CHECK(s.max_defect <= 1e-12);
  ChargePath off = static_path(v3(3, 0, 0)), c = circular_path(v3(0, 0, 0), 1.0, 1.0);
  DelaySolution t = solve_delay(off, c, 0.05, DelayMode::advanced, -3, 3, 0.05);
  CHECK(t.max_defect <= 1e-12);
  for (int i = 0; i < t.tau.size(); ++i) CHECK(t.tau.at(i) >= 0.0);
  ExpansionReport e = delay_expansion_check(off, c, {1e-2, 5e-3, 2.5e-3}, -5, 5, 0.05);
  CHECK(e.slope >= 2.7);
}

TEST_CASE("contraction precondition") {
  ChargePath a = static_path(v3(0, 0, 0)), b = uniform_path(v3(2, 0, 0), v3(5, 0, 0));
  CHECK_THROWS_AS((void)solve_delay(a, b, 0.25, DelayMode::retarded, -1, 1, 0.1), Error);
  CHECK_NOTHROW((void)solve_delay(a, b, 0.1, DelayMode::retarded, -0.1, 0.1, 0.01));
}

TEST_CASE("time reversal exchanges retarded and advanced") {
  ChargePath a = uniform_path(v3(0, 1, 0), v3(0.3, 0, 0)), b = circular_path(v3(1, 0, 0), 1.0, 1.5, 0.2);
  const double eps = 0.1;
  DelaySolution sig = solve_delay(a, b, eps, DelayMode::advanced, -4, 4, 0.05);
  DelaySolution tau = solve_delay(reversed_path(a), reversed_path(b), eps, DelayMode::retarded, -4, 4, 0.05);
  double worst = 0;
  for (int i = 0; i < sig.tau.size(); ++i) worst = std::max(worst, std::abs(sig.tau.at(i) - tau.tau(-sig.tau.node(i))(0)));
  CHECK(worst <= 1e-10);
}

TEST_CASE("Lipschitz stability of the delay") {
  const double eps = 0.1, dlt = 1e-3;
  ChargePath a = static_path(v3(0, 0, 0)), b = circular_path(v3(0.5, 0, 0), 1.0, 2.0);
  ChargePath a2 = a, b2 = b;
  a2.q = [](double t) { return v3(1e-3 * std::sin(3 * t), 0, 0); };
  b2.q = [b](double t) { return Vec(b.q(t) + v3(0, 1e-3 * std::cos(t), 0)); };
  DelaySolution s1 = solve_delay(a, b, eps, DelayMode::retarded, -3, 3, 0.05);
  DelaySolution s2 = solve_delay(a2, b2, eps, DelayMode::retarded, -3, 3, 0.05);
  double diff = 0;
  for (int i = 0; i < s1.tau.size(); ++i) diff = std::max(diff, std::abs(s1.tau.at(i) - s2.tau.at(i)));
  double C = delay_lipschitz_constant(eps, 2.0);
  CHECK(C == doctest::Approx(eps / (1 - eps * 2.0)));
  CHECK(diff <= C * 2 * dlt);
  CHECK(diff > 0.0);
}

TEST_CASE("pair asymmetry is second order") {
  ChargePath a = circular_path(v3(0, 0, 0), 0.5, 1.0), b = uniform_path(v3(3, 0, 0), v3(0, 0.4, 0));
  std::vector<double> eps{1e-2, 5e-3, 2.5e-3}, gap;
  for (double e : eps) {
    DelaySolution ij = solve_delay(a, b, e, DelayMode::retarded, -2, 2, 0.05);
    DelaySolution ji = solve_delay(b, a, e, DelayMode::retarded, -2, 2, 0.05);
    double g = 0;
    for (int i = 0; i < ij.tau.size(); ++i) g = std::max(g, std::abs(ij.tau.at(i) - ji.tau.at(i)));
    gap.push_back(g);
  }
  CHECK(gap[0] > 0.0);
  CHECK(numerics::loglog_slope(eps, gap) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("delay field over all ordered pairs") {
  ChargeSystem s = moving_pair(0.05, 0.5);
  s.paths.push_back(uniform_path(v3(-2, 1, 0), v3(0.2, 0, 0)));
  s.masses.push_back(2);
  s.charges.push_back(1);
  DelayField f = solve_delay_field(s, -2, 2, 0.05);
  CHECK(f.pairs.size() == 6);
  CHECK(f.max_defect <= 1e-12);
  for (std::size_t k = 0; k < f.pairs.size(); ++k) {
    auto [i, j] = f.pairs[k];
    CHECK(delay_defect(f.tau[k], s.paths[i], s.paths[j], s.eps, DelayMode::retarded) <= 1e-12);
    CHECK(delay_defect(f.sigma[k], s.paths[i], s.paths[j], s.eps, DelayMode::advanced) <= 1e-12);
  }
  auto dir = std::filesystem::temp_directory_path() / "hs_delays";
  std::filesystem::remove_all(dir);
  write_delay_field(f, dir.string());
  CHECK(std::filesystem::exists(dir / "delay_0_1.csv"));
  CHECK(std::filesystem::exists(dir / "delay_2_1.csv"));
  std::ifstream js(dir / "delays.json");
  nlohmann::json j = nlohmann::json::parse(js);
  CHECK(j["pairs"].size() == 6);
}

TEST_CASE("non-singularity") {
  ChargeSystem s;
  s.paths = {static_path(v3(0, 0, 0)), static_path(v3(1, 0, 0))};
  s.masses = s.charges = {1, 1};
  s.eps = 0.1;
  s.xi2 = 0.5;
  CHECK(nonsingularity_check(s, -1, 1).pass);
  ChargeSystem cross = s;
  cross.paths = {uniform_path(v3(-1, 0, 0), v3(1, 0, 0)), uniform_path(v3(0, -1, 0), v3(0, 1, 0))};
  NonsingularityReport rc = nonsingularity_check(cross, -2, 3);
  CHECK_FALSE(rc.pass);
  CHECK(rc.closest_time == doctest::Approx(1.0).epsilon(1e-2));
  ChargeSystem fast = s;
  fast.paths[1] = uniform_path(v3(1, 0, 0), v3(9.9, 0, 0));
  NonsingularityReport rf = nonsingularity_check(fast, -0.01, 0.01);
  CHECK_FALSE(rf.pass);
  CHECK(rf.fastest == 1);
}

TEST_CASE("charge perturbation") {
  ChargeSystem s0 = moving_pair(0.0, 0.5);
  Vec inst = accel(s0, 0.7);
  ForceModel F = force_from_system(s0);
  Vec q1 = s0.paths[1].q(0.7);
  CHECK((inst.segment(6, 3) - F(s0.paths[0].q(0.7), q1, 1, -1)).norm() <= 1e-15);
  CHECK((inst.segment(9, 3) - F(q1, s0.paths[0].q(0.7), -1, 1)).norm() <= 1e-15);
  CHECK(inst.head(6).norm() == 0.0);

  ChargeSystem st = s0;
  st.paths[1] = static_path(v3(0, 0, 0));
  st.eps = 0.1;
  Vec c = accel(st, 0.0);
  double r = 2.0, a = st.softening;
  CHECK(c(6) == doctest::Approx(-r / std::pow(r * r + a * a, 1.5)).epsilon(1e-14));

  std::vector<double> eps{4e-2, 2e-2, 1e-2}, gap, gap_mixed;
  for (double e : eps) {
    gap.push_back((accel(moving_pair(e, 1.0), 0.7) - inst).norm());
    gap_mixed.push_back((accel(moving_pair(e, 0.5), 0.7) - inst).norm());
  }
  CHECK(numerics::loglog_slope(eps, gap) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(numerics::loglog_slope(eps, gap_mixed) > 1.5);

  PerturbationSpec p = assemble_charge_perturbation(s0, F);
  CHECK(p.n == 12);
  CHECK(p.L2 > 0.0);
  ChargeSystem bad = s0;
  bad.mixing = 1.5;
  CHECK_THROWS_AS((void)assemble_charge_perturbation(bad, F), Error);
}

TEST_CASE("charge system from JSON") {
  nlohmann::json j = {{"N", 2},
                      {"masses", {1, 2}},
                      {"charges", {1, -1}},
                      {"epsilon", 0.05},
                      {"trajectories",
                       {{{"kind", "static"}, {"position", {3, 0, 0}}},
                        {{"kind", "circular"}, {"center", {0, 0, 0}}, {"radius", 1}, {"omega", 1}}}}};
  ChargeSystem s = charge_system_from_json(j);
  CHECK(s.N() == 2);
  CHECK(s.masses[1] == 2.0);
  CHECK((s.paths[1].q(0.0) - v3(1, 0, 0)).norm() <= 1e-15);
  j["N"] = 3;
  CHECK_THROWS_AS((void)charge_system_from_json(j), Error);
  j["N"] = 2;
  j["trajectories"][0]["kind"] = "helical";
  CHECK_THROWS_AS((void)charge_system_from_json(j), Error);
}

#include "hypershadow/electrodynamics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

namespace hypershadow {

ChargePath static_path(const Vec& x) {
  Vec z = Vec::Zero(x.size());
  return {[x](double) { return x; }, [z](double) { return z; }, [z](double) { return z; }};
}

ChargePath uniform_path(const Vec& x0, const Vec& v) {
  Vec z = Vec::Zero(x0.size());
  return {[x0, v](double t) { return Vec(x0 + t * v); }, [v](double) { return v; }, [z](double) { return z; }};
}

ChargePath circular_path(const Vec& center, double R, double w, double phase) {
  auto q = [=](double t) {
    Vec x = center;
    x(0) += R * std::cos(w * t + phase);
    x(1) += R * std::sin(w * t + phase);
    return x;
  };
  auto dq = [=](double t) {
    Vec x = Vec::Zero(center.size());
    x(0) = -R * w * std::sin(w * t + phase);
    x(1) = R * w * std::cos(w * t + phase);
    return x;
  };
  auto ddq = [=](double t) {
    Vec x = Vec::Zero(center.size());
    x(0) = -R * w * w * std::cos(w * t + phase);
    x(1) = -R * w * w * std::sin(w * t + phase);
    return x;
  };
  return {q, dq, ddq};
}

ChargePath reversed_path(const ChargePath& p) {
  return {[p](double t) { return p.q(-t); }, [p](double t) { return Vec(-p.dq(-t)); },
          [p](double t) { return p.ddq(-t); }};
}

ForceModel softened_coulomb(double a, double k) {
  return [a, k](const Vec& qi, const Vec& qj, double ci, double cj) {
    Vec d = qi - qj;
    double r2 = d.squaredNorm() + a * a;
    return Vec(k * ci * cj * d / (r2 * std::sqrt(r2)));
  };
}

// ---------------------------------------------------------------- delays

PointSolve solve_delay_point(const Vec& qi, const std::function<Vec(double)>& qj_at, double eps, DelayMode mode,
                             double tau_start) {
  const double sgn = mode == DelayMode::retarded ? -1.0 : 1.0;
  PointSolve r;
  double tau = tau_start;
  for (int it = 1; it <= 200; ++it) {
    double next = eps * (qi - qj_at(sgn * tau)).norm();
    double d = std::abs(next - tau);
    tau = next;
    r.iterations = it;
    if (d <= 1e-13) {
      r.tau = tau;
      r.defect = std::abs(tau - eps * (qi - qj_at(sgn * tau)).norm());
      return r;
    }
  }
  throw Error("solve_delay: no convergence in 200 iterations");
}

DelaySolution solve_delay(const ChargePath& qi, const ChargePath& qj, double eps, DelayMode mode, double lo,
                          double hi, double delta) {
  if (eps < 0) throw Error("solve_delay: eps must be nonnegative");
  DelaySolution out;
  out.tau = GridFunction(lo, hi, delta, 1, 5);
  const int n = out.tau.size();
  double vmax = 0.0;
  for (int i = 0; i < n; ++i) vmax = std::max(vmax, qj.dq(out.tau.node(i)).norm());
  if (!(eps * vmax < 1.0)) throw Error("solve_delay: contraction condition eps |qj'| < 1 violated");
  double prev = -1.0;
  for (int i = 0; i < n; ++i) {
    double t = out.tau.node(i);
    Vec qit = qi.q(t);
    auto qj_at = [&qj, t](double s) { return qj.q(t + s); };
    double start = prev >= 0 ? prev : eps * (qit - qj.q(t)).norm();
    PointSolve ps = solve_delay_point(qit, qj_at, eps, mode, start);
    out.tau.at(i) = ps.tau;
    out.max_iterations = std::max(out.max_iterations, ps.iterations);
    out.max_defect = std::max(out.max_defect, ps.defect);
    prev = ps.tau;
  }
  return out;
}

double delay_defect(const GridFunction& tau, const ChargePath& qi, const ChargePath& qj, double eps, DelayMode mode) {
  const double sgn = mode == DelayMode::retarded ? -1.0 : 1.0;
  double d = 0.0;
  for (int i = 0; i < tau.size(); ++i) {
    double t = tau.node(i), x = tau.at(i);
    d = std::max(d, std::abs(x - eps * (qi.q(t) - qj.q(t + sgn * x)).norm()));
  }
  return d;
}

double uniform_motion_delay(double d, double v, double eps, double t) { return eps * (d + v * t) / (1.0 + eps * v); }

double delay_lipschitz_constant(double eps, double qdot_sup) {
  double kappa = eps * qdot_sup;
  if (!(kappa < 1.0)) throw Error("delay_lipschitz_constant: eps |qj'| must be below 1");
  return eps / (1.0 - kappa);
}

DelayField solve_delay_field(const ChargeSystem& sys, double lo, double hi, double delta) {
  DelayField f;
  for (int i = 0; i < sys.N(); ++i)
    for (int j = 0; j < sys.N(); ++j)
      if (i != j) f.pairs.emplace_back(i, j);
  const int P = static_cast<int>(f.pairs.size());
  std::vector<DelaySolution> ret(P), adv(P);
  numerics::parallel_for(P, true, [&](int k) {
    auto [i, j] = f.pairs[k];
    ret[k] = solve_delay(sys.paths[i], sys.paths[j], sys.eps, DelayMode::retarded, lo, hi, delta);
    adv[k] = solve_delay(sys.paths[i], sys.paths[j], sys.eps, DelayMode::advanced, lo, hi, delta);
  });
  for (int k = 0; k < P; ++k) {
    f.tau.push_back(ret[k].tau);
    f.sigma.push_back(adv[k].tau);
    f.max_iterations = std::max({f.max_iterations, ret[k].max_iterations, adv[k].max_iterations});
    f.max_defect = std::max({f.max_defect, ret[k].max_defect, adv[k].max_defect});
  }
  return f;
}

void write_delay_field(const DelayField& f, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json summary = {{"max_iterations", f.max_iterations}, {"max_defect", f.max_defect},
                            {"pairs", nlohmann::json::array()}};
  for (std::size_t k = 0; k < f.pairs.size(); ++k) {
    auto [i, j] = f.pairs[k];
    std::string name = "delay_" + std::to_string(i) + "_" + std::to_string(j) + ".csv";
    std::ofstream os(std::filesystem::path(dir) / name);
    if (!os) throw Error("cannot write " + name);
    os << "t,tau,sigma\n";
    for (int n = 0; n < f.tau[k].size(); ++n)
      os << format_number(f.tau[k].node(n)) << ',' << format_number(f.tau[k].at(n)) << ','
         << format_number(f.sigma[k].at(n)) << '\n';
    summary["pairs"].push_back({{"i", i}, {"j", j}, {"file", name}});
  }
  std::ofstream js(std::filesystem::path(dir) / "delays.json");
  js << summary.dump(2) << '\n';
}

ExpansionReport delay_expansion_check(const ChargePath& qi, const ChargePath& qj, const std::vector<double>& eps,
                                      double lo, double hi, double delta) {
  ExpansionReport r;
  r.eps = eps;
  for (double e : eps) {
    DelaySolution s = solve_delay(qi, qj, e, DelayMode::retarded, lo, hi, delta);
    double dev = 0.0;
    for (int n = 0; n < s.tau.size(); ++n) {
      double t = s.tau.node(n);
      Vec d = qi.q(t) - qj.q(t);
      double approx = e * d.norm() + e * e * d.dot(qj.dq(t));
      dev = std::max(dev, std::abs(s.tau.at(n) - approx));
    }
    r.deviation.push_back(dev);
  }
  bool all_pos = std::all_of(r.deviation.begin(), r.deviation.end(), [](double d) { return d > 0; });
  r.exact = std::all_of(r.deviation.begin(), r.deviation.end(), [](double d) { return d <= 1e-15; });
  r.slope = all_pos && !r.exact ? numerics::loglog_slope(r.eps, r.deviation) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

NonsingularityReport nonsingularity_check(const ChargeSystem& sys, double lo, double hi, int samples) {
  NonsingularityReport r;
  r.min_distance = std::numeric_limits<double>::infinity();
  for (int k = 0; k < samples; ++k) {
    double t = samples == 1 ? lo : lo + (hi - lo) * k / (samples - 1);
    for (int i = 0; i < sys.N(); ++i) {
      double sp = sys.paths[i].dq(t).norm();
      if (sp > r.max_speed) {
        r.max_speed = sp;
        r.fastest = i;
        r.fastest_time = t;
      }
      for (int j = i + 1; j < sys.N(); ++j) {
        double d = (sys.paths[i].q(t) - sys.paths[j].q(t)).norm();
        if (d < r.min_distance) {
          r.min_distance = d;
          r.closest = {i, j};
          r.closest_time = t;
        }
      }
    }
  }
  bool speed_ok = sys.eps <= 0.0 || r.max_speed <= sys.xi1 / sys.eps;
  r.pass = speed_ok && r.min_distance >= sys.xi2;
  return r;
}

// ---------------------------------------------------------------- perturbation

OdeModel free_motion_model(int N) {
  OdeModel m;
  m.id = "free-motion";
  m.n = 6 * N;
  const int h = 3 * N;
  m.f = [h](const Vec& y) {
    Vec out = Vec::Zero(2 * h);
    out.head(h) = y.tail(h);
    return out;
  };
  m.Df = [h](const Vec&) {
    Mat J = Mat::Zero(2 * h, 2 * h);
    J.topRightCorner(h, h) = Mat::Identity(h, h);
    return J;
  };
  m.D2f = [h](const Vec&, const Vec&, const Vec&) { return Vec(Vec::Zero(2 * h)); };
  m.b = 0.0;
  return m;
}

Trajectory stacked_trajectory(const ChargeSystem& sys, double lo, double hi) {
  const int N = sys.N();
  auto paths = sys.paths;
  Trajectory u;
  u.lo = lo;
  u.hi = hi;
  u.value = [paths, N](double t) {
    Vec y(6 * N);
    for (int i = 0; i < N; ++i) {
      y.segment(3 * i, 3) = paths[i].q(t);
      y.segment(3 * N + 3 * i, 3) = paths[i].dq(t);
    }
    return y;
  };
  u.deriv = [paths, N](double t) {
    Vec y(6 * N);
    for (int i = 0; i < N; ++i) {
      y.segment(3 * i, 3) = paths[i].dq(t);
      y.segment(3 * N + 3 * i, 3) = paths[i].ddq(t);
    }
    return y;
  };
  return u;
}

PerturbationSpec assemble_charge_perturbation(const ChargeSystem& sys, const ForceModel& force) {
  const int N = sys.N();
  if (static_cast<int>(sys.masses.size()) != N || static_cast<int>(sys.charges.size()) != N)
    throw Error("charge system: masses and charges must match the number of paths");
  if (sys.mixing < 0 || sys.mixing > 1) throw Error("charge system: mixing weight must lie in [0, 1]");
  PerturbationSpec p;
  p.kind = "charges";
  p.n = 6 * N;
  p.h = sys.h;
  const double a = sys.softening;
  double L = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      if (i != j) L += 2.0 * std::abs(sys.charges[i] * sys.charges[j]) / (sys.masses[i] * a * a * a);
  p.L2 = L;
  auto masses = sys.masses, charges = sys.charges;
  const double w = sys.mixing, h = sys.h;
  p.evaluate = [=](double, const HistorySegment& th, double eps) {
    Vec out = Vec::Zero(6 * N);
    Vec y0 = th(0.0);
    for (int i = 0; i < N; ++i) {
      Vec qi = y0.segment(3 * i, 3);
      Vec acc = Vec::Zero(3);
      for (int j = 0; j < N; ++j) {
        if (i == j) continue;
        auto qj_at = [&th, j](double s) { return Vec(th(s).segment(3 * j, 3)); };
        Vec fr, fa;
        if (eps == 0.0) {
          fr = fa = force(qi, qj_at(0.0), charges[i], charges[j]);
        } else {
          double start = eps * (qi - qj_at(0.0)).norm();
          if (start > h) throw Error("charges: delay exceeds the history radius");
          PointSolve r = solve_delay_point(qi, qj_at, eps, DelayMode::retarded, start);
          PointSolve s = solve_delay_point(qi, qj_at, eps, DelayMode::advanced, start);
          if (r.tau > h || s.tau > h) throw Error("charges: delay exceeds the history radius");
          fr = force(qi, qj_at(-r.tau), charges[i], charges[j]);
          fa = force(qi, qj_at(s.tau), charges[i], charges[j]);
        }
        acc += (w * fr + (1.0 - w) * fa) / masses[i];
      }
      out.segment(3 * N + 3 * i, 3) = acc;
    }
    return out;
  };
  p.descriptor = {{"kind", "charges"}, {"mixing", w}};
  return p;
}

// ---------------------------------------------------------------- JSON

namespace {

Vec vec3(const nlohmann::json& j, const char* key) {
  Vec v = Vec::Zero(3);
  if (!j.contains(key)) return v;
  const auto& a = j.at(key);
  if (a.size() != 3) throw Error(std::string("charge path: ") + key + " needs three components");
  for (int i = 0; i < 3; ++i) v(i) = a.at(i).get<double>();
  return v;
}

ChargePath path_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "static");
  if (kind == "static") return static_path(vec3(j, "position"));
  if (kind == "uniform") return uniform_path(vec3(j, "position"), vec3(j, "velocity"));
  if (kind == "circular")
    return circular_path(vec3(j, "center"), j.value("radius", 1.0), j.value("omega", 1.0), j.value("phase", 0.0));
  throw Error("unknown trajectory kind " + kind);
}

}  // namespace

ChargeSystem charge_system_from_json(const nlohmann::json& j) {
  ChargeSystem s;
  const auto& tr = j.at("trajectories");
  for (const auto& t : tr) s.paths.push_back(path_from_json(t));
  const int N = j.value("N", s.N());
  if (N != s.N()) throw Error("charge system: N does not match the trajectory list");
  s.masses = j.value("masses", std::vector<double>(N, 1.0));
  s.charges = j.value("charges", std::vector<double>(N, 1.0));
  if (static_cast<int>(s.masses.size()) != N || static_cast<int>(s.charges.size()) != N)
    throw Error("charge system: masses and charges must have N entries");
  s.eps = j.value("epsilon", 0.0);
  s.xi1 = j.value("xi1", 0.9);
  s.xi2 = j.value("xi2", 0.1);
  s.mixing = j.value("mixing", 0.5);
  s.h = j.value("h", 1.0);
  s.force_model = j.value("force_model", "softened-coulomb");
  s.softening = j.value("softening", 0.1);
  if (s.force_model != "softened-coulomb") throw Error("unknown force model " + s.force_model);
  return s;
}

ForceModel force_from_system(const ChargeSystem& sys) { return softened_coulomb(sys.softening); }

}  // namespace hypershadow

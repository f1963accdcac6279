#include "hypershadow/perturbations.hpp"

#include <algorithm>
#include <cmath>

namespace hypershadow {

Vec HistorySegment::deriv(double s) const {
  if (!eval_deriv) throw Error("history segment has no derivative access");
  return eval_deriv(s);
}

HistorySegment segment_of(const Trajectory& u, double t, double h) {
  if (t - h < u.lo - 1e-12 || t + h > u.hi + 1e-12) throw RangeError("segment_of: trajectory window too small");
  HistorySegment s;
  s.t = t;
  s.h = h;
  auto value = u.value;
  s.eval = [value, t](double r) { return value(t + r); };
  if (u.deriv) {
    auto d = u.deriv;
    s.eval_deriv = [d, t](double r) { return d(t + r); };
  }
  return s;
}

// ---------------------------------------------------------------- building blocks

VectorMap identity_map() {
  return {[](double, const Vec& x) { return x; }, 0.0, 1.0};
}

VectorMap linear_map(const Mat& A) {
  Eigen::JacobiSVD<Mat> svd(A);
  return {[A](double, const Vec& x) { return Vec(A * x); }, 0.0, svd.singularValues()(0)};
}

VectorMap trig_map(int n, int output, int input, double amp, double omega, double time_omega, double phase,
                   bool cosine) {
  if (output < 0 || output >= n || input >= n) throw Error("trig_map: component out of range");
  VectorMap m;
  m.f = [=](double t, const Vec& x) {
    Vec y = Vec::Zero(n);
    double arg = time_omega * t + phase + (input >= 0 ? omega * x(input) : 0.0);
    y(output) = amp * (cosine ? std::cos(arg) : std::sin(arg));
    return y;
  };
  m.lip_t = std::abs(amp * time_omega);
  m.lip_x = input >= 0 ? std::abs(amp * omega) : 0.0;
  return m;
}

ScalarMap constant_shift(double r) {
  return {[r](double, const Vec&) { return r; }, std::abs(r), 0.0, 0.0};
}

ScalarMap tanh_shift(double base, double slope, int input) {
  return {[=](double, const Vec& x) { return base + slope * std::tanh(x(input)); }, std::abs(base) + std::abs(slope),
          0.0, std::abs(slope)};
}

ScalarMap affine_shift(double base, const Vec& coeffs, double lo, double hi) {
  if (lo > hi) throw Error("affine_shift: empty clip interval");
  return {[=](double, const Vec& x) { return std::clamp(base + coeffs.dot(x), lo, hi); },
          std::max(std::abs(lo), std::abs(hi)), 0.0, coeffs.norm()};
}

// ---------------------------------------------------------------- builders

namespace {

void check_shift(const ScalarMap& r, double h, const char* who) {
  if (r.sup > h + 1e-12) throw Error(std::string(who) + ": delay bound exceeds the history radius h");
}

}  // namespace

PerturbationSpec zero_perturbation(int n) {
  PerturbationSpec p;
  p.kind = "zero";
  p.n = n;
  p.evaluate = [n](double, const HistorySegment&, double) { return Vec(Vec::Zero(n)); };
  p.descriptor = {{"kind", "zero"}};
  return p;
}

PerturbationSpec ode_term(int n, const VectorMap& g) {
  PerturbationSpec p;
  p.kind = "ode_term";
  p.n = n;
  p.h = 1e-9;
  p.L1 = g.lip_t;
  p.L2 = g.lip_x;
  auto f = g.f;
  p.evaluate = [f](double t, const HistorySegment& th, double) { return f(t, th(0.0)); };
  p.descriptor = {{"kind", "ode_term"}};
  return p;
}

PerturbationSpec state_dependent_delay(int n, const VectorMap& Q, const ScalarMap& r, double h, double u1) {
  check_shift(r, h, "state_dependent_delay");
  PerturbationSpec p;
  p.kind = "sdd";
  p.n = n;
  p.h = h;
  p.L1 = Q.lip_t + Q.lip_x * u1 * r.lip_t;
  p.L2 = Q.lip_x * (1.0 + u1 * r.lip_x);
  auto q = Q.f;
  auto rf = r.f;
  p.evaluate = [q, rf](double t, const HistorySegment& th, double) { return q(t, th(rf(t, th(0.0)))); };
  p.descriptor = {{"kind", "sdd"}};
  return p;
}

PerturbationSpec nested_delay(int n, const VectorMap& Q, const ScalarMap& r, const ScalarMap& r1, double h,
                              double u1) {
  check_shift(r, h, "nested_delay");
  check_shift(r1, h, "nested_delay");
  PerturbationSpec p;
  p.kind = "nested";
  p.n = n;
  p.h = h;
  p.L1 = Q.lip_t + Q.lip_x * u1 * (r.lip_t + r.lip_x * u1 * r1.lip_t);
  p.L2 = Q.lip_x * (1.0 + u1 * r.lip_x * (1.0 + u1 * r1.lip_x));
  auto q = Q.f;
  auto rf = r.f, r1f = r1.f;
  p.evaluate = [q, rf, r1f](double t, const HistorySegment& th, double) {
    Vec inner = th(r1f(t, th(0.0)));
    return q(t, th(rf(t, inner)));
  };
  p.descriptor = {{"kind", "nested"}};
  return p;
}

PerturbationSpec neutral_delay(int n, const VectorMap& Q, const ScalarMap& r, double h, double u1) {
  check_shift(r, h, "neutral_delay");
  PerturbationSpec p;
  p.kind = "neutral";
  p.n = n;
  p.h = h;
  p.needs_derivative = true;
  p.L1 = Q.lip_t + Q.lip_x * u1 * r.lip_t;
  p.L2 = Q.lip_x * (1.0 + u1 * r.lip_x);
  auto q = Q.f;
  auto rf = r.f;
  p.evaluate = [q, rf](double t, const HistorySegment& th, double) { return q(t, th(rf(t, th.deriv(0.0)))); };
  p.descriptor = {{"kind", "neutral"}};
  return p;
}

MultiArgField single_arg_field(const OdeModel& m) {
  MultiArgField g;
  g.n = m.n;
  g.L = 1;
  auto f = m.f;
  auto Df = m.Df;
  g.f = [f](const std::vector<Vec>& y) { return f(y[0]); };
  g.D = [Df](const std::vector<Vec>& y, int) { return Df(y[0]); };
  return g;
}

DelayFunctional constant_delay(double tau) {
  return {[tau](const HistorySegment&) { return tau; }, std::abs(tau)};
}

DelayFunctional state_delay(double base, double slope, int input) {
  return {[=](const HistorySegment& th) { return base + slope * std::tanh(th(0.0)(input)); },
          std::abs(base) + std::abs(slope)};
}

PerturbationSpec small_delay_q(const MultiArgField& g, std::vector<DelayFunctional> taus, double h, int quad_order) {
  if (static_cast<int>(taus.size()) != g.L) throw Error("small_delay_q: one delay functional per argument");
  PerturbationSpec p;
  p.kind = "small_delay";
  p.n = g.n;
  p.h = h;
  p.needs_derivative = true;
  const auto& rule = numerics::gauss_legendre(quad_order);
  p.evaluate = [g, taus, h, rule](double, const HistorySegment& th, double eps) {
    const int L = g.L;
    std::vector<double> tau(L);
    for (int i = 0; i < L; ++i) {
      tau[i] = taus[i].f(th);
      if (std::abs(eps * tau[i]) > h + 1e-12) throw Error("small_delay_q: eps * tau exceeds the history radius");
    }
    Vec out = Vec::Zero(g.n);
    std::vector<Vec> args(L);
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      double s = rule.nodes[k];
      for (int i = 0; i < L; ++i) args[i] = th(-s * eps * tau[i]);
      for (int i = 0; i < L; ++i) {
        if (tau[i] == 0.0) continue;
        out -= rule.weights[k] * tau[i] * (g.D(args, i) * th.deriv(-s * eps * tau[i]));
      }
    }
    return out;
  };
  p.descriptor = {{"kind", "small_delay"}, {"quad_order", quad_order}};
  return p;
}

Vec small_delay_difference_quotient(const MultiArgField& g, const std::vector<DelayFunctional>& taus,
                                    const HistorySegment& th, double eps) {
  std::vector<Vec> a(g.L), b(g.L);
  for (int i = 0; i < g.L; ++i) {
    a[i] = th(-eps * taus[i].f(th));
    b[i] = th(0.0);
  }
  return (g.f(a) - g.f(b)) / eps;
}

PerturbationSpec multi_delay_advance(int n, const std::vector<ShiftTerm>& terms, double h) {
  PerturbationSpec p;
  p.kind = "multi_delay";
  p.n = n;
  p.h = h;
  for (const auto& t : terms) {
    if (std::abs(t.shift) > h + 1e-12) throw Error("multi_delay_advance: shift out of range");
    p.L2 += std::abs(t.weight);
  }
  p.evaluate = [n, terms](double, const HistorySegment& th, double) {
    Vec out = Vec::Zero(n);
    for (const auto& t : terms) out += t.weight * th(t.shift);
    return out;
  };
  p.descriptor = {{"kind", "multi_delay"}};
  return p;
}

// ---------------------------------------------------------------- evaluation and probes

Vec apply_P(const PerturbationSpec& spec, const Trajectory& u, double eps, double t) {
  return spec.evaluate(t, segment_of(u, t, spec.h), eps);
}

double segment_distance_c1(const HistorySegment& a, const HistorySegment& b, double h, int samples) {
  double d0 = 0.0, d1 = 0.0;
  const bool deriv = a.has_deriv() && b.has_deriv();
  for (int k = 0; k < samples; ++k) {
    double s = samples == 1 ? 0.0 : -h + 2.0 * h * k / (samples - 1);
    d0 = std::max(d0, (a(s) - b(s)).norm());
    if (deriv) d1 = std::max(d1, (a.deriv(s) - b.deriv(s)).norm());
  }
  return std::max(d0, d1);
}

ProbeReport lipschitz_probe(const PerturbationSpec& spec, const std::vector<SegmentPair>& pairs, double eps) {
  ProbeReport r;
  for (const auto& pr : pairs) {
    double dP = (spec.evaluate(pr.a.t, pr.a, eps) - spec.evaluate(pr.b.t, pr.b, eps)).norm();
    double dt = std::abs(pr.a.t - pr.b.t);
    double dth = segment_distance_c1(pr.a, pr.b, spec.h);
    if (dt > 0) r.L1_hat = std::max(r.L1_hat, dP / dt);
    else if (dth > 0) r.L2_hat = std::max(r.L2_hat, dP / dth);
    double excess = dP - (spec.L1 * dt + spec.L2 * dth);
    r.worst_excess = std::max(r.worst_excess, excess);
    if (excess > 1e-12 * std::max(1.0, dP)) ++r.violations;
  }
  r.dominated = r.violations == 0;
  return r;
}

std::vector<double> derivative_envelope(const PerturbationSpec& spec, const Trajectory& u, double eps, double a,
                                        double b, int ell, int samples) {
  std::vector<double> env(ell + 1, 0.0);
  const double hd = 1e-2;
  const int half = ell / 2 + 1;
  std::vector<double> nodes;
  for (int k = -half; k <= half; ++k) nodes.push_back(k * hd);
  for (int i = 0; i <= samples; ++i) {
    double t = a + (b - a) * i / samples;
    std::vector<Vec> vals;
    for (double x : nodes) vals.push_back(apply_P(spec, u, eps, t + x));
    for (int j = 0; j <= ell; ++j) {
      auto w = numerics::fd_weights(0.0, nodes, j);
      Vec d = Vec::Zero(vals[0].size());
      for (std::size_t k = 0; k < nodes.size(); ++k) d += w[k] * vals[k];
      env[j] = std::max(env[j], d.norm());
    }
  }
  return env;
}

Vec mu_sensitivity(const std::function<PerturbationSpec(double)>& family, double mu, double dmu, double t,
                   const HistorySegment& theta, double eps) {
  auto up = family(mu + dmu), dn = family(mu - dmu);
  return (up.evaluate(t, theta, eps) - dn.evaluate(t, theta, eps)) / (2.0 * dmu);
}

// ---------------------------------------------------------------- JSON

namespace {

VectorMap vector_map_from_json(const nlohmann::json& j, int n) {
  const std::string type = j.value("type", "identity");
  if (type == "identity") return identity_map();
  if (type == "zero") return {[n](double, const Vec&) { return Vec(Vec::Zero(n)); }, 0.0, 0.0};
  if (type == "linear") {
    Mat A(n, n);
    const auto& rows = j.at("matrix");
    if (static_cast<int>(rows.size()) != n) throw Error("linear map: matrix must be n x n");
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) A(i, k) = rows.at(i).at(k).get<double>();
    return linear_map(A);
  }
  if (type == "sine" || type == "cos")
    return trig_map(n, j.value("output", 1), j.value("input", 0), j.value("amplitude", 1.0), j.value("omega", 1.0),
                    j.value("time_omega", 0.0), j.value("phase", 0.0), type == "cos");
  throw Error("unknown map type " + type);
}

ScalarMap scalar_map_from_json(const nlohmann::json& j, int n, double h) {
  const std::string type = j.value("type", "constant");
  if (type == "constant") return constant_shift(j.value("value", 0.0));
  if (type == "tanh") return tanh_shift(j.value("base", 0.0), j.value("slope", 0.0), j.value("input", 0));
  if (type == "affine") {
    Vec c = Vec::Zero(n);
    if (j.contains("coeffs")) {
      const auto& cj = j.at("coeffs");
      for (int i = 0; i < n && i < static_cast<int>(cj.size()); ++i) c(i) = cj.at(i).get<double>();
    }
    return affine_shift(j.value("base", 0.0), c, j.value("lo", -h), j.value("hi", h));
  }
  throw Error("unknown shift type " + type);
}

DelayFunctional delay_from_json(const nlohmann::json& j) {
  const std::string type = j.value("type", "constant");
  if (type == "constant") return constant_delay(j.value("value", 1.0));
  if (type == "state") return state_delay(j.value("base", 1.0), j.value("slope", 0.0), j.value("input", 0));
  throw Error("unknown delay functional type " + type);
}

}  // namespace

PerturbationSpec perturbation_from_json(const nlohmann::json& j, const HyperbolicFrame& fr) {
  const int n = fr.n();
  const std::string kind = j.value("kind", "zero");
  const nlohmann::json par = j.value("parameters", nlohmann::json::object());
  const double h = j.value("h", 1.0);
  const double u1 = par.value("u1", 1.1);
  PerturbationSpec p;
  if (kind == "zero") {
    p = zero_perturbation(n);
  } else if (kind == "ode_term") {
    p = ode_term(n, vector_map_from_json(par.value("Q", nlohmann::json::object()), n));
  } else if (kind == "sdd") {
    p = state_dependent_delay(n, vector_map_from_json(par.value("Q", nlohmann::json::object()), n),
                              scalar_map_from_json(par.value("r", nlohmann::json::object()), n, h), h, u1);
  } else if (kind == "nested") {
    p = nested_delay(n, vector_map_from_json(par.value("Q", nlohmann::json::object()), n),
                     scalar_map_from_json(par.value("r", nlohmann::json::object()), n, h),
                     scalar_map_from_json(par.value("r1", nlohmann::json::object()), n, h), h, u1);
  } else if (kind == "neutral") {
    p = neutral_delay(n, vector_map_from_json(par.value("Q", nlohmann::json::object()), n),
                      scalar_map_from_json(par.value("r", nlohmann::json::object()), n, h), h, u1);
  } else if (kind == "multi_delay") {
    std::vector<ShiftTerm> terms;
    for (const auto& t : par.value("terms", nlohmann::json::array()))
      terms.push_back({t.value("shift", 0.0), t.value("weight", 1.0)});
    p = multi_delay_advance(n, terms, h);
  } else if (kind == "small_delay") {
    std::vector<DelayFunctional> taus;
    for (const auto& t : par.value("taus", nlohmann::json::array({{{"type", "constant"}, {"value", 1.0}}})))
      taus.push_back(delay_from_json(t));
    if (taus.size() != 1) throw Error("small_delay: the frame model takes exactly one delayed argument");
    p = small_delay_q(single_arg_field(fr.model()), taus, h, par.value("quad_order", 8));
    // Constant-delay estimate: |dp| <= tau (|Df| |d theta'| + |D2f| u1 |d theta|).
    auto fn = estimate_field_norms(fr, 0.2, 0.0, 10.0, 100);
    p.L2 = taus[0].sup * (fn.f1 + fn.f2 * u1);
  } else {
    throw Error("unknown perturbation kind " + kind);
  }
  p.mu = j.value("mu", 0.0);
  if (j.contains("L1")) p.L1 = j.at("L1").get<double>();
  if (j.contains("L2")) p.L2 = j.at("L2").get<double>();
  p.descriptor = j;
  return p;
}

}  // namespace hypershadow

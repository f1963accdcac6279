#include "hypershadow/invariance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace hypershadow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double min_rate(const HyperbolicFrame& fr) {
  const auto& q = fr.quality();
  double l = q.lambda_s;
  if (fr.dim(Bundle::unstable) > 0) l = std::min(l, q.lambda_u);
  return l;
}

double bundle_rate(const HyperbolicFrame& fr, Bundle b) {
  return b == Bundle::stable ? fr.quality().lambda_s : fr.quality().lambda_u;
}

ScalarField field_with_radii(GridFunction xhat, const OperatorConfig& cfg) {
  return make_field(std::move(xhat), cfg.t_radii ? *cfg.t_radii : BallRadii{});
}

}  // namespace

void validate_config(const HyperbolicFrame& fr, const OperatorConfig& cfg) {
  if (!(cfg.eta > 0)) throw Error("config: eta must be positive");
  if (!(cfg.eta < fr.quality().lambda_s)) throw Error("config: eta must be below lambda_s");
  if (fr.dim(Bundle::unstable) > 0 && !(cfg.eta < fr.quality().lambda_u))
    throw Error("config: eta must be below lambda_u");
  if (!(cfg.T > 0 && cfg.T_int > 0 && cfg.delta > 0 && cfg.quadrature_step > 0))
    throw Error("config: T, T_int, delta and quadrature_step must be positive");
  double k = cfg.delta / cfg.quadrature_step;
  if (std::abs(k - std::round(k)) > 1e-9 || std::round(k) < 1)
    throw Error("config: delta must be an integer multiple of quadrature_step");
  double m = cfg.T / cfg.delta;
  if (std::abs(m - std::round(m)) > 1e-9) throw Error("config: T must be a multiple of delta");
  if (cfg.T_int < cfg.quadrature_step) throw Error("config: T_int shorter than one quadrature panel");
  if (cfg.interp_order < 3) throw Error("config: interp_order must be at least 3");
  if (cfg.max_iters < 1) throw Error("config: max_iters must be positive");
}

CorrectionState zero_state(const HyperbolicFrame& fr, const OperatorConfig& cfg) {
  CorrectionState st;
  st.X = field_with_radii(GridFunction(-cfg.T, cfg.T, cfg.delta, 1, cfg.interp_order), cfg);
  st.xs = GridFunction(-cfg.T, cfg.T, cfg.delta, fr.n(), cfg.interp_order);
  st.xu = GridFunction(-cfg.T, cfg.T, cfg.delta, fr.n(), cfg.interp_order);
  return st;
}

double core_half_width(const OperatorConfig& cfg, double h, double t0) {
  return cfg.T - (cfg.T_int + (1.0 + t0) * h);
}

// ---------------------------------------------------------------- pointwise terms

Vec taylor_remainder(const HyperbolicFrame& fr, const Vec& xhat, double rho) {
  const auto& m = fr.model();
  Vec x0 = fr.orbit(rho);
  return m.f(x0 + xhat) - m.f(x0) - m.Df(x0) * xhat;
}

Vec taylor_remainder_integral(const HyperbolicFrame& fr, const Vec& xhat, double rho, int order) {
  const auto& m = fr.model();
  const auto& q = numerics::gauss_legendre(order);
  Vec x0 = fr.orbit(rho);
  Vec out = Vec::Zero(fr.n());
  for (std::size_t k = 0; k < q.nodes.size(); ++k) {
    double s = q.nodes[k];
    out += q.weights[k] * (1.0 - s) * m.D2f(x0 + s * xhat, xhat, xhat);
  }
  return out;
}

Vec quadratic_term(const HyperbolicFrame& fr, double X, const Vec& xhat, double rho) {
  Vec x0 = fr.orbit(rho);
  const auto& m = fr.model();
  return (1.0 - X) * (m.Df(x0) * xhat) + (m.f(x0 + xhat) - m.f(x0) - m.Df(x0) * xhat);
}

StateView::StateView(const HyperbolicFrame& fr, const CorrectionState& st, const OperatorConfig& cfg, double h)
    : fr_(&fr), st_(&st) {
  double W = inflated_half_width(cfg.T, cfg.T_int, h, st.X.t0()) + 2.0 * cfg.delta;
  flow_ = solve_flow(st.X, -W, W);
  dxs_ = derivative(st.xs, 1);
  dxu_ = derivative(st.xu, 1);
}

Vec StateView::xhat(double rho) const { return st_->xs(rho) + st_->xu(rho); }

Vec StateView::xhat_deriv(double rho) const { return dxs_(rho) + dxu_(rho); }

HistorySegment StateView::segment(double rho, double h) const {
  if (!flow_.rho_in_range(rho)) throw RangeError("segment: rho outside the flow range");
  double t = flow_.inverse(rho);
  if (!flow_.t_in_range(t - h) || !flow_.t_in_range(t + h)) throw RangeError("segment: history exceeds the flow range");
  HistorySegment seg;
  seg.t = t;
  seg.h = h;
  const StateView* self = this;
  seg.eval = [self, t](double s) {
    double a = self->flow_(t + s);
    return Vec(self->fr_->orbit(a) + self->xhat(a));
  };
  seg.eval_deriv = [self, t](double s) {
    double a = self->flow_(t + s);
    return Vec((self->fr_->orbit_deriv(a) + self->xhat_deriv(a)) * self->X(a));
  };
  return seg;
}

Vec perturb_term(const HyperbolicFrame&, const StateView& v, const PerturbationSpec& spec, double rho, double eps) {
  HistorySegment seg = v.segment(rho, spec.h);
  return spec.evaluate(seg.t, seg, eps);
}

Vec forcing(const HyperbolicFrame& fr, const StateView& v, const PerturbationSpec& spec, double rho, double eps) {
  Vec F = quadratic_term(fr, v.X(rho), v.xhat(rho), rho);
  if (eps != 0.0) F += eps * perturb_term(fr, v, spec, rho, eps);
  return F;
}

// ---------------------------------------------------------------- Gamma

namespace {

ScalarField gamma_c_view(const HyperbolicFrame& fr, const StateView& view, const PerturbationSpec& spec,
                         const OperatorConfig& cfg) {
  const GridFunction& xg = view.state().X.xhat;
  GridFunction out = GridFunction::like(xg, 1);
  const double b = fr.model().b;
  numerics::parallel_for(xg.size(), cfg.parallel, [&](int i) {
    double rho = xg.node(i);
    Vec f = fr.orbit_deriv(rho);
    double f2 = f.squaredNorm();
    if (std::sqrt(f2) < b * (1.0 - 1e-12)) throw Error("gamma_c: |f(x0)| below the frame bound b");
    Vec F = forcing(fr, view, spec, rho, cfg.eps);
    out.at(i) = (fr.proj(rho, Bundle::center) * F).dot(f) / f2;
  });
  return field_with_radii(std::move(out), cfg);
}

// Gauss lattice of 3-point panels of width hq, aligned with the state nodes and extended by T_int on both sides.
struct Lattice {
  double L0 = 0.0, hq = 0.0;
  int k = 1, m_int = 1, npan = 0;
  std::vector<double> c;  // Gauss nodes on [0, 1]
  std::vector<double> w;
  [[nodiscard]] int points() const { return 3 * npan; }
  [[nodiscard]] double point(int idx) const { return L0 + (idx / 3 + c[idx % 3]) * hq; }
  [[nodiscard]] double T_int_eff() const { return m_int * hq; }
};

Lattice make_lattice(const GridFunction& grid, const OperatorConfig& cfg) {
  Lattice L;
  L.hq = cfg.quadrature_step;
  L.k = static_cast<int>(std::lround(grid.delta() / L.hq));
  L.m_int = static_cast<int>(std::floor(cfg.T_int / L.hq + 1e-9));
  L.L0 = grid.lo() - L.m_int * L.hq;
  L.npan = (grid.size() - 1) * L.k + 2 * L.m_int;
  const auto& q = numerics::gauss_legendre(3);
  L.c = q.nodes;
  L.w = q.weights;
  return L;
}

// g = (B + eps varphi) / X at every lattice point, one column per point.
Mat lattice_integrand(const HyperbolicFrame& fr, const StateView& view, const PerturbationSpec& spec,
                      const OperatorConfig& cfg, const Lattice& L, const ScalarField& Xdiv, bool parallel) {
  Mat G(fr.n(), L.points());
  numerics::parallel_for(L.points(), parallel, [&](int p) {
    double v = L.point(p);
    G.col(p) = forcing(fr, view, spec, v, cfg.eps) / Xdiv(v);
  });
  return G;
}

BundleIntegral bundle_sum(const HyperbolicFrame& fr, const GridFunction& grid, const Lattice& L, const Mat& G,
                          Bundle b, bool parallel) {
  BundleIntegral out;
  out.value = GridFunction::like(grid, fr.n());
  const int rb = fr.dim(b), off = fr.offset(b);
  if (rb == 0) return out;
  const int P = L.points();
  Mat R(rb, P);
  std::vector<double> pg(P);
  numerics::parallel_for(P, parallel, [&](int p) {
    double v = L.point(p);
    R.col(p) = fr.Qinv(v).middleRows(off, rb) * G.col(p);
    pg[p] = (fr.Q(v).middleCols(off, rb) * R.col(p)).norm();
  });
  const double sign = b == Bundle::stable ? 1.0 : -1.0;
  const int K = 3 * L.m_int;
  std::vector<Mat> ker(K);
  for (int q = 0; q < L.m_int; ++q) {
    for (int c = 0; c < 3; ++c) {
      double tau = b == Bundle::stable ? (L.m_int - q - L.c[c]) * L.hq : -(q + L.c[c]) * L.hq;
      ker[3 * q + c] = sign * L.w[c] * L.hq * fr.rate_exp(b, tau);
    }
  }
  numerics::parallel_for(grid.size(), parallel, [&](int i) {
    double rho = grid.node(i);
    int first = 3 * (i * L.k + (b == Bundle::stable ? 0 : L.m_int));
    Vec acc = Vec::Zero(rb);
    for (int m = 0; m < K; ++m) acc.noalias() += ker[m] * R.col(first + m);
    Vec y = fr.Q(rho).middleCols(off, rb) * acc;
    out.value.set(i, fr.proj(rho, b) * y);
  });
  double sup = *std::max_element(pg.begin(), pg.end());
  double lam = bundle_rate(fr, b);
  out.tail = fr.quality().C_U * sup * std::exp(-lam * L.T_int_eff()) / lam;
  return out;
}

BundleIntegral bundle_sum_reference(const HyperbolicFrame& fr, const GridFunction& grid, const Lattice& L,
                                    const Mat& G, Bundle b) {
  BundleIntegral out;
  out.value = GridFunction::like(grid, fr.n());
  if (fr.dim(b) == 0) return out;
  const double sign = b == Bundle::stable ? 1.0 : -1.0;
  double sup = 0.0;
  for (int p = 0; p < L.points(); ++p) sup = std::max(sup, (fr.proj(L.point(p), b) * G.col(p)).norm());
  for (int i = 0; i < grid.size(); ++i) {
    double rho = grid.node(i);
    int first = 3 * (i * L.k + (b == Bundle::stable ? 0 : L.m_int));
    Vec y = Vec::Zero(fr.n());
    for (int m = 0; m < 3 * L.m_int; ++m) {
      int p = first + m;
      y += sign * L.w[p % 3] * L.hq * (fr.prop_bundle(rho, L.point(p), b) * G.col(p));
    }
    out.value.set(i, fr.proj(rho, b) * y);
  }
  double lam = bundle_rate(fr, b);
  out.tail = fr.quality().C_U * sup * std::exp(-lam * L.T_int_eff()) / lam;
  return out;
}

BundleIntegral gamma_bundle_impl(const HyperbolicFrame& fr, const CorrectionState& st, const PerturbationSpec& spec,
                                 const OperatorConfig& cfg, Bundle b, const ScalarField* X_div, bool reference) {
  if (b == Bundle::center) throw Error("gamma_bundle: stable or unstable bundle expected");
  StateView view(fr, st, cfg, spec.h);
  Lattice L = make_lattice(st.xs, cfg);
  const ScalarField& Xd = X_div ? *X_div : st.X;
  Mat G = lattice_integrand(fr, view, spec, cfg, L, Xd, cfg.parallel && !reference);
  return reference ? bundle_sum_reference(fr, st.xs, L, G, b) : bundle_sum(fr, st.xs, L, G, b, cfg.parallel);
}

}  // namespace

ScalarField gamma_c(const HyperbolicFrame& fr, const CorrectionState& st, const PerturbationSpec& spec,
                    const OperatorConfig& cfg) {
  StateView view(fr, st, cfg, spec.h);
  return gamma_c_view(fr, view, spec, cfg);
}

BundleIntegral gamma_bundle(const HyperbolicFrame& fr, const CorrectionState& st, const PerturbationSpec& spec,
                            const OperatorConfig& cfg, Bundle b, const ScalarField* X_div) {
  return gamma_bundle_impl(fr, st, spec, cfg, b, X_div, false);
}

BundleIntegral gamma_bundle_reference(const HyperbolicFrame& fr, const CorrectionState& st,
                                      const PerturbationSpec& spec, const OperatorConfig& cfg, Bundle b,
                                      const ScalarField* X_div) {
  return gamma_bundle_impl(fr, st, spec, cfg, b, X_div, true);
}

StateDistance state_distance(const CorrectionState& a, const CorrectionState& b, double eta, double core_half) {
  GridFunction dX = a.X.xhat - b.X.xhat;
  GridFunction ds = a.xs - b.xs;
  GridFunction du = a.xu - b.xu;
  GridFunction dds = derivative(ds, 1);
  GridFunction ddu = derivative(du, 1);
  double lo = core_half < 0 ? dX.lo() : -core_half;
  double hi = core_half < 0 ? dX.hi() : core_half;
  StateDistance d;
  d.X = sup_on(dX, lo, hi, eta);
  d.xs = sup_on(ds, lo, hi, eta);
  d.xu = sup_on(du, lo, hi, eta);
  d.dxs = sup_on(dds, lo, hi, eta);
  d.dxu = sup_on(ddu, lo, hi, eta);
  return d;
}

StepResult gamma_step(const HyperbolicFrame& fr, const CorrectionState& st, const PerturbationSpec& spec,
                      const OperatorConfig& cfg) {
  StateView view(fr, st, cfg, spec.h);
  StepResult r;
  ScalarField Xn = gamma_c_view(fr, view, spec, cfg);
  const ScalarField& Xd = cfg.use_updated_field ? Xn : st.X;
  Lattice L = make_lattice(st.xs, cfg);
  Mat G = lattice_integrand(fr, view, spec, cfg, L, Xd, cfg.parallel);
  BundleIntegral s = bundle_sum(fr, st.xs, L, G, Bundle::stable, cfg.parallel);
  BundleIntegral u = bundle_sum(fr, st.xs, L, G, Bundle::unstable, cfg.parallel);
  r.next = {std::move(Xn), std::move(s.value), std::move(u.value)};
  r.tail = s.tail + u.tail;
  r.defect = state_distance(r.next, st, cfg.eta);
  double core = core_half_width(cfg, spec.h, std::max(st.X.t0(), r.next.X.t0()));
  if (core > 0) r.core_defect = state_distance(r.next, st, cfg.eta, core);
  for (int i = 0; i < r.next.xs.size(); ++i) {
    double rho = r.next.xs.node(i);
    Vec x = r.next.xs.value(i) + r.next.xu.value(i);
    r.center_norm = std::max(r.center_norm, (fr.proj(rho, Bundle::center) * x).norm());
  }
  r.phi0 = solve_flow(r.next.X, -cfg.delta, cfg.delta)(0.0);
  return r;
}

std::pair<CorrectionState, IterationReport> iterate(const HyperbolicFrame& fr, const PerturbationSpec& spec,
                                                    const OperatorConfig& cfg,
                                                    std::optional<CorrectionState> initial) {
  validate_config(fr, cfg);
  CorrectionState st = initial ? std::move(*initial) : zero_state(fr, cfg);
  IterationReport rep;
  double prev = -1.0;
  int above = 0;
  const double f1 = estimate_field_norms(fr, 0.0, -cfg.T, cfg.T, 200).f1;
  GridFunction zero1 = GridFunction::like(st.X.xhat, 1), zeron = GridFunction::like(st.xs, fr.n());
  for (int it = 1; it <= cfg.max_iters; ++it) {
    StepResult r;
    try {
      r = gamma_step(fr, st, spec, cfg);
    } catch (const RangeError&) {
      throw;
    } catch (const Error& e) {
      rep.status = "diverged";
      IterationRecord rec;
      rec.iter = it;
      rec.violated = e.what();
      rep.records.push_back(rec);
      break;
    }
    IterationRecord rec;
    rec.iter = it;
    rec.d_eta = r.defect.total();
    rec.d_core = r.core_defect.total();
    rec.E_c = r.defect.X;
    rec.E_s = r.defect.xs + r.defect.dxs;
    rec.E_u = r.defect.xu + r.defect.dxu;
    rec.center_norm = r.center_norm;
    rec.phi0 = r.phi0;
    double ratio = -1.0;
    if (prev > 1e-13) {
      ratio = rec.d_eta / prev;
      rep.kappa_hat = std::max(rep.kappa_hat, ratio);
    }
    rec.kappa_hat = rep.kappa_hat;
    auto check_ball = [&](const GridFunction& g, const GridFunction& z, const std::optional<BallRadii>& radii,
                          const char* name) {
      if (!radii || !rec.inside_ball) return;
      auto br = ball_membership(g, z, *radii);
      if (!br.inside) {
        rec.inside_ball = false;
        rec.violated = std::string(name) + " level " + std::to_string(br.violated_level);
      }
    };
    check_ball(r.next.X.xhat, zero1, cfg.t_radii, "X");
    check_ball(r.next.xs, zeron, cfg.s_radii, "xs");
    check_ball(r.next.xu, zeron, cfg.u_radii, "xu");
    rep.records.push_back(rec);
    rep.iterations = it;
    rep.E_c = rec.E_c;
    rep.E_s = rec.E_s;
    rep.E_u = rec.E_u;
    rep.tail = r.tail;
    double lam = min_rate(fr);
    rep.E_eta = rec.d_eta + r.tail * (2.0 + f1 + lam);
    rep.tail_ok = r.tail < cfg.tol_eta / 10.0;
    if (!rec.inside_ball) {
      rep.status = "ball_exit";
      break;
    }
    if (rec.d_eta <= cfg.tol_eta) {
      rep.status = "converged";
      break;
    }
    above = ratio >= 1.0 ? above + 1 : 0;
    if (above >= 5) {
      rep.status = "diverged";
      break;
    }
    prev = rec.d_eta;
    if (it < cfg.max_iters) st = std::move(r.next);
  }
  return {std::move(st), std::move(rep)};
}

Certificate certify(const HyperbolicFrame& fr, const PerturbationSpec& spec, const OperatorConfig& cfg,
                    const CorrectionState& v) {
  validate_config(fr, cfg);
  Certificate c;
  StepResult r1 = gamma_step(fr, v, spec, cfg);
  c.d_eta = r1.defect.total();
  c.E_c = r1.defect.X;
  c.E_s = r1.defect.xs + r1.defect.dxs;
  c.E_u = r1.defect.xu + r1.defect.dxu;
  c.tail = r1.tail;
  const double f1 = estimate_field_norms(fr, 0.0, -cfg.T, cfg.T, 200).f1;
  c.E_eta = c.d_eta + r1.tail * (2.0 + f1 + min_rate(fr));
  if (c.d_eta > 0.0) {
    StepResult r2 = gamma_step(fr, r1.next, spec, cfg);
    c.d_next = r2.defect.total();
    c.kappa_hat = c.d_next / c.d_eta;
  }
  return c;
}

nlohmann::json report_to_json(const IterationReport& r) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& x : r.records) {
    recs.push_back({{"iter", x.iter}, {"d_eta", x.d_eta}, {"d_core", x.d_core}, {"kappa_hat", x.kappa_hat},
                    {"E_c", x.E_c}, {"E_s", x.E_s}, {"E_u", x.E_u}, {"center_norm", x.center_norm},
                    {"phi0", x.phi0}, {"inside_ball", x.inside_ball}, {"violated", x.violated}});
  }
  return {{"status", r.status}, {"iterations", r.iterations}, {"kappa_hat", r.kappa_hat}, {"E_c", r.E_c},
          {"E_s", r.E_s}, {"E_u", r.E_u}, {"E_eta", r.E_eta}, {"tail", r.tail}, {"tail_ok", r.tail_ok},
          {"records", recs}};
}

void write_iteration_csv(const IterationReport& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "iter,d_eta,kappa_hat,E_c,E_s,E_u\n";
  for (const auto& x : r.records)
    os << x.iter << ',' << format_number(x.d_eta) << ',' << format_number(x.kappa_hat) << ','
       << format_number(x.E_c) << ',' << format_number(x.E_s) << ',' << format_number(x.E_u) << '\n';
}

// ---------------------------------------------------------------- independent residual

ResidualReport residual_fde(const HyperbolicFrame& fr, const CorrectionState& st, const PerturbationSpec& spec,
                            double eps, const std::vector<double>& probe) {
  const double T = st.xs.hi();
  Flow fl = solve_flow(st.X, -T, T);
  const double dt = st.xs.delta() / 2.0;
  double tlo = std::ceil(fl.inverse(-T) / dt) * dt;
  double thi = std::floor(fl.inverse(T) / dt) * dt;
  const int order = st.xs.interp_order();
  GridFunction x = GridFunction::sample(tlo, thi, dt, fr.n(), [&](double t) {
    double a = fl(t);
    return Vec(fr.orbit(a) + st.xs(a) + st.xu(a));
  }, order);
  GridFunction dx = derivative(x, 1);
  Trajectory u{tlo, thi, [&x](double t) { return x(t); }, [&dx](double t) { return dx(t); }};
  ResidualReport rep;
  for (double rho : probe) {
    double t = fl.inverse(rho);
    Vec xt = x(t);
    Vec res = dx(t) - fr.model().f(xt);
    if (eps != 0.0) res -= eps * apply_P(spec, u, eps, t);
    double r = res.norm();
    if (r > rep.sup) {
      rep.sup = r;
      rep.at = rho;
    }
  }
  return rep;
}

// ---------------------------------------------------------------- a-posteriori bounds

std::vector<BoundRow> aposteriori_bounds(const AposterioriInput& in) {
  if (!(in.kappa < 1.0)) throw Error("aposteriori_bounds: kappa_hat >= 1");
  if (in.E_eta < 0) throw Error("aposteriori_bounds: negative E_eta");
  const double delta = std::max(std::abs(in.a), std::abs(in.b));
  auto bound = [&](double e) {
    return in.M * std::exp(delta * in.eta * e) * std::pow(1.0 - in.kappa, -e) * std::pow(in.E_eta, e);
  };
  std::vector<BoundRow> rows;
  for (int j = 0; j <= in.ell; ++j)
    rows.push_back({"X", "interval", j, bound(static_cast<double>(in.ell + 1 - j) / (in.ell + 1))});
  for (int j = 0; j <= in.ell + 1; ++j)
    rows.push_back({"xhat", "interval", j, bound(static_cast<double>(in.ell + 2 - j) / (in.ell + 2))});
  if (in.E_eta <= 1.0) {
    double base = in.E_eta / (1.0 - in.kappa);
    for (int j = 0; j <= in.ell; ++j) {
      double v = in.M * std::pow(base, 1.0 / (j + 1));
      rows.push_back({"X", "semiline", j, v});
      rows.push_back({"xhat", "semiline", j, v});
    }
  }
  return rows;
}

void write_bounds_csv(const std::vector<BoundRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "quantity,kind,j,bound\n";
  for (const auto& r : rows) os << r.quantity << ',' << r.kind << ',' << r.j << ',' << format_number(r.bound) << '\n';
}

// ---------------------------------------------------------------- diagnostics

namespace {

double zero_order_bracket(double t0, double f1, double f2, double su0) {
  return t0 * f1 * su0 + 0.5 * f2 * su0 * su0;
}

}  // namespace

double zero_order_bundle_constant(double C_Pi, double C_U, double lambda, double t0, double f1, double f2,
                                  double su0) {
  return C_Pi * C_U / (lambda * (1.0 - t0)) * zero_order_bracket(t0, f1, f2, su0);
}

double zero_order_center_constant(double C_Pi, double f0, double b, double t0, double f1, double f2, double su0) {
  return C_Pi * f0 / (b * b) * zero_order_bracket(t0, f1, f2, su0);
}

PropagatedReport propagated_bounds(const PropagatedInputs& in, double eps) {
  PropagatedReport r;
  r.eps = eps;
  const auto& q = in.q;
  const auto& nm = in.norms;
  const double su0 = in.s0 + in.u0;
  const bool has_u = std::isfinite(q.lambda_u);
  r.b_c0 = zero_order_center_constant(q.C_Pi, nm.f0, in.b, in.t0, nm.f1, nm.f2, su0);
  r.b_s0 = zero_order_bundle_constant(q.C_Pi, q.C_U, q.lambda_s, in.t0, nm.f1, nm.f2, su0);
  r.b_u0 = has_u ? zero_order_bundle_constant(q.C_Pi, q.C_U, q.lambda_u, in.t0, nm.f1, nm.f2, su0) : 0.0;
  r.d_c0 = q.C_Pi * nm.f0 / (in.b * in.b) * in.p_sup;
  r.d_s0 = q.C_Pi * q.C_U / (q.lambda_s * (1.0 - in.t0)) * in.p_sup;
  r.d_u0 = has_u ? q.C_Pi * q.C_U / (q.lambda_u * (1.0 - in.t0)) * in.p_sup : 0.0;
  r.eps0 = kInf;
  bool ok = true;
  auto comp = [&](const char* name, double radius, double b, double d) {
    if (radius - b < 0) {
      ok = false;
      r.eps0 = 0.0;
      r.notes.push_back(std::string(name) + ": radius below the zero-order constant");
      return;
    }
    if (d > 0) r.eps0 = std::min(r.eps0, (radius - b) / d);
  };
  comp("t", in.t0, r.b_c0, r.d_c0);
  comp("s", in.s0, r.b_s0, r.d_s0);
  if (has_u) comp("u", in.u0, r.b_u0, r.d_u0);
  r.feasible = ok && eps <= r.eps0;
  if (ok && !r.feasible) r.notes.push_back("eps exceeds the admissible eps0");
  return r;
}

PropagatedReport propagated_bounds_report(const HyperbolicFrame& fr, const PerturbationSpec& spec,
                                          const OperatorConfig& cfg, const BallRadii& t, const BallRadii& s,
                                          const BallRadii& u) {
  PropagatedInputs in;
  in.q = fr.quality();
  in.b = fr.model().b;
  in.t0 = t.level(0);
  in.s0 = s.level(0);
  in.u0 = u.level(0);
  in.s1 = s.ell() >= 1 ? s.level(1) : s.lip();
  in.u1 = u.ell() >= 1 ? u.level(1) : u.lip();
  in.norms = estimate_field_norms(fr, in.s0 + in.u0, -cfg.T, cfg.T, 200);
  CorrectionState z = zero_state(fr, cfg);
  StateView view(fr, z, cfg, spec.h);
  double psup = 0.0;
  const double core = std::max(0.0, cfg.T - (1.0 + in.t0) * spec.h - cfg.delta);
  for (int i = 0; i < z.xs.size(); ++i) {
    double rho = z.xs.node(i);
    if (std::abs(rho) > core) continue;
    psup = std::max(psup, perturb_term(fr, view, spec, rho, cfg.eps).norm());
  }
  in.p_sup = psup + spec.L2 * (in.s0 + in.u0 + in.s1 + in.u1);
  return propagated_bounds(in, cfg.eps);
}

nlohmann::json propagated_to_json(const PropagatedReport& r) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"b_c0", r.b_c0}, {"b_s0", r.b_s0}, {"b_u0", r.b_u0}, {"d_c0", r.d_c0}, {"d_s0", r.d_s0},
          {"d_u0", r.d_u0}, {"eps0", num(r.eps0)}, {"eps", r.eps}, {"feasible", r.feasible}, {"notes", r.notes}};
}

namespace {

double level_sup(const GridFunction& g, int j) {
  GridFunction d = derivative(g, j);
  return sup_on(d, d.lo(), d.hi());
}

double forcing_sup(const HyperbolicFrame& fr, const CorrectionState& st, const PerturbationSpec& spec,
                   const OperatorConfig& cfg) {
  StateView view(fr, st, cfg, spec.h);
  double m = 0.0;
  for (int i = 0; i < st.xs.size(); ++i) m = std::max(m, forcing(fr, view, spec, st.xs.node(i), cfg.eps).norm());
  return m;
}

struct ProbeConstants {
  double cB = 0.0, dB = 0.0, cphi = 0.0, dphi = 0.0, ephi = 0.0;
  double t0 = 0.0, t1 = 0.0;
  FieldNorms nm;
};

ProbeConstants probe_constants(const HyperbolicFrame& fr, const PerturbationSpec& spec, const OperatorConfig& cfg,
                               const CorrectionState& v, const CorrectionState& w) {
  ProbeConstants c;
  const double eta = cfg.eta, h = spec.h;
  c.t0 = std::max(v.X.t0(), w.X.t0());
  c.t1 = std::max(v.X.t1(), w.X.t1());
  double s[3], u[3];
  for (int j = 0; j < 3; ++j) {
    s[j] = std::max(level_sup(v.xs, j), level_sup(w.xs, j));
    u[j] = std::max(level_sup(v.xu, j), level_sup(w.xu, j));
  }
  const double su0 = s[0] + u[0], su1 = s[1] + u[1], su2 = s[2] + u[2];
  c.nm = estimate_field_norms(fr, std::max(su0, 1e-3), -cfg.T, cfg.T, 200);
  const double t0 = c.t0, t1 = c.t1;
  const double z = composite_constant(eta, t0, t1, h);
  const double eh = std::exp(eta * (1.0 + t0) * h);
  const double lx = c.nm.orbit_speed, lxp = c.nm.orbit_lip;
  c.cB = c.nm.f1 * t0 + su0 * (c.nm.lip2 * su0 + c.nm.f2);
  c.dB = c.nm.f1 * su0;
  c.cphi = spec.L2 * eh;
  c.ephi = spec.L2 * (1.0 + t0) * eh;
  c.dphi = spec.L1 / (eta * (1.0 - t0) * (1.0 - t0)) +
           spec.L2 * (lx * z + su1 * z + (1.0 + t0) * lxp * z + lx * eh + lx * t1 * z + (1.0 + t0) * su2 * z +
                      su1 * t1 * z + su1 * eh);
  return c;
}

}  // namespace

ContractionProbe contraction_probe(const HyperbolicFrame& fr, const PerturbationSpec& spec, const OperatorConfig& cfg,
                                   const CorrectionState& v, const CorrectionState& w) {
  const auto& q = fr.quality();
  if (!(cfg.eta < q.lambda_s)) throw Error("contraction_probe: eta must be below lambda_s");
  const bool has_u = fr.dim(Bundle::unstable) > 0;
  if (has_u && !(cfg.eta < q.lambda_u)) throw Error("contraction_probe: eta must be below lambda_u");
  ContractionProbe r;
  r.input = state_distance(v, w, cfg.eta);
  if (r.input.total() == 0.0) return r;
  StepResult gv = gamma_step(fr, v, spec, cfg);
  StepResult gw = gamma_step(fr, w, spec, cfg);
  r.output = state_distance(gv.next, gw.next, cfg.eta);
  r.measured = r.output.total() / r.input.total();

  const double eta = cfg.eta, eps = std::abs(cfg.eps);
  const ProbeConstants pc = probe_constants(fr, spec, cfg, v, w);
  const double t0 = pc.t0, cB = pc.cB, dB = pc.dB, cphi = pc.cphi, dphi = pc.dphi, ephi = pc.ephi;
  const FieldNorms& nm = pc.nm;
  const double MF = std::max(forcing_sup(fr, v, spec, cfg), forcing_sup(fr, w, spec, cfg));

  const double P0 = cB + eps * cphi, PX = dB + eps * dphi, P1 = eps * ephi;
  const double Kc = q.C_Pi * nm.f0 / (fr.model().b * fr.model().b);
  double A0 = Kc * P0, AX = Kc * PX, A1 = Kc * P1;
  for (Bundle b : {Bundle::stable, Bundle::unstable}) {
    if (fr.dim(b) == 0) continue;
    const double lam = bundle_rate(fr, b);
    const double Ks = 2.0 * q.C_Pi * q.C_U / ((lam - eta) * (1.0 - t0));
    const double extra = 2.0 * q.C_U * q.C_Pi * MF / ((lam - eta) * (1.0 - t0) * (1.0 - t0));
    const double Cd = q.C_Pi / (1.0 - t0);
    A0 += Ks * P0 * (1.0 + nm.f1) + Cd * P0;
    AX += (Ks * PX + extra) * (1.0 + nm.f1) + Cd * PX + q.C_Pi * MF / ((1.0 - t0) * (1.0 - t0));
    A1 += Ks * P1 * (1.0 + nm.f1) + Cd * P1;
  }
  r.predicted = std::max({A0, AX, A1});
  r.holds = r.measured <= r.predicted + 1e-9;
  return r;
}

DifferenceProbe difference_probe(const HyperbolicFrame& fr, const PerturbationSpec& spec, const OperatorConfig& cfg,
                                 const CorrectionState& v, const CorrectionState& w) {
  DifferenceProbe r;
  const StateDistance d = state_distance(v, w, cfg.eta);
  const ProbeConstants pc = probe_constants(fr, spec, cfg, v, w);
  const double dx = d.xs + d.xu, ddx = d.dxs + d.dxu;
  r.B.rhs = pc.cB * dx + pc.dB * d.X;
  r.varphi.rhs = pc.cphi * dx + pc.dphi * d.X + pc.ephi * ddx;
  StateView vv(fr, v, cfg, spec.h), vw(fr, w, cfg, spec.h);
  const double reach = cfg.T - (1.0 + pc.t0) * spec.h - cfg.delta;
  for (int i = 0; i < v.xs.size(); ++i) {
    const double rho = v.xs.node(i);
    if (std::abs(rho) > reach) continue;
    const double wgt = std::exp(-cfg.eta * std::abs(rho));
    Vec bv = quadratic_term(fr, v.X(rho), vv.xhat(rho), rho);
    Vec bw = quadratic_term(fr, w.X(rho), vw.xhat(rho), rho);
    r.B.lhs = std::max(r.B.lhs, wgt * (bv - bw).norm());
    Vec pv = perturb_term(fr, vv, spec, rho, cfg.eps);
    Vec pw = perturb_term(fr, vw, spec, rho, cfg.eps);
    r.varphi.lhs = std::max(r.varphi.lhs, wgt * (pv - pw).norm());
  }
  return r;
}

}  // namespace hypershadow

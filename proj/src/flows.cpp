#include "hypershadow/flows.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hypershadow {

namespace {

/// Sup of |g| over the interpolant, sampled eight times per cell.
double interpolant_sup(const GridFunction& g) {
  double m = norm_ck(g, 0);
  for (int i = 0; i + 1 < g.size(); ++i)
    for (int k = 1; k < 8; ++k) m = std::max(m, g(g.node(i) + k * g.delta() / 8.0).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

ScalarField make_field(GridFunction xhat, BallRadii ball) {
  if (xhat.dim() != 1) throw Error("ScalarField: X - 1 must be scalar");
  double sup = norm_ck(xhat, 0);
  if (!(sup < 1.0)) throw Error("ScalarField: sup|X - 1| must be below 1");
  if (ball.empty()) {
    ball = BallRadii({interpolant_sup(xhat), interpolant_sup(derivative(xhat, 1)), lipschitz_estimate(xhat, 1)});
  } else if (!(ball.level(0) < 1.0)) {
    throw Error("ScalarField: t0 must be below 1");
  }
  return {std::move(xhat), std::move(ball)};
}

ScalarField field_from_function(double lo, double hi, double delta, const std::function<double(double)>& X,
                                int interp_order, BallRadii ball) {
  auto g = GridFunction::sample_scalar(lo, hi, delta, [&](double r) { return X(r) - 1.0; }, interp_order);
  return make_field(std::move(g), std::move(ball));
}

ScalarField unit_field(double lo, double hi, double delta, int interp_order) {
  return make_field(GridFunction(lo, hi, delta, 1, interp_order), BallRadii({0.0, 0.0, 0.0}));
}

double inflated_half_width(double T, double T_int, double h, double t0) {
  return T + T_int + (1.0 + t0) * h;
}

namespace {

// Integral of 1/X over [a, b] with a fixed Gauss rule per grid cell.
double inverse_integral(const ScalarField& X, double a, double b) {
  const auto& q = numerics::gauss_legendre(6);
  double len = b - a;
  if (len == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < q.nodes.size(); ++k) s += q.weights[k] / X(a + q.nodes[k] * len);
  return s * len;
}

}  // namespace

Flow solve_flow(const ScalarField& X, double rho_lo, double rho_hi) {
  if (!(rho_lo <= 0.0 && rho_hi >= 0.0)) throw Error("solve_flow: window must contain 0");
  const GridFunction& xh = X.xhat;
  if (!(norm_ck(xh, 0) < 1.0)) throw Error("solve_flow: sup|X - 1| >= 1");
  const double d = xh.delta();
  const int p = xh.interp_order();
  const int kl = static_cast<int>(std::ceil(-rho_lo / d - 1e-9));
  const int kr = static_cast<int>(std::ceil(rho_hi / d - 1e-9));
  const int pad = p + 2;

  Flow fl;
  fl.source = X;
  fl.phi_inv = GridFunction(-(kl + pad) * d, (kr + pad) * d, d, 1, p);
  GridFunction& inv = fl.phi_inv;
  const int zero = kl + pad;
  inv.at(zero) = 0.0;
  for (int i = zero + 1; i < inv.size(); ++i) inv.at(i) = inv.at(i - 1) + inverse_integral(X, inv.node(i - 1), inv.node(i));
  for (int i = zero - 1; i >= 0; --i) inv.at(i) = inv.at(i + 1) - inverse_integral(X, inv.node(i), inv.node(i + 1));

  const int ml = static_cast<int>(std::floor(-inv.at(0) / d));
  const int mr = static_cast<int>(std::floor(inv.at(inv.size() - 1) / d));
  fl.phi = GridFunction(-ml * d, mr * d, d, 1, p);
  GridFunction& ph = fl.phi;
  const int tz = ml;
  ph.at(tz) = 0.0;

  // Fixed-step RK4 predictor followed by Newton polishing on the integral identity.
  auto rk4 = [&](double y, double hstep) {
    double k1 = X(y);
    double k2 = X(y + 0.5 * hstep * k1);
    double k3 = X(y + 0.5 * hstep * k2);
    double k4 = X(y + hstep * k3);
    return y + hstep * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0;
  };
  auto polish = [&](double rho, double t) {
    for (int it = 0; it < 4; ++it) {
      double x = (rho - inv.lo()) / d;
      int j = std::clamp(static_cast<int>(std::lround(x)), 0, inv.size() - 1);
      double g = inv.at(j) + inverse_integral(X, inv.node(j), rho) - t;
      double step = g * X(rho);
      rho -= step;
      if (std::abs(step) < 1e-16 * std::max(1.0, std::abs(rho))) break;
    }
    return rho;
  };
  for (int i = tz + 1; i < ph.size(); ++i) ph.at(i) = polish(rk4(ph.at(i - 1), d), ph.node(i));
  for (int i = tz - 1; i >= 0; --i) ph.at(i) = polish(rk4(ph.at(i + 1), -d), ph.node(i));
  ph.at(tz) = 0.0;
  return fl;
}

double DistortionReport::worst() const {
  return std::min({worst_lower, worst_upper, worst_inverse_lower, worst_inverse_upper});
}

DistortionReport distortion_check(const Flow& fl) {
  DistortionReport r;
  r.t0 = fl.source.t0();
  const double t0 = r.t0;
  auto scan = [](const GridFunction& g, double lo_b, double hi_b, double& wl, double& wu, int& viol) {
    wl = wu = std::numeric_limits<double>::infinity();
    for (int i = 0; i < g.size(); ++i) {
      for (int j = i + 1; j < g.size(); ++j) {
        double slope = (g.at(j) - g.at(i)) / (g.node(j) - g.node(i));
        double sl = slope - lo_b, su = hi_b - slope;
        wl = std::min(wl, sl);
        wu = std::min(wu, su);
        if (sl < -1e-8 || su < -1e-8) ++viol;
      }
    }
  };
  scan(fl.phi, 1.0 - t0, 1.0 + t0, r.worst_lower, r.worst_upper, r.violations);
  scan(fl.phi_inv, 1.0 / (1.0 + t0), 1.0 / (1.0 - t0), r.worst_inverse_lower, r.worst_inverse_upper, r.violations);
  return r;
}

CompositeWindow::CompositeWindow(const Flow& fl, double rho, double h) : fl_(&fl), h_(h) {
  if (!fl.rho_in_range(rho)) throw RangeError("composite_window: rho outside the flow range");
  t_ = fl.inverse(rho);
  if (!fl.t_in_range(t_ - h) || !fl.t_in_range(t_ + h)) throw RangeError("composite_window: history exceeds flow range");
}

double CompositeWindow::operator()(double s) const { return (*fl_)(t_ + s); }

CompositeWindow composite_window(const Flow& fl, double rho, double h) { return CompositeWindow(fl, rho, h); }

namespace {

double field_eta_distance(const ScalarField& X, const ScalarField& Y, double eta) {
  GridFunction diff = X.xhat - Y.xhat;
  return eta > 0 ? sup_on(diff, diff.lo(), diff.hi(), eta) : sup_on(diff, diff.lo(), diff.hi());
}

}  // namespace

BoundCheck flow_difference_eta(const ScalarField& X, const ScalarField& Y, WeightParam w) {
  const double t0 = std::max(X.t0(), Y.t0());
  Flow fx = solve_flow(X, X.xhat.lo(), X.xhat.hi());
  Flow fy = solve_flow(Y, X.xhat.lo(), X.xhat.hi());
  BoundCheck b;
  for (int i = 0; i < fx.phi_inv.size(); ++i) {
    double r = fx.phi_inv.node(i);
    b.lhs = std::max(b.lhs, std::abs(fx.phi_inv.at(i) - fy.phi_inv.at(i)) * std::exp(-w.eta * std::abs(r)));
  }
  b.rhs = field_eta_distance(X, Y, w.eta) / (w.eta * (1.0 - t0) * (1.0 - t0));
  return b;
}

BoundCheck flow_forward_difference_eta(const ScalarField& X, const ScalarField& Y, WeightParam w) {
  const double t1 = std::max(X.t1(), Y.t1());
  if (!(t1 < w.eta)) throw Error("flow_forward_difference_eta: needs Lip(X) < eta");
  Flow fx = solve_flow(X, X.xhat.lo(), X.xhat.hi());
  Flow fy = solve_flow(Y, X.xhat.lo(), X.xhat.hi());
  BoundCheck b;
  for (int i = 0; i < fx.phi.size(); ++i) {
    double t = fx.phi.node(i);
    if (!fy.t_in_range(t)) continue;
    b.lhs = std::max(b.lhs, std::abs(fx.phi.at(i) - fy(t)) * std::exp(-w.eta * std::abs(t)));
  }
  b.rhs = field_eta_distance(X, Y, 0.0) / ((1.0 - t1 / w.eta) * w.eta * std::exp(1.0));
  return b;
}

double composite_constant(double eta, double t0, double t1, double h) {
  return std::exp(t1 * h) * (std::exp(eta * (1.0 + t0) * h) - 1.0) / (eta * (1.0 + t0));
}

BoundCheck composite_difference_eta(const ScalarField& X, const ScalarField& Y, WeightParam w, double h) {
  const double t0 = std::max(X.t0(), Y.t0());
  const double t1 = std::max(X.t1(), Y.t1());
  const double lo = X.xhat.lo(), hi = X.xhat.hi();
  const double pad = (1.0 + t0) * h + 2 * X.xhat.delta();
  Flow fx = solve_flow(X, lo - pad, hi + pad);
  Flow fy = solve_flow(Y, lo - pad, hi + pad);
  BoundCheck b;
  const int ns = 40;
  for (int i = 0; i < X.xhat.size(); ++i) {
    double rho = X.xhat.node(i);
    CompositeWindow a(fx, rho, h), be(fy, rho, h);
    double wgt = std::exp(-w.eta * std::abs(rho));
    for (int k = 0; k <= ns; ++k) {
      double s = -h + 2.0 * h * k / ns;
      b.lhs = std::max(b.lhs, std::abs(a(s) - be(s)) * wgt);
    }
  }
  b.rhs = composite_constant(w.eta, t0, t1, h) * field_eta_distance(X, Y, w.eta);
  return b;
}

std::vector<double> flow_derivative_bounds(const std::vector<double>& t) {
  const int L = static_cast<int>(t.size()) - 1;
  std::vector<double> tt(L + 1, 0.0);
  if (L < 0) return tt;
  tt[0] = 1.0 + t[0];
  // Bell polynomials B_{r,k}(tt[0], tt[1], ...) by the standard recurrence.
  for (int r = 1; r <= L; ++r) {
    std::vector<std::vector<double>> B(r + 1, std::vector<double>(r + 1, 0.0));
    B[0][0] = 1.0;
    for (int m = 1; m <= r; ++m) {
      for (int k = 1; k <= m; ++k) {
        double s = 0.0, binom = 1.0;
        for (int i = 1; i <= m - k + 1; ++i) {
          if (i > 1) binom = binom * (m - i + 1) / (i - 1);
          s += binom * tt[i - 1] * B[m - i][k - 1];
        }
        B[m][k] = s;
      }
    }
    double v = 0.0;
    for (int k = 1; k <= r; ++k) v += t[k] * B[r][k];
    tt[r] = v;
  }
  return tt;
}

}  // namespace hypershadow

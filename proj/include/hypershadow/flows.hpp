#pragma once
/** @file flows.hpp
 *  @brief One-dimensional reparametrization flows phi' = X(phi), their inverses and composite windows.
 */
#include "hypershadow/funcspace.hpp"

#include <functional>
#include <vector>

namespace hypershadow {

/// The field X stored as X - 1, with the ball radii (t0, t1, ..., lip).
struct ScalarField {
  GridFunction xhat;
  BallRadii ball;

  [[nodiscard]] double operator()(double rho) const { return 1.0 + xhat.scalar(rho); }
  [[nodiscard]] double t0() const { return ball.level(0); }
  [[nodiscard]] double t1() const { return ball.ell() >= 1 ? ball.level(1) : ball.lip(); }
};

/// Validates sup|X - 1| < 1. An empty ball is replaced by the measured (sup|X-1|, sup|X'|, Lip X').
[[nodiscard]] ScalarField make_field(GridFunction xhat, BallRadii ball = {});
[[nodiscard]] ScalarField field_from_function(double lo, double hi, double delta,
                                              const std::function<double(double)>& X,
                                              int interp_order = 5, BallRadii ball = {});
[[nodiscard]] ScalarField unit_field(double lo, double hi, double delta, int interp_order = 5);

class Flow {
public:
  GridFunction phi;      ///< t -> phi(t)
  GridFunction phi_inv;  ///< rho -> phi^{-1}(rho)
  ScalarField source;

  [[nodiscard]] double operator()(double t) const { return phi.scalar(t); }
  [[nodiscard]] double inverse(double rho) const { return phi_inv.scalar(rho); }
  [[nodiscard]] bool t_in_range(double t) const { return t >= phi.lo() - 1e-12 && t <= phi.hi() + 1e-12; }
  [[nodiscard]] bool rho_in_range(double r) const {
    return r >= phi_inv.lo() - 1e-12 && r <= phi_inv.hi() + 1e-12;
  }
};

/// Flow of X valid for rho in [rho_lo, rho_hi] (snapped outward to the field's grid; must contain 0).
[[nodiscard]] Flow solve_flow(const ScalarField& X, double rho_lo, double rho_hi);

/// Window needed so that every history and quadrature lookup of the Gamma iteration stays in range.
[[nodiscard]] double inflated_half_width(double T, double T_int, double h, double t0);

struct DistortionReport {
  double t0 = 0.0;
  double worst_lower = 0.0;          ///< min over pairs of slope(phi) - (1 - t0)
  double worst_upper = 0.0;          ///< min over pairs of (1 + t0) - slope(phi)
  double worst_inverse_lower = 0.0;  ///< same for phi^{-1} against 1/(1 + t0)
  double worst_inverse_upper = 0.0;  ///< and 1/(1 - t0)
  int violations = 0;
  [[nodiscard]] double worst() const;
};

/// Two-sided slope bounds of phi and phi^{-1} over all node pairs (violations beyond 1e-8 counted).
[[nodiscard]] DistortionReport distortion_check(const Flow& fl);

/// s -> alpha(rho, s) = phi(phi^{-1}(rho) + s) on [-h, h].
class CompositeWindow {
public:
  CompositeWindow(const Flow& fl, double rho, double h);
  [[nodiscard]] double operator()(double s) const;
  [[nodiscard]] double base_time() const { return t_; }

private:
  const Flow* fl_;
  double t_;
  double h_;
};

[[nodiscard]] CompositeWindow composite_window(const Flow& fl, double rho, double h);

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  [[nodiscard]] bool holds(double slack = 1e-9) const { return lhs <= rhs + slack; }
};

/// ||phi_X^{-1} - phi_Y^{-1}||_eta against ||X - Y||_eta / (eta (1 - t0)^2).
[[nodiscard]] BoundCheck flow_difference_eta(const ScalarField& X, const ScalarField& Y, WeightParam w);

/// Forward version: ||phi_X - phi_Y||_eta against (1 - t1/eta)^{-1} ||X - Y||_{C0} / (eta e).
[[nodiscard]] BoundCheck flow_forward_difference_eta(const ScalarField& X, const ScalarField& Y, WeightParam w);

/// Grönwall constant z = e^{t1 h}(e^{eta(1+t0)h} - 1)/(eta(1+t0)).
[[nodiscard]] double composite_constant(double eta, double t0, double t1, double h);

/// sup_{rho,s} |alpha - beta| e^{-eta|rho|} against z ||X - Y||_eta.
[[nodiscard]] BoundCheck composite_difference_eta(const ScalarField& X, const ScalarField& Y, WeightParam w,
                                                  double h);

/// Bounds on |D^{j+1} phi| for j = 0..l given bounds t[j] on |D^j (X - 1)|.
[[nodiscard]] std::vector<double> flow_derivative_bounds(const std::vector<double>& t);

}  // namespace hypershadow

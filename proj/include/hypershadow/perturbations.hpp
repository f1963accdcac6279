#pragma once
/** @file perturbations.hpp
 *  @brief Perturbation functionals p(t, theta, eps) on history segments theta : [-h, h] -> R^n.
 */
#include "hypershadow/hyperbolic.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace hypershadow {

/// s -> theta(s) on [-h, h] around time t. eval_deriv may be empty.
struct HistorySegment {
  double t = 0.0;
  double h = 0.0;
  std::function<Vec(double)> eval;
  std::function<Vec(double)> eval_deriv;

  [[nodiscard]] Vec operator()(double s) const { return eval(s); }
  [[nodiscard]] bool has_deriv() const { return static_cast<bool>(eval_deriv); }
  /// Throws when the segment has no derivative access.
  [[nodiscard]] Vec deriv(double s) const;
};

/// A trajectory u on [lo, hi] with its derivative.
struct Trajectory {
  double lo = 0.0;
  double hi = 0.0;
  std::function<Vec(double)> value;
  std::function<Vec(double)> deriv;
};

/// The segment u_t; throws RangeError when [t - h, t + h] leaves the trajectory window.
[[nodiscard]] HistorySegment segment_of(const Trajectory& u, double t, double h);

struct PerturbationSpec {
  std::string kind = "zero";
  int n = 0;
  double h = 1e-9;
  double mu = 0.0;
  double L1 = 0.0;
  double L2 = 0.0;
  int ell = 1;
  bool needs_derivative = false;
  std::function<Vec(double, const HistorySegment&, double)> evaluate;
  nlohmann::json descriptor;
};

// ---------------------------------------------------------------- building blocks

/// Q : (t, x) -> R^n with Lipschitz data in t and x.
struct VectorMap {
  std::function<Vec(double, const Vec&)> f;
  double lip_t = 0.0;
  double lip_x = 0.0;
};

/// r : (t, x) -> R with |r| <= sup.
struct ScalarMap {
  std::function<double(double, const Vec&)> f;
  double sup = 0.0;
  double lip_t = 0.0;
  double lip_x = 0.0;
};

[[nodiscard]] VectorMap identity_map();
[[nodiscard]] VectorMap linear_map(const Mat& A);
/// amplitude * trig(omega x[input] + time_omega t + phase) in component output; trig is sin or cos.
[[nodiscard]] VectorMap trig_map(int n, int output, int input, double amplitude, double omega, double time_omega,
                                 double phase, bool cosine = false);
[[nodiscard]] ScalarMap constant_shift(double r);
/// base + slope * tanh(x[input]).
[[nodiscard]] ScalarMap tanh_shift(double base, double slope, int input);
/// base + coeffs . x clipped to [lo, hi].
[[nodiscard]] ScalarMap affine_shift(double base, const Vec& coeffs, double lo, double hi);

// ---------------------------------------------------------------- builders

[[nodiscard]] PerturbationSpec zero_perturbation(int n);

/// p = g(t, theta(0)).
[[nodiscard]] PerturbationSpec ode_term(int n, const VectorMap& g);

/// p = Q(t, theta(r(t, theta(0)))). u1 bounds |theta'| on the working ball and enters L1, L2.
[[nodiscard]] PerturbationSpec state_dependent_delay(int n, const VectorMap& Q, const ScalarMap& r, double h,
                                                     double u1 = 1.0);

/// p = Q(t, theta(r(t, theta(r1(t, theta(0)))))).
[[nodiscard]] PerturbationSpec nested_delay(int n, const VectorMap& Q, const ScalarMap& r, const ScalarMap& r1,
                                            double h, double u1 = 1.0);

/// p = Q(t, theta(r(t, theta'(0)))).
[[nodiscard]] PerturbationSpec neutral_delay(int n, const VectorMap& Q, const ScalarMap& r, double h,
                                             double u1 = 1.0);

/// g(y_1, ..., y_L) with partial Jacobians D_i g.
struct MultiArgField {
  int n = 0;
  int L = 1;
  std::function<Vec(const std::vector<Vec>&)> f;
  std::function<Mat(const std::vector<Vec>&, int)> D;
};

[[nodiscard]] MultiArgField single_arg_field(const OdeModel& m);

/// A delay functional tau(theta) with |tau| <= sup.
struct DelayFunctional {
  std::function<double(const HistorySegment&)> f;
  double sup = 0.0;
};

[[nodiscard]] DelayFunctional constant_delay(double tau);
/// base + slope * tanh(theta(0)[input]).
[[nodiscard]] DelayFunctional state_delay(double base, double slope, int input);

/// Encodes x' = g(x(t - eps tau_1), ..., x(t - eps tau_L)) as x' = g(x, ..., x) + eps p with
/// p = -sum_i int_0^1 D_i g(theta(-s eps tau_1), ...) theta'(-s eps tau_i) tau_i ds.
[[nodiscard]] PerturbationSpec small_delay_q(const MultiArgField& g, std::vector<DelayFunctional> taus, double h,
                                             int quad_order = 8);

/// (g(theta(-eps tau_1), ...) - g(theta(0), ...)) / eps, the quantity small_delay_q represents.
[[nodiscard]] Vec small_delay_difference_quotient(const MultiArgField& g, const std::vector<DelayFunctional>& taus,
                                                  const HistorySegment& theta, double eps);

struct ShiftTerm {
  double shift = 0.0;
  double weight = 1.0;
};

/// p = sum_i weight_i theta(shift_i).
[[nodiscard]] PerturbationSpec multi_delay_advance(int n, const std::vector<ShiftTerm>& terms, double h);

// ---------------------------------------------------------------- evaluation and probes

/// p(t, u_t, eps).
[[nodiscard]] Vec apply_P(const PerturbationSpec& spec, const Trajectory& u, double eps, double t);

/// C^1 norm of theta_a - theta_b sampled on [-h, h].
[[nodiscard]] double segment_distance_c1(const HistorySegment& a, const HistorySegment& b, double h,
                                         int samples = 41);

struct SegmentPair {
  HistorySegment a;
  HistorySegment b;
};

struct ProbeReport {
  double L1_hat = 0.0;
  double L2_hat = 0.0;
  bool dominated = true;
  int violations = 0;
  double worst_excess = 0.0;  ///< max of |dP| - (L1 |dt| + L2 |d theta|_{C1})
};

/// L1_hat from pairs with equal trajectories at different times, L2_hat from pairs at equal times;
/// the declared (L1, L2) must dominate every pair.
[[nodiscard]] ProbeReport lipschitz_probe(const PerturbationSpec& spec, const std::vector<SegmentPair>& pairs,
                                          double eps = 0.0);

/// Sup over t in [a, b] of |d^j/dt^j P[u](t)| for j = 0..ell, by finite differences.
[[nodiscard]] std::vector<double> derivative_envelope(const PerturbationSpec& spec, const Trajectory& u, double eps,
                                                      double a, double b, int ell, int samples = 50);

/// Central difference of the output in mu for a family of specs.
[[nodiscard]] Vec mu_sensitivity(const std::function<PerturbationSpec(double)>& family, double mu, double dmu,
                                 double t, const HistorySegment& theta, double eps);

/// Spec from {kind, parameters, h, mu, L1?, L2?}. Declared L1/L2 override the builder's values.
[[nodiscard]] PerturbationSpec perturbation_from_json(const nlohmann::json& j, const HyperbolicFrame& fr);

}  // namespace hypershadow

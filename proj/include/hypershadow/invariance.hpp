#pragma once
/** @file invariance.hpp
 *  @brief The operator Gamma = (Gamma_c, Gamma_s, Gamma_u), its fixed-point driver and the diagnostics around it.
 */
#include "hypershadow/flows.hpp"
#include "hypershadow/hyperbolic.hpp"
#include "hypershadow/perturbations.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace hypershadow {

struct CorrectionState {
  ScalarField X;    ///< X - 1 on [-T, T]
  GridFunction xs;  ///< stable displacement
  GridFunction xu;  ///< unstable displacement
};

struct OperatorConfig {
  double eta = 0.25;
  double T = 30.0;
  double T_int = 20.0;
  double delta = 0.05;
  double quadrature_step = 0.025;
  double eps = 0.0;
  int max_iters = 60;
  double tol_eta = 1e-9;
  int interp_order = 7;
  bool use_updated_field = false;
  bool parallel = true;
  std::optional<BallRadii> t_radii, s_radii, u_radii;
};

/// Throws Error unless 0 < eta < min(lambda_s, lambda_u), delta / quadrature_step is an integer and T, T_int > 0.
void validate_config(const HyperbolicFrame& fr, const OperatorConfig& cfg);

/// X = 1, xs = xu = 0 on the config grid.
[[nodiscard]] CorrectionState zero_state(const HyperbolicFrame& fr, const OperatorConfig& cfg);

/// Half-width of the core window where metrics are reported.
[[nodiscard]] double core_half_width(const OperatorConfig& cfg, double h, double t0);

// ---------------------------------------------------------------- pointwise terms

/// f(x0 + xhat) - f(x0) - Df(x0) xhat.
[[nodiscard]] Vec taylor_remainder(const HyperbolicFrame& fr, const Vec& xhat, double rho);
/// int_0^1 (1 - s) D^2 f(x0 + s xhat)[xhat, xhat] ds by Gauss quadrature.
[[nodiscard]] Vec taylor_remainder_integral(const HyperbolicFrame& fr, const Vec& xhat, double rho, int order = 10);

/// (1 - X) Df(x0) xhat + T[x0, xhat] at rho.
[[nodiscard]] Vec quadratic_term(const HyperbolicFrame& fr, double X, const Vec& xhat, double rho);

/// Everything Gamma needs from a state: the state, its flow and derivative grids.
class StateView {
public:
  StateView(const HyperbolicFrame& fr, const CorrectionState& st, const OperatorConfig& cfg, double h);

  [[nodiscard]] const CorrectionState& state() const { return *st_; }
  [[nodiscard]] const Flow& flow() const { return flow_; }
  [[nodiscard]] double X(double rho) const { return st_->X(rho); }
  [[nodiscard]] Vec xhat(double rho) const;
  [[nodiscard]] Vec xhat_deriv(double rho) const;
  /// The history segment ((x0 + xhat) o phi)_{phi^{-1}(rho)} with derivative access.
  [[nodiscard]] HistorySegment segment(double rho, double h) const;

private:
  const HyperbolicFrame* fr_;
  const CorrectionState* st_;
  Flow flow_;
  GridFunction dxs_, dxu_;
};

/// p(phi^{-1}(rho), ((x0 + xhat) o phi)_{phi^{-1}(rho)}, eps).
[[nodiscard]] Vec perturb_term(const HyperbolicFrame& fr, const StateView& v, const PerturbationSpec& spec,
                               double rho, double eps);

/// B + eps varphi at rho.
[[nodiscard]] Vec forcing(const HyperbolicFrame& fr, const StateView& v, const PerturbationSpec& spec, double rho,
                          double eps);

// ---------------------------------------------------------------- Gamma

[[nodiscard]] ScalarField gamma_c(const HyperbolicFrame& fr, const CorrectionState& st, const PerturbationSpec& spec,
                                  const OperatorConfig& cfg);

struct BundleIntegral {
  GridFunction value;
  double tail = 0.0;  ///< truncation bound C_U sup|Pi g| e^{-lambda T_int} / lambda
};

/// Production path: nodewise kernel sums over a shared Gauss lattice, OpenMP-parallel when cfg.parallel.
/// X_div is the field used in the 1/X factor (the state's own X unless the updated variant is requested).
[[nodiscard]] BundleIntegral gamma_bundle(const HyperbolicFrame& fr, const CorrectionState& st,
                                          const PerturbationSpec& spec, const OperatorConfig& cfg, Bundle b,
                                          const ScalarField* X_div = nullptr);
/// Serial reference: plain loops over prop_b(rho, v) Pi g(v); slow, kept for testing and benchmarks.
[[nodiscard]] BundleIntegral gamma_bundle_reference(const HyperbolicFrame& fr, const CorrectionState& st,
                                                    const PerturbationSpec& spec, const OperatorConfig& cfg, Bundle b,
                                                    const ScalarField* X_div = nullptr);

[[nodiscard]] inline GridFunction gamma_s(const HyperbolicFrame& fr, const CorrectionState& st,
                                          const PerturbationSpec& spec, const OperatorConfig& cfg) {
  return gamma_bundle(fr, st, spec, cfg, Bundle::stable).value;
}
[[nodiscard]] inline GridFunction gamma_u(const HyperbolicFrame& fr, const CorrectionState& st,
                                          const PerturbationSpec& spec, const OperatorConfig& cfg) {
  return gamma_bundle(fr, st, spec, cfg, Bundle::unstable).value;
}

/// Weighted components of the difference between two states.
struct StateDistance {
  double X = 0.0, xs = 0.0, xu = 0.0, dxs = 0.0, dxu = 0.0;
  [[nodiscard]] double total() const { return X + xs + xu + dxs + dxu; }
};

/// Uses derivative grids of the differences; core_half < 0 means the whole window.
[[nodiscard]] StateDistance state_distance(const CorrectionState& a, const CorrectionState& b, double eta,
                                           double core_half = -1.0);

struct StepResult {
  CorrectionState next;
  StateDistance defect;       ///< Gamma(state) - state, full window
  StateDistance core_defect;  ///< same on the core window
  double tail = 0.0;          ///< truncation bound for this step
  double center_norm = 0.0;   ///< max |Pi^c (xs + xu)| over nodes of next
  double phi0 = 0.0;          ///< phi(0) of the flow of next.X
};

[[nodiscard]] StepResult gamma_step(const HyperbolicFrame& fr, const CorrectionState& st, const PerturbationSpec& spec,
                                    const OperatorConfig& cfg);

struct IterationRecord {
  int iter = 0;
  double d_eta = 0.0;
  double d_core = 0.0;
  double kappa_hat = 0.0;
  double E_c = 0.0, E_s = 0.0, E_u = 0.0;
  double center_norm = 0.0;
  double phi0 = 0.0;
  bool inside_ball = true;
  std::string violated;
};

struct IterationReport {
  std::vector<IterationRecord> records;
  std::string status = "max_iters";  ///< converged, max_iters, diverged, ball_exit
  int iterations = 0;
  double kappa_hat = 0.0;
  double E_c = 0.0, E_s = 0.0, E_u = 0.0;
  double E_eta = 0.0;      ///< d(state, Gamma state) plus the truncation contribution
  double tail = 0.0;
  bool tail_ok = true;     ///< tail below tol_eta / 10
  [[nodiscard]] bool converged() const { return status == "converged"; }
};

/// Picard iteration from initial (default the zero state). The returned state v is the last input,
/// so E_eta = d(v, Gamma v).
[[nodiscard]] std::pair<CorrectionState, IterationReport> iterate(const HyperbolicFrame& fr,
                                                                  const PerturbationSpec& spec,
                                                                  const OperatorConfig& cfg,
                                                                  std::optional<CorrectionState> initial = {});

struct Certificate {
  double d_eta = 0.0;      ///< d(v, Gamma v)
  double d_next = 0.0;     ///< d(Gamma v, Gamma^2 v)
  double kappa_hat = 0.0;  ///< d_next / d_eta
  double tail = 0.0;
  double E_eta = 0.0;
  double E_c = 0.0, E_s = 0.0, E_u = 0.0;
};

/// Two Gamma steps from v: the defect of v itself and a contraction estimate.
[[nodiscard]] Certificate certify(const HyperbolicFrame& fr, const PerturbationSpec& spec, const OperatorConfig& cfg,
                                  const CorrectionState& v);

[[nodiscard]] nlohmann::json report_to_json(const IterationReport& r);
/// iter,d_eta,kappa_hat,E_c,E_s,E_u
void write_iteration_csv(const IterationReport& r, const std::string& path);

// ---------------------------------------------------------------- independent residual

struct ResidualReport {
  double sup = 0.0;
  double at = 0.0;  ///< rho where the sup is attained
};

/// Builds x = (x0 + xhat) o phi on a t-grid, differentiates it numerically and evaluates
/// |x' - f(x) - eps p(t, x_t, eps)| at t = phi^{-1}(rho) for rho in probe.
[[nodiscard]] ResidualReport residual_fde(const HyperbolicFrame& fr, const CorrectionState& st,
                                          const PerturbationSpec& spec, double eps, const std::vector<double>& probe);

// ---------------------------------------------------------------- a-posteriori bounds

struct BoundRow {
  std::string quantity;  ///< X or xhat
  std::string kind;      ///< interval or semiline
  int j = 0;
  double bound = 0.0;
};

struct AposterioriInput {
  double E_eta = 0.0;
  double kappa = 0.0;
  double eta = 0.25;
  double a = -2.0, b = 2.0;
  int ell = 1;
  double M = 1.0;
};

/// Throws Error when kappa >= 1.
[[nodiscard]] std::vector<BoundRow> aposteriori_bounds(const AposterioriInput& in);
/// quantity,kind,j,bound
void write_bounds_csv(const std::vector<BoundRow>& rows, const std::string& path);

// ---------------------------------------------------------------- diagnostics

/// Zero-order constant (C_Pi C_U / (lambda (1 - t0))) [t0 f1 (s0 + u0) + f2 (s0 + u0)^2 / 2].
[[nodiscard]] double zero_order_bundle_constant(double C_Pi, double C_U, double lambda, double t0, double f1,
                                                double f2, double su0);
/// (C_Pi f0 / b^2) [t0 f1 (s0 + u0) + f2 (s0 + u0)^2 / 2].
[[nodiscard]] double zero_order_center_constant(double C_Pi, double f0, double b, double t0, double f1, double f2,
                                                double su0);

struct PropagatedInputs {
  QualityMeasures q;
  FieldNorms norms;
  double b = 1.0;
  double t0 = 0.0, s0 = 0.0, u0 = 0.0, s1 = 0.0, u1 = 0.0;
  double p_sup = 0.0;  ///< sup of the perturbation over the ball
};

struct PropagatedReport {
  double b_c0 = 0.0, b_s0 = 0.0, b_u0 = 0.0;
  double d_c0 = 0.0, d_s0 = 0.0, d_u0 = 0.0;
  double eps0 = 0.0;  ///< largest eps with b + eps d <= radius in every component
  double eps = 0.0;
  bool feasible = false;
  std::vector<std::string> notes;
};

[[nodiscard]] PropagatedReport propagated_bounds(const PropagatedInputs& in, double eps);
/// Measures norms and sup|p| around the frame and evaluates propagated_bounds for the config radii.
[[nodiscard]] PropagatedReport propagated_bounds_report(const HyperbolicFrame& fr, const PerturbationSpec& spec,
                                                        const OperatorConfig& cfg, const BallRadii& t,
                                                        const BallRadii& s, const BallRadii& u);
[[nodiscard]] nlohmann::json propagated_to_json(const PropagatedReport& r);

struct ContractionProbe {
  StateDistance input;   ///< d(v, w)
  StateDistance output;  ///< d(Gamma v, Gamma w)
  double measured = 0.0; ///< output / input
  double predicted = 0.0;
  bool holds = true;
};

/// Throws Error when eta >= lambda_s or eta >= lambda_u.
[[nodiscard]] ContractionProbe contraction_probe(const HyperbolicFrame& fr, const PerturbationSpec& spec,
                                                 const OperatorConfig& cfg, const CorrectionState& v,
                                                 const CorrectionState& w);

/// Pointwise difference bounds, weighted by eta:
/// |B[v] - B[w]| <= c_B |xhat_v - xhat_w| + d_B |X_v - X_w| and
/// |varphi[v] - varphi[w]| <= c_phi |dxhat| + d_phi |dX| + e_phi |dxhat'|.
struct DifferenceProbe {
  BoundCheck B;
  BoundCheck varphi;
};

[[nodiscard]] DifferenceProbe difference_probe(const HyperbolicFrame& fr, const PerturbationSpec& spec,
                                               const OperatorConfig& cfg, const CorrectionState& v,
                                               const CorrectionState& w);

}  // namespace hypershadow

#pragma once
/** @file hyperbolic.hpp
 *  @brief Unperturbed hyperbolic orbits: models, center/stable/unstable splittings, propagators.
 *
 *  Every shipped frame is reducible: U(t;s) = Q(t) exp(B (t - s)) Q(t)^{-1}(s) with B block
 *  diagonal (1x1 and rotation-scaling 2x2 blocks). Column 0 of Q spans the center bundle,
 *  then come the stable and the unstable columns.
 */
#include "hypershadow/funcspace.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hypershadow {

struct OdeModel {
  std::string id;
  int n = 0;
  std::function<Vec(const Vec&)> f;
  std::function<Mat(const Vec&)> Df;
  std::function<Vec(const Vec&, const Vec&, const Vec&)> D2f;  ///< (x, u, v) -> D^2 f(x)[u, v]
  double b = 0.0;  ///< lower bound for |f| along the orbit
};

struct ModelCheck {
  double df_error = 0.0;   ///< relative mismatch of Df against central differences of f
  double d2f_error = 0.0;  ///< relative mismatch of D^2 f against central differences of Df
  [[nodiscard]] bool ok() const { return df_error <= 1e-6 && d2f_error <= 1e-5; }
};

[[nodiscard]] ModelCheck check_derivatives(const OdeModel& m, const Vec& x);

enum class Bundle { center, stable, unstable };

struct QualityMeasures {
  double C_U = 1.0;
  double C_Pi = 1.0;
  double lambda_s = 1.0;
  double lambda_u = 1.0;  ///< +infinity when there is no unstable bundle
  [[nodiscard]] double lambda_min() const { return std::min(lambda_s, lambda_u); }
};

struct Projections {
  Mat c, s, u;
};

/// A diagonal block of B: size 1 (rate a) or size 2 (a I + w J, J the quarter rotation).
struct RateBlock {
  Bundle bundle = Bundle::center;
  int size = 1;
  double a = 0.0;
  double w = 0.0;
};

struct Splitting {
  std::function<Vec(double)> orbit;
  std::function<Mat(double)> Q;
  std::function<Mat(double)> Qinv;
  std::vector<RateBlock> blocks;
};

class HyperbolicFrame {
public:
  HyperbolicFrame(OdeModel model, Splitting sp, QualityMeasures q, std::string mode, nlohmann::json descriptor);

  [[nodiscard]] const OdeModel& model() const { return model_; }
  [[nodiscard]] int n() const { return model_.n; }
  [[nodiscard]] int dim(Bundle b) const;
  [[nodiscard]] int offset(Bundle b) const;
  [[nodiscard]] const QualityMeasures& quality() const { return quality_; }
  [[nodiscard]] const std::string& mode() const { return mode_; }
  [[nodiscard]] const nlohmann::json& descriptor() const { return descriptor_; }
  [[nodiscard]] const std::vector<RateBlock>& blocks() const { return sp_.blocks; }

  [[nodiscard]] Vec orbit(double t) const { return sp_.orbit(t); }
  /// x0'(t) = f(x0(t)).
  [[nodiscard]] Vec orbit_deriv(double t) const { return model_.f(sp_.orbit(t)); }
  [[nodiscard]] Mat Q(double t) const { return sp_.Q(t); }
  [[nodiscard]] Mat Qinv(double t) const { return sp_.Qinv(t); }

  [[nodiscard]] Projections proj(double rho) const;
  [[nodiscard]] Mat proj(double rho, Bundle b) const;
  /// Full variational propagator U(t; s).
  [[nodiscard]] Mat prop(double t, double s) const;
  /// U(t; s) Pi^s_s (stable) or U(t; s) Pi^u_s (unstable).
  [[nodiscard]] Mat prop_s(double t, double s) const { return prop_bundle(t, s, Bundle::stable); }
  [[nodiscard]] Mat prop_u(double t, double s) const { return prop_bundle(t, s, Bundle::unstable); }
  [[nodiscard]] Mat prop_bundle(double t, double s, Bundle b) const;

  /// exp(B_b tau) restricted to the bundle's block.
  [[nodiscard]] Mat rate_exp(Bundle b, double tau) const;
  /// y += weight * exp(B_b tau) r for bundle coordinates r, y (length dim(b)).
  void rate_apply_add(Bundle b, double tau, const double* r, double weight, double* y) const;

  void set_quality(const QualityMeasures& q) { quality_ = q; }
  void set_descriptor(nlohmann::json d) { descriptor_ = std::move(d); }

private:
  OdeModel model_;
  Splitting sp_;
  QualityMeasures quality_;
  std::string mode_;
  nlohmann::json descriptor_;
  int ns_ = 0, nu_ = 0;
};

using FramePtr = std::shared_ptr<const HyperbolicFrame>;

// ---------------------------------------------------------------- models

[[nodiscard]] OdeModel lin_saddle_model(double lambda_s, double lambda_u);
/// f = (1 + c(x2^2 + x3^2), -ls x2 + c x2^3, lu x3 + c x2^2 x3); same orbit and splitting as LIN-SADDLE.
[[nodiscard]] OdeModel cubic_saddle_model(double lambda_s, double lambda_u, double c);
/// x' = x - y - x r^2, y' = x + y - y r^2 (unit-circle limit cycle).
[[nodiscard]] OdeModel limit_cycle_model();
/// R f(R^T x) for an orthogonal R.
[[nodiscard]] OdeModel conjugate_model(const OdeModel& m, const Mat& R);

/// y' = (g(x, t), 1) on y = (x, t).
[[nodiscard]] OdeModel augment_nonautonomous(
    int n, const std::function<Vec(const Vec&, double)>& g,
    const std::function<Mat(const Vec&, double)>& Dg_x, const std::function<Vec(const Vec&, double)>& Dg_t,
    std::string id = "augmented");

// ---------------------------------------------------------------- frames

struct AnalyticDescriptor {
  std::string model = "lin-saddle";  ///< lin-saddle, cubic-saddle
  double lambda_s = 1.0;
  double lambda_u = 1.0;
  double c = 0.0;        ///< cubic coefficient
  double angle_xy = 0.0; ///< rotation angles of the conjugating orthogonal matrix
  double angle_yz = 0.0;
};

/// Frame with closed-form orbit, projections and propagators; verified on construction.
[[nodiscard]] FramePtr analytic_frame(const AnalyticDescriptor& d, bool verify = true);

struct FloquetOptions {
  int steps_per_period = 2048;
  int table_order = 7;
};

/// Splitting from the monodromy of a periodic orbit sampled over [0, period].
[[nodiscard]] FramePtr floquet_frame(const OdeModel& model, const GridFunction& periodic_orbit, double period,
                                     FloquetOptions opt = {});

/// The limit-cycle model with its exact orbit sampled at period/samples.
[[nodiscard]] FramePtr limit_cycle_frame(int samples = 512, FloquetOptions opt = {});

/// Frame from a JSON descriptor {model, params, quality?, splitting}.
[[nodiscard]] FramePtr frame_from_json(const nlohmann::json& j);

struct FrameReport {
  double completeness = 0.0;     ///< |Pc + Ps + Pu - I|
  double idempotence = 0.0;      ///< |P P - P|
  double annihilation = 0.0;     ///< |P_a P_b|
  double center_parallel = 0.0;  ///< component of Pc v orthogonal to f(x0), relative
  double cocycle = 0.0;
  double invariance = 0.0;       ///< |(I - P_b(rho)) U_b(rho; v)|
  double center_consistency = 0.0;
  double proj_norm = 0.0;        ///< sup ||P||
  double exp_bound_excess = 0.0; ///< max of |U_b| / (C_U e^{-lambda gap}) - 1
  double lambda_s_hat = 0.0;
  double lambda_u_hat = 0.0;
  double C_U_hat = 1.0;
  bool pass = true;
  std::vector<std::string> failures;
};

/// Checks every frame invariant on the sample grid; tol defaults to 1e-10 (analytic) or 1e-7 (floquet).
[[nodiscard]] FrameReport verify_frame(const HyperbolicFrame& fr, const std::vector<double>& samples,
                                       double tol = -1.0);

struct BundleReport {
  double residual = 0.0;      ///< sup |(I - P_b)(xi' - Df(x0) xi)|
  double full_residual = 0.0; ///< sup |xi' - Df(x0) xi|
  double off_bundle = 0.0;    ///< sup |(I - P_b) xi|
};

/// Propagates xi0 in E^b_0 over [0, span] (stable) or [-span, 0] (unstable).
[[nodiscard]] BundleReport bundle_characterization_test(const HyperbolicFrame& fr, Bundle b, const Vec& xi0,
                                                        double span = 5.0);

/// Sup of |f|, |Df|, the bilinear norm of D^2 f and Lip(D^2 f) over a tube of radius delta.
struct FieldNorms {
  double f0 = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
  double lip2 = 0.0;
  double orbit_speed = 0.0;  ///< sup |x0'|
  double orbit_lip = 0.0;    ///< sup |x0''|
};

[[nodiscard]] FieldNorms estimate_field_norms(const HyperbolicFrame& fr, double delta, double t_lo, double t_hi,
                                              int samples = 400);

}  // namespace hypershadow

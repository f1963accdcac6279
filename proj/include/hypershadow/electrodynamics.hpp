#pragma once
/** @file electrodynamics.hpp
 *  @brief Implicitly defined light-travel delays between point charges and the resulting perturbation.
 */
#include "hypershadow/perturbations.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace hypershadow {

/// A charge path q(t) in R^3 with velocity and acceleration.
struct ChargePath {
  std::function<Vec(double)> q;
  std::function<Vec(double)> dq;
  std::function<Vec(double)> ddq;
};

[[nodiscard]] ChargePath static_path(const Vec& x);
[[nodiscard]] ChargePath uniform_path(const Vec& x0, const Vec& v);
[[nodiscard]] ChargePath circular_path(const Vec& center, double radius, double omega, double phase = 0.0);
/// t -> q(-t).
[[nodiscard]] ChargePath reversed_path(const ChargePath& p);

/// Force on charge i from charge j.
using ForceModel = std::function<Vec(const Vec& qi, const Vec& qj, double ci, double cj)>;

/// k ci cj (qi - qj) / (|qi - qj|^2 + a^2)^{3/2}.
[[nodiscard]] ForceModel softened_coulomb(double a = 0.1, double k = 1.0);

struct ChargeSystem {
  std::vector<ChargePath> paths;
  std::vector<double> masses;
  std::vector<double> charges;
  double eps = 0.0;       ///< 1 / c
  double xi1 = 0.9;       ///< speed margin, |q'| <= xi1 c
  double xi2 = 0.1;       ///< distance margin
  double mixing = 0.5;    ///< weight of the retarded term; 1 - mixing goes to the advanced one
  double h = 1.0;         ///< history radius of the assembled perturbation
  std::string force_model = "softened-coulomb";
  double softening = 0.1;
  [[nodiscard]] int N() const { return static_cast<int>(paths.size()); }
};

enum class DelayMode { retarded, advanced };

struct PointSolve {
  double tau = 0.0;
  int iterations = 0;
  double defect = 0.0;
};

/// tau = eps |qi - qj(s(tau))| by fixed-point iteration, with s(tau) = -tau (retarded) or +tau (advanced).
/// qj_at takes the shift s. Stops at defect <= 1e-13; throws after 200 iterations.
[[nodiscard]] PointSolve solve_delay_point(const Vec& qi, const std::function<Vec(double)>& qj_at, double eps,
                                           DelayMode mode, double tau_start);

struct DelaySolution {
  GridFunction tau;
  int max_iterations = 0;
  double max_defect = 0.0;
};

/// Nodewise solve on [lo, hi], warm-started from the previous node. Throws when eps sup|qj'| >= 1.
[[nodiscard]] DelaySolution solve_delay(const ChargePath& qi, const ChargePath& qj, double eps, DelayMode mode,
                                        double lo, double hi, double delta);

/// Defect |tau - eps |qi(t) - qj(t -+ tau)|| at every node.
[[nodiscard]] double delay_defect(const GridFunction& tau, const ChargePath& qi, const ChargePath& qj, double eps,
                                  DelayMode mode);

/// Closed form for qi = 0, qj = (d + v t, 0, 0): eps (d + v t) / (1 + eps v).
[[nodiscard]] double uniform_motion_delay(double d, double v, double eps, double t);

/// Perturbing the paths by delta in C^0 moves tau by at most eps delta / (1 - eps sup|qj'|).
[[nodiscard]] double delay_lipschitz_constant(double eps, double qdot_sup);

struct DelayField {
  std::vector<std::pair<int, int>> pairs;
  std::vector<GridFunction> tau;    ///< retarded
  std::vector<GridFunction> sigma;  ///< advanced
  int max_iterations = 0;
  double max_defect = 0.0;
};

/// Every ordered pair, pairs solved in parallel.
[[nodiscard]] DelayField solve_delay_field(const ChargeSystem& sys, double lo, double hi, double delta);
/// One CSV per ordered pair (t,tau,sigma) plus a JSON summary.
void write_delay_field(const DelayField& f, const std::string& dir);

struct ExpansionReport {
  std::vector<double> eps;
  std::vector<double> deviation;  ///< max |tau - eps|d| - eps^2 d . qj'|
  double slope = 0.0;             ///< NaN when every deviation vanishes
  bool exact = false;
};

[[nodiscard]] ExpansionReport delay_expansion_check(const ChargePath& qi, const ChargePath& qj,
                                                    const std::vector<double>& eps, double lo, double hi,
                                                    double delta);

struct NonsingularityReport {
  double min_distance = 0.0;
  double max_speed = 0.0;
  bool pass = true;
  std::pair<int, int> closest;
  double closest_time = 0.0;
  int fastest = -1;
  double fastest_time = 0.0;
};

[[nodiscard]] NonsingularityReport nonsingularity_check(const ChargeSystem& sys, double lo, double hi,
                                                        int samples = 2001);

/// On y = (q_1..q_N, v_1..v_N): p = (0, a) with a_i the interaction acceleration evaluated at the
/// retarded and advanced positions (mixed by sys.mixing), delays solved from the segment itself.
[[nodiscard]] PerturbationSpec assemble_charge_perturbation(const ChargeSystem& sys, const ForceModel& force);

/// Free motion with an optional external acceleration: q' = v, v' = a_ext(q).
[[nodiscard]] OdeModel free_motion_model(int N);

/// Stacked (q, q') trajectory of the system paths.
[[nodiscard]] Trajectory stacked_trajectory(const ChargeSystem& sys, double lo, double hi);

[[nodiscard]] ChargeSystem charge_system_from_json(const nlohmann::json& j);
[[nodiscard]] ForceModel force_from_system(const ChargeSystem& sys);

}  // namespace hypershadow

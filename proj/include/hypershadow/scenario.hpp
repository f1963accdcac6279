#pragma once
/** @file scenario.hpp
 *  @brief Scenario files and the run / sweep / verify drivers behind the command line.
 */
#include "hypershadow/electrodynamics.hpp"
#include "hypershadow/invariance.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace hypershadow {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 1;
inline constexpr int diverged = 2;
inline constexpr int infeasible = 3;
}  // namespace exit_code

/// Closed-form stable response of LIN-SADDLE (rates 1, 1) to (0, eps a sin(omega (t - 1)), 0).
struct SineOracle {
  double a = 1.0;
  double omega = 1.0;
  [[nodiscard]] double xs(double eps, double rho) const;
  [[nodiscard]] double dxs(double eps, double rho) const;
};

struct ChargeScenario {
  ChargeSystem system;
  double lo = -5.0, hi = 5.0, delta = 0.05;
};

struct Scenario {
  std::string name;
  nlohmann::json raw;
  FramePtr frame;
  nlohmann::json perturbation;  ///< descriptor, rebuilt per eps
  OperatorConfig cfg;             ///< cfg.eps is the run value
  std::vector<double> eps_list;  ///< sweep values
  std::optional<BallRadii> t_radii, s_radii, u_radii;
  AposterioriInput apost;        ///< E_eta and kappa filled in after the run
  std::optional<SineOracle> oracle;
  std::optional<ChargeScenario> charges;
  unsigned seed = 0;
  [[nodiscard]] PerturbationSpec spec() const;
};

/// Parses and validates; throws Error on anything that should map to exit 1.
[[nodiscard]] Scenario parse_scenario(const nlohmann::json& j);
[[nodiscard]] Scenario load_scenario(const std::string& path);

struct Options {
  std::string out = "out";
  std::optional<int> max_iters;
  bool quiet = false;
};

struct Outcome {
  int code = exit_code::ok;
  std::string message;
  nlohmann::json summary;
};

/// X.csv, xs.csv, xu.csv with sidecars.
void write_state(const CorrectionState& st, const std::string& dir);
[[nodiscard]] CorrectionState read_state(const std::string& dir, const OperatorConfig& cfg);

/// Scenario failures come back as exit codes; only I/O faults throw.
[[nodiscard]] Outcome run(const Scenario& sc, const Options& opt);
[[nodiscard]] Outcome sweep(const Scenario& sc, const Options& opt);
[[nodiscard]] Outcome verify(const Scenario& sc, const std::string& state_dir, const Options& opt);

}  // namespace hypershadow

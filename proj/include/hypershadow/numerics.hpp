#pragma once
/** @file numerics.hpp
 *  @brief Shared small numerical kernels: quadrature rules, stencil weights, threading.
 */
#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypershadow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Lookup outside the range an object was built for.
struct RangeError : Error {
  using Error::Error;
};

namespace numerics {

struct QuadratureRule {
  std::vector<double> nodes;    ///< on [0, 1]
  std::vector<double> weights;  ///< sum to 1
};

/// Gauss-Legendre rule with n points mapped to [0, 1] (Golub-Welsch).
[[nodiscard]] const QuadratureRule& gauss_legendre(int n);

/// Lagrange basis weights at x for integer nodes x0, x0+1, ..., x0+p.
void lagrange_weights(double x, int x0, int p, double* w);

/// Fornberg finite-difference weights: derivative order k at z for the given nodes.
[[nodiscard]] std::vector<double> fd_weights(double z, const std::vector<double>& nodes, int k);

/// Least-squares slope of log(y) against log(x).
[[nodiscard]] double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Coefficient of determination of the log-log fit.
[[nodiscard]] double loglog_r2(const std::vector<double>& x, const std::vector<double>& y);

/// Cap on worker threads; 0 means the OpenMP default.
void set_thread_cap(int threads);
[[nodiscard]] int thread_cap();

/// Runs body(i) for i in [0, n), in parallel when requested and OpenMP is present.
void parallel_for(int n, bool parallel, const std::function<void(int)>& body);

}  // namespace numerics
}  // namespace hypershadow

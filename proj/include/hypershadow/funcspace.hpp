#pragma once
/** @file funcspace.hpp
 *  @brief Sampled functions on a finite window, with C^k, Lipschitz and exponentially weighted norms.
 */
#include "hypershadow/numerics.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace hypershadow {

enum class Extension { constant_hold, linear, zero };

[[nodiscard]] std::string to_string(Extension e);
[[nodiscard]] Extension extension_from_string(const std::string& s);

/// Values of g : [lo, hi] -> R^m on the uniform grid lo + i*delta.
///
/// Inside the window eval uses local Lagrange interpolation of degree interp_order;
/// outside it follows the extension policy. The zero policy is only continuous when
/// the data vanish at the window ends.
class GridFunction {
public:
  GridFunction() = default;
  GridFunction(double lo, double hi, double delta, int dim, int interp_order = 5,
               Extension ext = Extension::constant_hold);

  static GridFunction sample(double lo, double hi, double delta, int dim,
                             const std::function<Vec(double)>& f, int interp_order = 5,
                             Extension ext = Extension::constant_hold);
  static GridFunction sample_scalar(double lo, double hi, double delta,
                                    const std::function<double(double)>& f, int interp_order = 5,
                                    Extension ext = Extension::constant_hold);
  /// Same grid and settings as g, new dimension, zero values.
  static GridFunction like(const GridFunction& g, int dim);

  [[nodiscard]] int size() const { return n_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] double lo() const { return lo_; }
  [[nodiscard]] double hi() const { return lo_ + (n_ - 1) * delta_; }
  [[nodiscard]] double delta() const { return delta_; }
  [[nodiscard]] int interp_order() const { return order_; }
  [[nodiscard]] Extension extension() const { return ext_; }
  [[nodiscard]] double node(int i) const { return lo_ + i * delta_; }
  [[nodiscard]] bool empty() const { return n_ == 0; }

  [[nodiscard]] double at(int i, int c = 0) const { return v_[static_cast<std::size_t>(i) * dim_ + c]; }
  double& at(int i, int c = 0) { return v_[static_cast<std::size_t>(i) * dim_ + c]; }
  [[nodiscard]] Vec value(int i) const;
  void set(int i, const Vec& x);
  [[nodiscard]] const std::vector<double>& data() const { return v_; }

  [[nodiscard]] Vec operator()(double t) const;
  [[nodiscard]] double scalar(double t) const;
  void eval_into(double t, double* out) const;

  void set_extension(Extension e) { ext_ = e; }
  [[nodiscard]] bool same_grid(const GridFunction& o) const;

  GridFunction& operator+=(const GridFunction& o);
  GridFunction& operator-=(const GridFunction& o);
  GridFunction& operator*=(double a);

private:
  void check_same(const GridFunction& o) const;
  void end_slope(bool right, double* out) const;

  double lo_ = 0.0;
  double delta_ = 1.0;
  int n_ = 0;
  int dim_ = 0;
  int order_ = 5;
  Extension ext_ = Extension::constant_hold;
  std::vector<double> v_;
};

[[nodiscard]] GridFunction operator+(GridFunction a, const GridFunction& b);
[[nodiscard]] GridFunction operator-(GridFunction a, const GridFunction& b);
[[nodiscard]] GridFunction operator*(double s, GridFunction a);

[[nodiscard]] inline Vec eval(const GridFunction& g, double t) { return g(t); }

/// k-th derivative sampled on the same grid; centered stencils inside, one-sided near the ends.
[[nodiscard]] GridFunction derivative(const GridFunction& g, int k);

/// max over j <= k of the grid sup of |D^j g|.
[[nodiscard]] double norm_ck(const GridFunction& g, int k);

/// Adjacent-node slope of D^k g; a lower estimate of the Lipschitz constant.
[[nodiscard]] double lipschitz_estimate(const GridFunction& g, int k);

struct WeightParam {
  double eta = 0.5;
};

[[nodiscard]] double norm_razumikhin(const GridFunction& g, WeightParam w);

/// Grid sup of |g| over nodes in [a, b], optionally weighted by exp(-eta |t|).
[[nodiscard]] double sup_on(const GridFunction& g, double a, double b, double eta = 0.0);

struct BallRadii {
  std::vector<double> c;  ///< c_0..c_l, then the Lipschitz radius of D^l

  BallRadii() = default;
  explicit BallRadii(std::vector<double> radii);
  [[nodiscard]] int ell() const { return static_cast<int>(c.size()) - 2; }
  [[nodiscard]] double level(int j) const { return c.at(j); }
  [[nodiscard]] double lip() const { return c.back(); }
  [[nodiscard]] bool empty() const { return c.empty(); }
};

struct BallReport {
  bool inside = true;
  std::vector<double> measured;  ///< per level, Lipschitz estimate last
  std::vector<double> slack;     ///< radius minus measured
  int violated_level = -1;       ///< first failing level, ell+1 for the Lipschitz level
};

[[nodiscard]] BallReport ball_membership(const GridFunction& g, const GridFunction& center,
                                         const BallRadii& radii);

[[nodiscard]] nlohmann::json sidecar(const GridFunction& g);
void write_csv(const GridFunction& g, const std::string& csv_path);
/// Writes csv_path and csv_path + ".json".
void write_with_sidecar(const GridFunction& g, const std::string& csv_path);
[[nodiscard]] GridFunction read_with_sidecar(const std::string& csv_path);

/// Shortest round-trip decimal representation used by every CSV writer.
[[nodiscard]] std::string format_number(double x);

}  // namespace hypershadow

#include "hypershadow/funcspace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hypershadow {

std::string to_string(Extension e) {
  switch (e) {
    case Extension::constant_hold: return "constant-hold";
    case Extension::linear: return "linear";
    case Extension::zero: return "zero";
  }
  return "constant-hold";
}

Extension extension_from_string(const std::string& s) {
  if (s == "constant-hold") return Extension::constant_hold;
  if (s == "linear") return Extension::linear;
  if (s == "zero") return Extension::zero;
  throw Error("unknown extension policy: " + s);
}

GridFunction::GridFunction(double lo, double hi, double delta, int dim, int interp_order, Extension ext)
    : lo_(lo), delta_(delta), dim_(dim), order_(interp_order), ext_(ext) {
  if (!(delta > 0)) throw Error("GridFunction: spacing must be positive");
  if (!(hi > lo)) throw Error("GridFunction: empty window");
  if (dim < 1) throw Error("GridFunction: dimension must be positive");
  if (interp_order < 3) throw Error("GridFunction: interp_order must be at least 3");
  n_ = static_cast<int>(std::floor((hi - lo) / delta + 1e-9)) + 1;
  if (n_ < interp_order + 2) throw Error("GridFunction: window too short for the interpolation order");
  v_.assign(static_cast<std::size_t>(n_) * dim_, 0.0);
}

GridFunction GridFunction::sample(double lo, double hi, double delta, int dim,
                                  const std::function<Vec(double)>& f, int interp_order, Extension ext) {
  GridFunction g(lo, hi, delta, dim, interp_order, ext);
  for (int i = 0; i < g.n_; ++i) g.set(i, f(g.node(i)));
  return g;
}

GridFunction GridFunction::sample_scalar(double lo, double hi, double delta,
                                         const std::function<double(double)>& f, int interp_order,
                                         Extension ext) {
  GridFunction g(lo, hi, delta, 1, interp_order, ext);
  for (int i = 0; i < g.n_; ++i) g.at(i) = f(g.node(i));
  return g;
}

GridFunction GridFunction::like(const GridFunction& g, int dim) {
  GridFunction out = g;
  out.dim_ = dim;
  out.v_.assign(static_cast<std::size_t>(g.n_) * dim, 0.0);
  return out;
}

Vec GridFunction::value(int i) const {
  Vec x(dim_);
  for (int c = 0; c < dim_; ++c) x(c) = at(i, c);
  return x;
}

void GridFunction::set(int i, const Vec& x) {
  if (x.size() != dim_) throw Error("GridFunction::set: dimension mismatch");
  for (int c = 0; c < dim_; ++c) at(i, c) = x(c);
}

bool GridFunction::same_grid(const GridFunction& o) const {
  return n_ == o.n_ && std::abs(lo_ - o.lo_) <= 1e-12 * std::max(1.0, std::abs(lo_)) &&
         std::abs(delta_ - o.delta_) <= 1e-14 * delta_;
}

void GridFunction::check_same(const GridFunction& o) const {
  if (!same_grid(o) || dim_ != o.dim_) throw Error("GridFunction: grid or dimension mismatch");
}

GridFunction& GridFunction::operator+=(const GridFunction& o) {
  check_same(o);
  for (std::size_t k = 0; k < v_.size(); ++k) v_[k] += o.v_[k];
  return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& o) {
  check_same(o);
  for (std::size_t k = 0; k < v_.size(); ++k) v_[k] -= o.v_[k];
  return *this;
}

GridFunction& GridFunction::operator*=(double a) {
  for (double& x : v_) x *= a;
  return *this;
}

GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
GridFunction operator*(double s, GridFunction a) { return a *= s; }

namespace {

int stencil_points(int order) { return 2 * ((order + 1) / 2) + 1; }

// Derivative weights (already divided by delta^k) at node `i` of an n-node grid.
std::vector<double> node_fd_weights(int i, int n, int k, int order, double delta, int& start) {
  int m = std::min(stencil_points(order), n);
  start = std::clamp(i - m / 2, 0, n - m);
  std::vector<double> x(m);
  for (int j = 0; j < m; ++j) x[j] = start + j;
  auto w = numerics::fd_weights(static_cast<double>(i), x, k);
  double scale = std::pow(delta, -k);
  for (double& v : w) v *= scale;
  return w;
}

}  // namespace

void GridFunction::end_slope(bool right, double* out) const {
  int i = right ? n_ - 1 : 0;
  int start = 0;
  auto w = node_fd_weights(i, n_, 1, order_, delta_, start);
  for (int c = 0; c < dim_; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * at(start + static_cast<int>(j), c);
    out[c] = s;
  }
}

void GridFunction::eval_into(double t, double* out) const {
  const double x = (t - lo_) / delta_;
  if (x < 0.0 || x > n_ - 1) {
    const bool right = x > n_ - 1;
    const int i = right ? n_ - 1 : 0;
    switch (ext_) {
      case Extension::zero:
        for (int c = 0; c < dim_; ++c) out[c] = 0.0;
        return;
      case Extension::constant_hold:
        for (int c = 0; c < dim_; ++c) out[c] = at(i, c);
        return;
      case Extension::linear: {
        end_slope(right, out);
        double dt = t - node(i);
        for (int c = 0; c < dim_; ++c) out[c] = at(i, c) + dt * out[c];
        return;
      }
    }
  }
  const double r = std::round(x);
  if (std::abs(x - r) < 1e-11) {
    int i = static_cast<int>(r);
    for (int c = 0; c < dim_; ++c) out[c] = at(i, c);
    return;
  }
  const int p = order_;
  int start = (p % 2 == 1) ? static_cast<int>(std::floor(x)) - (p - 1) / 2 : static_cast<int>(r) - p / 2;
  start = std::clamp(start, 0, n_ - 1 - p);
  double w[16];
  numerics::lagrange_weights(x, start, p, w);
  for (int c = 0; c < dim_; ++c) {
    double s = 0.0;
    for (int k = 0; k <= p; ++k) s += w[k] * at(start + k, c);
    out[c] = s;
  }
}

Vec GridFunction::operator()(double t) const {
  Vec out(dim_);
  eval_into(t, out.data());
  return out;
}

double GridFunction::scalar(double t) const {
  double buf[64];
  if (dim_ > 64) return (*this)(t)(0);
  eval_into(t, buf);
  return buf[0];
}

GridFunction derivative(const GridFunction& g, int k) {
  if (k < 0) throw Error("derivative: order must be nonnegative");
  if (k == 0) return g;
  if (k > g.interp_order() - 1) throw Error("derivative: order exceeds interp_order - 1");
  GridFunction out = g;
  const int n = g.size();
  for (int i = 0; i < n; ++i) {
    int start = 0;
    auto w = node_fd_weights(i, n, k, g.interp_order(), g.delta(), start);
    for (int c = 0; c < g.dim(); ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * g.at(start + static_cast<int>(j), c);
      out.at(i, c) = s;
    }
  }
  return out;
}

namespace {
double node_norm(const GridFunction& g, int i) {
  double s = 0.0;
  for (int c = 0; c < g.dim(); ++c) s += g.at(i, c) * g.at(i, c);
  return std::sqrt(s);
}
}  // namespace

double sup_on(const GridFunction& g, double a, double b, double eta) {
  double m = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    double t = g.node(i);
    if (t < a - 1e-12 || t > b + 1e-12) continue;
    double v = node_norm(g, i);
    if (eta != 0.0) v *= std::exp(-eta * std::abs(t));
    m = std::max(m, v);
  }
  return m;
}

double norm_ck(const GridFunction& g, int k) {
  double m = 0.0;
  for (int j = 0; j <= k; ++j) {
    GridFunction d = derivative(g, j);
    m = std::max(m, sup_on(d, d.lo(), d.hi()));
  }
  return m;
}

double lipschitz_estimate(const GridFunction& g, int k) {
  GridFunction d = derivative(g, k);
  double m = 0.0;
  for (int i = 0; i + 1 < d.size(); ++i) {
    double s = 0.0;
    for (int c = 0; c < d.dim(); ++c) {
      double e = d.at(i + 1, c) - d.at(i, c);
      s += e * e;
    }
    m = std::max(m, std::sqrt(s) / d.delta());
  }
  return m;
}

double norm_razumikhin(const GridFunction& g, WeightParam w) {
  if (!(w.eta > 0)) throw Error("norm_razumikhin: eta must be positive");
  return sup_on(g, g.lo(), g.hi(), w.eta);
}

BallRadii::BallRadii(std::vector<double> radii) : c(std::move(radii)) {
  if (c.size() < 2) throw Error("BallRadii: need at least (c0, c_lip)");
  for (double x : c)
    if (!(x >= 0)) throw Error("BallRadii: radii must be nonnegative");
}

BallReport ball_membership(const GridFunction& g, const GridFunction& center, const BallRadii& radii) {
  if (g.dim() != center.dim()) throw Error("ball_membership: dimension mismatch");
  if (!g.same_grid(center)) throw Error("ball_membership: windows differ");
  GridFunction diff = g - center;
  BallReport rep;
  const int ell = radii.ell();
  for (int j = 0; j <= ell; ++j) {
    GridFunction d = derivative(diff, j);
    rep.measured.push_back(sup_on(d, d.lo(), d.hi()));
  }
  rep.measured.push_back(lipschitz_estimate(diff, ell));
  for (int j = 0; j <= ell + 1; ++j) {
    double s = radii.c[j] - rep.measured[j];
    rep.slack.push_back(s);
    if (s < 0 && rep.inside) {
      rep.inside = false;
      rep.violated_level = j;
    }
  }
  return rep;
}

std::string format_number(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

nlohmann::json sidecar(const GridFunction& g) {
  return {{"window", {g.lo(), g.hi()}},
          {"delta", g.delta()},
          {"interp_order", g.interp_order()},
          {"extension", to_string(g.extension())},
          {"dim", g.dim()}};
}

void write_csv(const GridFunction& g, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  os << "t";
  for (int c = 0; c < g.dim(); ++c) os << ",v" << c;
  os << "\n";
  for (int i = 0; i < g.size(); ++i) {
    os << format_number(g.node(i));
    for (int c = 0; c < g.dim(); ++c) os << "," << format_number(g.at(i, c));
    os << "\n";
  }
}

void write_with_sidecar(const GridFunction& g, const std::string& csv_path) {
  write_csv(g, csv_path);
  std::ofstream js(csv_path + ".json", std::ios::binary);
  if (!js) throw Error("cannot write " + csv_path + ".json");
  js << sidecar(g).dump(2) << "\n";
}

GridFunction read_with_sidecar(const std::string& csv_path) {
  std::ifstream js(csv_path + ".json");
  if (!js) throw Error("missing sidecar for " + csv_path);
  nlohmann::json meta;
  try {
    js >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed sidecar for " + csv_path + ": " + e.what());
  }
  std::ifstream is(csv_path);
  if (!is) throw Error("cannot read " + csv_path);
  std::string line;
  std::getline(is, line);
  int dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
  if (line.rfind("t,", 0) != 0 || dim < 1) throw Error("bad CSV header in " + csv_path);
  int meta_dim = meta.value("dim", dim);
  if (meta_dim != dim) throw Error("sidecar dimension disagrees with CSV header");
  GridFunction g(meta.at("window").at(0).get<double>(), meta.at("window").at(1).get<double>(),
                 meta.at("delta").get<double>(), dim, meta.at("interp_order").get<int>(),
                 extension_from_string(meta.at("extension").get<std::string>()));
  int i = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (i >= g.size()) throw Error("too many rows in " + csv_path);
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    double t = std::stod(cell);
    if (std::abs(t - g.node(i)) > 1e-9 * std::max(1.0, std::abs(t))) throw Error("node mismatch in " + csv_path);
    for (int c = 0; c < dim; ++c) {
      if (!std::getline(ss, cell, ',')) throw Error("short row in " + csv_path);
      g.at(i, c) = std::stod(cell);
    }
    ++i;
  }
  if (i != g.size()) throw Error("row count mismatch in " + csv_path);
  return g;
}

}  // namespace hypershadow

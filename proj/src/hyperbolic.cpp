#include "hypershadow/hyperbolic.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>

namespace hypershadow {

namespace {

double spectral_norm(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()(0);
}

double max_abs(const Mat& A) { return A.size() == 0 ? 0.0 : A.cwiseAbs().maxCoeff(); }

}  // namespace

ModelCheck check_derivatives(const OdeModel& m, const Vec& x) {
  ModelCheck r;
  const double h = 1e-6;
  Mat J = m.Df(x);
  Mat Jfd(m.n, m.n);
  for (int j = 0; j < m.n; ++j) {
    Vec e = Vec::Zero(m.n);
    e(j) = h;
    Jfd.col(j) = (m.f(x + e) - m.f(x - e)) / (2 * h);
  }
  r.df_error = max_abs(J - Jfd) / std::max(1.0, max_abs(J));
  const double h2 = 1e-5;
  double scale = 1.0, err = 0.0;
  for (int j = 0; j < m.n; ++j) {
    Vec e = Vec::Zero(m.n);
    e(j) = h2;
    Mat dJ = (m.Df(x + e) - m.Df(x - e)) / (2 * h2);
    for (int k = 0; k < m.n; ++k) {
      Vec ek = Vec::Unit(m.n, k), ej = Vec::Unit(m.n, j);
      Vec a = m.D2f(x, ek, ej);
      Vec b = dJ.col(k);
      err = std::max(err, (a - b).cwiseAbs().maxCoeff());
      scale = std::max(scale, a.cwiseAbs().maxCoeff());
    }
  }
  r.d2f_error = err / scale;
  return r;
}

// ---------------------------------------------------------------- frame

HyperbolicFrame::HyperbolicFrame(OdeModel model, Splitting sp, QualityMeasures q, std::string mode,
                                 nlohmann::json descriptor)
    : model_(std::move(model)), sp_(std::move(sp)), quality_(q), mode_(std::move(mode)),
      descriptor_(std::move(descriptor)) {
  if (sp_.blocks.empty() || sp_.blocks[0].bundle != Bundle::center || sp_.blocks[0].size != 1)
    throw Error("HyperbolicFrame: first block must be the one-dimensional center");
  int total = 0;
  Bundle last = Bundle::center;
  for (std::size_t i = 0; i < sp_.blocks.size(); ++i) {
    const auto& b = sp_.blocks[i];
    if (b.size != 1 && b.size != 2) throw Error("HyperbolicFrame: blocks must have size 1 or 2");
    if (i > 0 && b.bundle == Bundle::center) throw Error("HyperbolicFrame: center bundle must be one-dimensional");
    if (static_cast<int>(b.bundle) < static_cast<int>(last)) throw Error("HyperbolicFrame: blocks out of order");
    last = b.bundle;
    if (b.bundle == Bundle::stable) ns_ += b.size;
    if (b.bundle == Bundle::unstable) nu_ += b.size;
    total += b.size;
  }
  if (total != model_.n) throw Error("HyperbolicFrame: block sizes do not add up to the dimension");
}

int HyperbolicFrame::dim(Bundle b) const {
  switch (b) {
    case Bundle::center: return 1;
    case Bundle::stable: return ns_;
    case Bundle::unstable: return nu_;
  }
  return 0;
}

int HyperbolicFrame::offset(Bundle b) const {
  switch (b) {
    case Bundle::center: return 0;
    case Bundle::stable: return 1;
    case Bundle::unstable: return 1 + ns_;
  }
  return 0;
}

Mat HyperbolicFrame::proj(double rho, Bundle b) const {
  int k = dim(b), o = offset(b);
  if (k == 0) return Mat::Zero(n(), n());
  Mat Q = sp_.Q(rho), Qi = sp_.Qinv(rho);
  return Q.middleCols(o, k) * Qi.middleRows(o, k);
}

Projections HyperbolicFrame::proj(double rho) const {
  Mat Q = sp_.Q(rho), Qi = sp_.Qinv(rho);
  Projections p;
  auto one = [&](Bundle b) -> Mat {
    int k = dim(b), o = offset(b);
    if (k == 0) return Mat::Zero(n(), n());
    return Q.middleCols(o, k) * Qi.middleRows(o, k);
  };
  p.c = one(Bundle::center);
  p.s = one(Bundle::stable);
  p.u = one(Bundle::unstable);
  return p;
}

Mat HyperbolicFrame::rate_exp(Bundle b, double tau) const {
  int k = dim(b);
  Mat E = Mat::Zero(k, k);
  int pos = 0;
  for (const auto& blk : sp_.blocks) {
    if (blk.bundle != b) continue;
    double g = std::exp(blk.a * tau);
    if (blk.size == 1) {
      E(pos, pos) = g;
    } else {
      double c = std::cos(blk.w * tau), s = std::sin(blk.w * tau);
      E(pos, pos) = g * c;
      E(pos, pos + 1) = -g * s;
      E(pos + 1, pos) = g * s;
      E(pos + 1, pos + 1) = g * c;
    }
    pos += blk.size;
  }
  return E;
}

void HyperbolicFrame::rate_apply_add(Bundle b, double tau, const double* r, double weight, double* y) const {
  int pos = 0;
  for (const auto& blk : sp_.blocks) {
    if (blk.bundle != b) continue;
    double g = weight * std::exp(blk.a * tau);
    if (blk.size == 1) {
      y[pos] += g * r[pos];
    } else {
      double c = std::cos(blk.w * tau), s = std::sin(blk.w * tau);
      y[pos] += g * (c * r[pos] - s * r[pos + 1]);
      y[pos + 1] += g * (s * r[pos] + c * r[pos + 1]);
    }
    pos += blk.size;
  }
}

Mat HyperbolicFrame::prop(double t, double s) const {
  Mat E = Mat::Zero(n(), n());
  E(0, 0) = 1.0;
  if (ns_ > 0) E.block(1, 1, ns_, ns_) = rate_exp(Bundle::stable, t - s);
  if (nu_ > 0) E.block(1 + ns_, 1 + ns_, nu_, nu_) = rate_exp(Bundle::unstable, t - s);
  return sp_.Q(t) * E * sp_.Qinv(s);
}

Mat HyperbolicFrame::prop_bundle(double t, double s, Bundle b) const {
  int k = dim(b), o = offset(b);
  if (k == 0) return Mat::Zero(n(), n());
  return sp_.Q(t).middleCols(o, k) * rate_exp(b, t - s) * sp_.Qinv(s).middleRows(o, k);
}

// ---------------------------------------------------------------- models

OdeModel lin_saddle_model(double ls, double lu) {
  OdeModel m;
  m.id = "lin-saddle";
  m.n = 3;
  m.f = [ls, lu](const Vec& x) {
    Vec y(3);
    y << 1.0, -ls * x(1), lu * x(2);
    return y;
  };
  m.Df = [ls, lu](const Vec&) {
    Mat J = Mat::Zero(3, 3);
    J(1, 1) = -ls;
    J(2, 2) = lu;
    return J;
  };
  m.D2f = [](const Vec&, const Vec&, const Vec&) { return Vec(Vec::Zero(3)); };
  m.b = 1.0;
  return m;
}

OdeModel cubic_saddle_model(double ls, double lu, double c) {
  OdeModel m;
  m.id = "cubic-saddle";
  m.n = 3;
  m.f = [=](const Vec& x) {
    Vec y(3);
    y << 1.0 + c * (x(1) * x(1) + x(2) * x(2)), -ls * x(1) + c * x(1) * x(1) * x(1), lu * x(2) + c * x(1) * x(1) * x(2);
    return y;
  };
  m.Df = [=](const Vec& x) {
    Mat J = Mat::Zero(3, 3);
    J(0, 1) = 2 * c * x(1);
    J(0, 2) = 2 * c * x(2);
    J(1, 1) = -ls + 3 * c * x(1) * x(1);
    J(2, 1) = 2 * c * x(1) * x(2);
    J(2, 2) = lu + c * x(1) * x(1);
    return J;
  };
  m.D2f = [=](const Vec& x, const Vec& u, const Vec& v) {
    Vec y(3);
    y(0) = 2 * c * (u(1) * v(1) + u(2) * v(2));
    y(1) = 6 * c * x(1) * u(1) * v(1);
    y(2) = 2 * c * x(2) * u(1) * v(1) + 2 * c * x(1) * (u(1) * v(2) + u(2) * v(1));
    return y;
  };
  m.b = 1.0;
  return m;
}

OdeModel limit_cycle_model() {
  OdeModel m;
  m.id = "limit-cycle";
  m.n = 2;
  m.f = [](const Vec& z) {
    double x = z(0), y = z(1), r2 = x * x + y * y;
    Vec out(2);
    out << x - y - x * r2, x + y - y * r2;
    return out;
  };
  m.Df = [](const Vec& z) {
    double x = z(0), y = z(1);
    Mat J(2, 2);
    J << 1 - 3 * x * x - y * y, -1 - 2 * x * y, 1 - 2 * x * y, 1 - x * x - 3 * y * y;
    return J;
  };
  m.D2f = [](const Vec& z, const Vec& u, const Vec& v) {
    double x = z(0), y = z(1);
    Mat H1(2, 2), H2(2, 2);
    H1 << -6 * x, -2 * y, -2 * y, -2 * x;
    H2 << -2 * y, -2 * x, -2 * x, -6 * y;
    Vec out(2);
    out << u.dot(H1 * v), u.dot(H2 * v);
    return out;
  };
  m.b = 1.0;
  return m;
}

OdeModel conjugate_model(const OdeModel& m, const Mat& R) {
  OdeModel c = m;
  c.id = "rotated-" + m.id;
  c.f = [m, R](const Vec& x) { return Vec(R * m.f(R.transpose() * x)); };
  c.Df = [m, R](const Vec& x) { return Mat(R * m.Df(R.transpose() * x) * R.transpose()); };
  c.D2f = [m, R](const Vec& x, const Vec& u, const Vec& v) {
    return Vec(R * m.D2f(R.transpose() * x, R.transpose() * u, R.transpose() * v));
  };
  return c;
}

OdeModel augment_nonautonomous(int n, const std::function<Vec(const Vec&, double)>& g,
                               const std::function<Mat(const Vec&, double)>& Dg_x,
                               const std::function<Vec(const Vec&, double)>& Dg_t, std::string id) {
  OdeModel m;
  m.id = std::move(id);
  m.n = n + 1;
  m.f = [n, g](const Vec& y) {
    Vec out(n + 1);
    out.head(n) = g(y.head(n), y(n));
    out(n) = 1.0;
    return out;
  };
  m.Df = [n, Dg_x, Dg_t](const Vec& y) {
    Mat J = Mat::Zero(n + 1, n + 1);
    J.topLeftCorner(n, n) = Dg_x(y.head(n), y(n));
    J.col(n).head(n) = Dg_t(y.head(n), y(n));
    return J;
  };
  // Second derivatives by central differences of the Jacobian.
  auto Df = m.Df;
  m.D2f = [Df](const Vec& y, const Vec& u, const Vec& v) {
    const double h = 1e-5;
    return Vec((Df(y + h * v) - Df(y - h * v)) * u / (2 * h));
  };
  m.b = 1.0;
  return m;
}

// ---------------------------------------------------------------- analytic frames

namespace {

Mat rotation(int n, double axy, double ayz) {
  Mat A = Mat::Identity(n, n), B = Mat::Identity(n, n);
  if (n >= 2) {
    A(0, 0) = std::cos(axy); A(0, 1) = -std::sin(axy);
    A(1, 0) = std::sin(axy); A(1, 1) = std::cos(axy);
  }
  if (n >= 3) {
    B(1, 1) = std::cos(ayz); B(1, 2) = -std::sin(ayz);
    B(2, 1) = std::sin(ayz); B(2, 2) = std::cos(ayz);
  }
  return A * B;
}

}  // namespace

FramePtr analytic_frame(const AnalyticDescriptor& d, bool verify) {
  if (!(d.lambda_s > 0 && d.lambda_u > 0)) throw Error("analytic_frame: rates must be positive");
  OdeModel base;
  if (d.model == "lin-saddle") base = lin_saddle_model(d.lambda_s, d.lambda_u);
  else if (d.model == "cubic-saddle") base = cubic_saddle_model(d.lambda_s, d.lambda_u, d.c);
  else throw Error("analytic_frame: unknown model " + d.model);

  const bool rotated = d.angle_xy != 0.0 || d.angle_yz != 0.0;
  Mat R = rotation(3, d.angle_xy, d.angle_yz);
  OdeModel model = rotated ? conjugate_model(base, R) : base;

  Splitting sp;
  sp.orbit = [R](double t) { return Vec(R.col(0) * t); };
  sp.Q = [R](double) { return R; };
  Mat Rt = R.transpose();
  sp.Qinv = [Rt](double) { return Rt; };
  sp.blocks = {{Bundle::center, 1, 0.0, 0.0},
               {Bundle::stable, 1, -d.lambda_s, 0.0},
               {Bundle::unstable, 1, d.lambda_u, 0.0}};
  QualityMeasures q{1.0, 1.0, d.lambda_s, d.lambda_u};
  nlohmann::json desc = {{"model", d.model},
                         {"params", {{"lambda_s", d.lambda_s}, {"lambda_u", d.lambda_u}, {"c", d.c},
                                     {"angle_xy", d.angle_xy}, {"angle_yz", d.angle_yz}}},
                         {"splitting", "analytic"},
                         {"quality", {{"C_U", 1.0}, {"C_Pi", 1.0}, {"lambda_s", d.lambda_s}, {"lambda_u", d.lambda_u}}}};
  auto fr = std::make_shared<HyperbolicFrame>(std::move(model), std::move(sp), q, "analytic", desc);
  if (verify) {
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(-5.0 + 0.5 * i);
    auto rep = verify_frame(*fr, grid);
    if (!rep.pass) throw Error("analytic_frame: descriptor fails verification: " + rep.failures.front());
  }
  return fr;
}

// ---------------------------------------------------------------- Floquet frames

namespace {

/// Matrix samples on [0, P) with Q(t + P) = Q(t) diag(sign) (columns) or diag(sign) Q(t) (rows).
class PeriodicTable {
public:
  PeriodicTable(double period, std::vector<Mat> samples, std::vector<double> sign, bool columns, int order)
      : P_(period), m_(std::move(samples)), sign_(std::move(sign)), columns_(columns), order_(order) {
    N_ = static_cast<int>(m_.size());
  }

  Mat operator()(double t) const {
    const double h = P_ / N_;
    double x = t / h;
    double r = std::round(x);
    if (std::abs(x - r) < 1e-11) return fetch(static_cast<long>(r));
    long start = static_cast<long>(std::floor(x)) - (order_ - 1) / 2;
    double w[16];
    Mat out = Mat::Zero(m_[0].rows(), m_[0].cols());
    long base = start;
    numerics::lagrange_weights(x - static_cast<double>(base), 0, order_, w);
    for (int k = 0; k <= order_; ++k) out += w[k] * fetch(base + k);
    return out;
  }

private:
  Mat fetch(long k) const {
    long q = k >= 0 ? k / N_ : -((-k + N_ - 1) / N_);
    long idx = k - q * N_;
    Mat v = m_[static_cast<std::size_t>(idx)];
    if (q % 2 != 0) {
      for (std::size_t j = 0; j < sign_.size(); ++j) {
        if (sign_[j] > 0) continue;
        if (columns_) v.col(static_cast<int>(j)) *= -1.0;
        else v.row(static_cast<int>(j)) *= -1.0;
      }
    }
    return v;
  }

  double P_;
  std::vector<Mat> m_;
  std::vector<double> sign_;
  bool columns_;
  int order_;
  int N_ = 0;
};

}  // namespace

FramePtr floquet_frame(const OdeModel& model, const GridFunction& orb, double period, FloquetOptions opt) {
  if (orb.dim() != model.n) throw Error("floquet_frame: orbit dimension mismatch");
  if (std::abs(orb.lo()) > 1e-12 || std::abs(orb.hi() - period) > 1e-9 * std::max(1.0, period))
    throw Error("floquet_frame: orbit samples must cover exactly [0, period]");
  const int M = orb.size() - 1;
  if ((orb.value(M) - orb.value(0)).norm() > 1e-8) throw Error("floquet_frame: orbit does not close over one period");
  const int n = model.n;

  std::vector<Mat> osamp;
  for (int k = 0; k < M; ++k) osamp.push_back(Mat(orb.value(k)));
  auto orbit_table = std::make_shared<PeriodicTable>(period, osamp, std::vector<double>(1, 1.0), true,
                                                     std::min(orb.interp_order(), 9));
  auto orbit = [orbit_table](double t) { return Vec((*orbit_table)(t).col(0)); };

  // Fundamental matrix over one period.
  const int N = opt.steps_per_period;
  const double h = period / N;
  std::vector<Mat> Phi(N + 1);
  Phi[0] = Mat::Identity(n, n);
  for (int k = 0; k < N; ++k) {
    double t = k * h;
    Mat A0 = model.Df(orbit(t)), Ah = model.Df(orbit(t + 0.5 * h)), A1 = model.Df(orbit(t + h));
    const Mat& Y = Phi[k];
    Mat k1 = A0 * Y;
    Mat k2 = Ah * (Y + 0.5 * h * k1);
    Mat k3 = Ah * (Y + 0.5 * h * k2);
    Mat k4 = A1 * (Y + h * k3);
    Phi[k + 1] = Y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  const Mat& Mono = Phi[N];
  Eigen::EigenSolver<Mat> es(Mono);
  auto mu = es.eigenvalues();
  auto V = es.eigenvectors();

  int center = -1;
  for (int i = 0; i < n; ++i) {
    if (std::abs(mu(i) - std::complex<double>(1.0, 0.0)) <= 1e-6) {
      if (center >= 0) throw Error("floquet_frame: eigenvalue 1 has multiplicity > 1");
      center = i;
    }
  }
  if (center < 0) throw Error("floquet_frame: no multiplier within 1e-6 of 1");

  struct Dir {
    Bundle b;
    int size;
    double a, w, sign;
    Vec v1, v2;
  };
  std::vector<Dir> dirs;
  for (int i = 0; i < n; ++i) {
    if (i == center) continue;
    double mod = std::abs(mu(i));
    if (std::abs(mod - 1.0) < 1e-3) throw Error("floquet_frame: non-hyperbolic monodromy");
    Bundle b = mod < 1.0 ? Bundle::stable : Bundle::unstable;
    if (std::abs(mu(i).imag()) <= 1e-12 * std::max(1.0, mod)) {
      double re = mu(i).real();
      dirs.push_back({b, 1, std::log(std::abs(re)) / period, 0.0, re < 0 ? -1.0 : 1.0, V.col(i).real(), Vec()});
    } else if (mu(i).imag() > 0) {
      double theta = std::arg(mu(i));
      dirs.push_back({b, 2, std::log(mod) / period, -theta / period, 1.0, V.col(i).real(), V.col(i).imag()});
    }
  }
  std::stable_sort(dirs.begin(), dirs.end(), [](const Dir& x, const Dir& y) {
    return static_cast<int>(x.b) < static_cast<int>(y.b);
  });

  Splitting sp;
  sp.blocks.push_back({Bundle::center, 1, 0.0, 0.0});
  std::vector<double> sign(1, 1.0);
  for (const auto& d : dirs) {
    sp.blocks.push_back({d.b, d.size, d.a, d.w});
    for (int k = 0; k < d.size; ++k) sign.push_back(d.sign);
  }

  std::vector<Mat> Qs(N), Qis(N);
  for (int k = 0; k < N; ++k) {
    double t = k * h;
    Mat Q(n, n);
    Q.col(0) = model.f(orbit(t));
    int col = 1;
    for (const auto& d : dirs) {
      double g = std::exp(-d.a * t);
      if (d.size == 1) {
        Q.col(col) = g * (Phi[k] * d.v1);
      } else {
        // [v1 v2] exp(-B t) with B = a I + w J.
        double c = std::cos(d.w * t), s = std::sin(d.w * t);
        Vec p1 = Phi[k] * d.v1, p2 = Phi[k] * d.v2;
        Q.col(col) = g * (c * p1 - s * p2);
        Q.col(col + 1) = g * (s * p1 + c * p2);
      }
      col += d.size;
    }
    Qs[k] = Q;
    Qis[k] = Q.inverse();
  }
  auto qt = std::make_shared<PeriodicTable>(period, Qs, sign, true, opt.table_order);
  auto qit = std::make_shared<PeriodicTable>(period, Qis, sign, false, opt.table_order);
  sp.orbit = orbit;
  sp.Q = [qt](double t) { return (*qt)(t); };
  sp.Qinv = [qit](double t) { return (*qit)(t); };

  QualityMeasures q;
  q.lambda_s = std::numeric_limits<double>::infinity();
  q.lambda_u = std::numeric_limits<double>::infinity();
  for (const auto& d : dirs) {
    if (d.b == Bundle::stable) q.lambda_s = std::min(q.lambda_s, -d.a);
    else q.lambda_u = std::min(q.lambda_u, d.a);
  }
  nlohmann::json desc = {{"model", model.id},
                         {"params", {{"period", period}, {"samples", M}, {"steps_per_period", N}}},
                         {"splitting", "floquet"}};
  auto fr = std::make_shared<HyperbolicFrame>(model, std::move(sp), q, "floquet", desc);

  // Quality by sampling the exponential bounds over one period of base points.
  double CPi = 1.0, CU = 1.0;
  for (int k = 0; k < 32; ++k) {
    double t = period * k / 32.0;
    auto P = fr->proj(t);
    CPi = std::max({CPi, spectral_norm(P.c), spectral_norm(P.s), spectral_norm(P.u)});
    for (int g = 0; g <= 32; ++g) {
      double gap = 2.0 * period * g / 32.0;
      if (fr->dim(Bundle::stable) > 0)
        CU = std::max(CU, spectral_norm(fr->prop_s(t + gap, t)) * std::exp(q.lambda_s * gap));
      if (fr->dim(Bundle::unstable) > 0)
        CU = std::max(CU, spectral_norm(fr->prop_u(t - gap, t)) * std::exp(q.lambda_u * gap));
    }
  }
  q.C_Pi = CPi;
  q.C_U = CU;
  fr->set_quality(q);
  nlohmann::json d2 = fr->descriptor();
  d2["quality"] = {{"C_U", q.C_U}, {"C_Pi", q.C_Pi}, {"lambda_s", q.lambda_s},
                   {"lambda_u", std::isfinite(q.lambda_u) ? nlohmann::json(q.lambda_u) : nlohmann::json(nullptr)}};
  fr->set_descriptor(std::move(d2));
  return fr;
}

FramePtr limit_cycle_frame(int samples, FloquetOptions opt) {
  const double P = 2.0 * std::numbers::pi;
  auto orb = GridFunction::sample(0.0, P, P / samples, 2, [](double t) {
    Vec v(2);
    v << std::cos(t), std::sin(t);
    return v;
  }, 7);
  return floquet_frame(limit_cycle_model(), orb, P, opt);
}

FramePtr frame_from_json(const nlohmann::json& j) {
  const std::string model = j.value("model", "lin-saddle");
  const nlohmann::json params = j.value("params", nlohmann::json::object());
  const std::string splitting = j.value("splitting", model == "limit-cycle" ? "floquet" : "analytic");
  FramePtr fr;
  if (model == "limit-cycle") {
    if (splitting != "floquet") throw Error("frame_from_json: limit-cycle needs the floquet splitting");
    FloquetOptions opt;
    opt.steps_per_period = params.value("steps_per_period", opt.steps_per_period);
    opt.table_order = params.value("table_order", opt.table_order);
    fr = limit_cycle_frame(params.value("samples", 512), opt);
  } else if (model == "lin-saddle" || model == "cubic-saddle" || model == "rotated-lin-saddle") {
    if (splitting != "analytic") throw Error("frame_from_json: " + model + " uses the analytic splitting");
    AnalyticDescriptor d;
    d.model = model == "cubic-saddle" ? "cubic-saddle" : "lin-saddle";
    d.lambda_s = params.value("lambda_s", 1.0);
    d.lambda_u = params.value("lambda_u", 1.0);
    d.c = params.value("c", 0.0);
    d.angle_xy = params.value("angle_xy", model == "rotated-lin-saddle" ? 0.3 : 0.0);
    d.angle_yz = params.value("angle_yz", model == "rotated-lin-saddle" ? 0.7 : 0.0);
    fr = analytic_frame(d);
  } else {
    throw Error("frame_from_json: unknown model " + model);
  }
  if (j.contains("quality")) {
    const auto& qj = j.at("quality");
    QualityMeasures q = fr->quality();
    q.C_U = qj.value("C_U", q.C_U);
    q.C_Pi = qj.value("C_Pi", q.C_Pi);
    q.lambda_s = qj.value("lambda_s", q.lambda_s);
    if (qj.contains("lambda_u") && !qj.at("lambda_u").is_null()) q.lambda_u = qj.at("lambda_u").get<double>();
    auto copy = std::make_shared<HyperbolicFrame>(*fr);
    copy->set_quality(q);
    auto d = copy->descriptor();
    d["quality"] = qj;
    copy->set_descriptor(d);
    fr = copy;
  }
  return fr;
}

// ---------------------------------------------------------------- checks

FrameReport verify_frame(const HyperbolicFrame& fr, const std::vector<double>& samples, double tol) {
  if (tol < 0) tol = fr.mode() == "analytic" ? 1e-10 : 1e-7;
  FrameReport r;
  const int n = fr.n();
  const auto& q = fr.quality();
  const bool has_s = fr.dim(Bundle::stable) > 0, has_u = fr.dim(Bundle::unstable) > 0;
  const Mat I = Mat::Identity(n, n);
  for (double rho : samples) {
    auto P = fr.proj(rho);
    r.completeness = std::max(r.completeness, max_abs(P.c + P.s + P.u - I));
    for (const Mat* A : {&P.c, &P.s, &P.u}) {
      r.idempotence = std::max(r.idempotence, max_abs(*A * *A - *A));
      r.proj_norm = std::max(r.proj_norm, spectral_norm(*A));
    }
    r.annihilation = std::max({r.annihilation, max_abs(P.c * P.s), max_abs(P.c * P.u), max_abs(P.s * P.u),
                               max_abs(P.s * P.c), max_abs(P.u * P.c), max_abs(P.u * P.s)});
    Vec f = fr.orbit_deriv(rho);
    for (int i = 0; i < n; ++i) {
      Vec v = P.c.col(i);
      Vec perp = v - (v.dot(f) / f.squaredNorm()) * f;
      r.center_parallel = std::max(r.center_parallel, perp.norm() / std::max(1.0, v.norm()));
    }
    if (has_s) {
      double v = rho - 0.7, w = rho - 1.9;
      r.cocycle = std::max(r.cocycle, max_abs(fr.prop_s(rho, v) * fr.prop_s(v, w) - fr.prop_s(rho, w)));
      r.invariance = std::max(r.invariance, max_abs((I - P.s) * fr.prop_s(rho, v)));
    }
    if (has_u) {
      double v = rho + 0.7, w = rho + 1.9;
      r.cocycle = std::max(r.cocycle, max_abs(fr.prop_u(rho, v) * fr.prop_u(v, w) - fr.prop_u(rho, w)));
      r.invariance = std::max(r.invariance, max_abs((I - P.u) * fr.prop_u(rho, v)));
    }
    for (double dv : {-0.5, 0.5}) {
      Vec lhs = fr.prop(rho, rho + dv) * fr.orbit_deriv(rho + dv);
      r.center_consistency = std::max(r.center_consistency, (lhs - f).norm());
    }
  }

  std::vector<double> gs, ls, lu;
  for (int k = 0; k < 10; ++k) gs.push_back(0.5 + 4.5 * k / 9.0);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, ux = 0, uy = 0, uxx = 0, uxy = 0;
  int cnt = 0;
  for (double rho : samples) {
    for (double g : gs) {
      ++cnt;
      if (has_s) {
        double a = spectral_norm(fr.prop_s(rho + g, rho));
        r.exp_bound_excess = std::max(r.exp_bound_excess, a / (q.C_U * std::exp(-q.lambda_s * g)) - 1.0);
        double y = std::log(a);
        sx += g; sy += y; sxx += g * g; sxy += g * y;
      }
      if (has_u) {
        double a = spectral_norm(fr.prop_u(rho - g, rho));
        r.exp_bound_excess = std::max(r.exp_bound_excess, a / (q.C_U * std::exp(-q.lambda_u * g)) - 1.0);
        double y = std::log(a);
        ux += g; uy += y; uxx += g * g; uxy += g * y;
      }
    }
  }
  r.exp_bound_excess = std::max(r.exp_bound_excess, 0.0);
  r.C_U_hat = 1.0;
  if (cnt > 1 && has_s) {
    double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    r.lambda_s_hat = -slope;
    r.C_U_hat = std::max(r.C_U_hat, std::exp((sy - slope * sx) / cnt));
  }
  if (cnt > 1 && has_u) {
    double slope = (cnt * uxy - ux * uy) / (cnt * uxx - ux * ux);
    r.lambda_u_hat = -slope;
    r.C_U_hat = std::max(r.C_U_hat, std::exp((uy - slope * ux) / cnt));
  } else if (!has_u) {
    r.lambda_u_hat = std::numeric_limits<double>::infinity();
  }

  auto check = [&](bool ok, const std::string& what) {
    if (!ok) {
      r.pass = false;
      r.failures.push_back(what);
    }
  };
  check(r.completeness <= tol, "completeness");
  check(r.idempotence <= tol, "idempotence");
  check(r.annihilation <= tol, "annihilation");
  check(r.center_parallel <= tol, "center bundle not parallel to f(x0)");
  check(r.invariance <= tol, "invariance");
  check(r.cocycle <= std::max(tol, 1e-7), "cocycle");
  check(r.center_consistency <= 1e-7, "center consistency");
  check(r.proj_norm <= q.C_Pi * (1.0 + tol) + tol, "projection norm exceeds C_Pi");
  check(r.exp_bound_excess <= 1e-9 + tol, "exponential bound");
  if (has_s) check(std::abs(r.lambda_s_hat - q.lambda_s) <= 0.02 * q.lambda_s, "stable exponent");
  if (has_u) check(std::abs(r.lambda_u_hat - q.lambda_u) <= 0.02 * q.lambda_u, "unstable exponent");
  return r;
}

BundleReport bundle_characterization_test(const HyperbolicFrame& fr, Bundle b, const Vec& xi0, double span) {
  if (b == Bundle::center) throw Error("bundle_characterization_test: stable or unstable bundle expected");
  const int n = fr.n();
  const Mat I = Mat::Identity(n, n);
  if (((I - fr.proj(0.0, b)) * xi0).norm() > 1e-8 * std::max(1.0, xi0.norm()))
    throw Error("bundle_characterization_test: xi0 is not in the bundle at 0");
  BundleReport r;
  const double sgn = b == Bundle::stable ? 1.0 : -1.0;
  const double h = 1e-3;
  auto xi = [&](double t) { return Vec(fr.prop(t, 0.0) * xi0); };
  const int steps = static_cast<int>(std::round(span / 0.01));
  for (int k = 0; k <= steps; ++k) {
    double t = sgn * 0.01 * k;
    Vec x = xi(t);
    Vec d = (-xi(t + 2 * h) + 8.0 * xi(t + h) - 8.0 * xi(t - h) + xi(t - 2 * h)) / (12.0 * h);
    Vec res = d - fr.model().Df(fr.orbit(t)) * x;
    Mat Pp = I - fr.proj(t, b);
    r.full_residual = std::max(r.full_residual, res.norm());
    r.residual = std::max(r.residual, (Pp * res).norm());
    r.off_bundle = std::max(r.off_bundle, (Pp * x).norm());
  }
  return r;
}

FieldNorms estimate_field_norms(const HyperbolicFrame& fr, double delta, double t_lo, double t_hi, int samples) {
  const int n = fr.n();
  const auto& m = fr.model();
  std::vector<Vec> dirs;
  dirs.push_back(Vec::Zero(n));
  for (int i = 0; i < n; ++i) {
    dirs.push_back(Vec::Unit(n, i));
    dirs.push_back(-Vec::Unit(n, i));
  }
  std::mt19937 rng(12345);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 2 * n; ++k) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = nd(rng);
    dirs.push_back(v.normalized());
  }
  auto hess_norm = [&](const Vec& x) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      Mat Hi(n, n);
      for (int a = 0; a < n; ++a)
        for (int c = 0; c < n; ++c) Hi(a, c) = m.D2f(x, Vec::Unit(n, a), Vec::Unit(n, c))(i);
      double sn = spectral_norm(Hi);
      s += sn * sn;
    }
    return std::sqrt(s);
  };
  auto hess_all = [&](const Vec& x) {
    Mat H(n * n, n);
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c) H.row(a * n + c) = m.D2f(x, Vec::Unit(n, a), Vec::Unit(n, c)).transpose();
    return H;
  };
  FieldNorms r;
  const double hl = std::max(1e-3, 0.25 * delta);
  for (int k = 0; k <= samples; ++k) {
    double t = t_lo + (t_hi - t_lo) * k / samples;
    Vec x0 = fr.orbit(t);
    Vec fx = m.f(x0);
    r.orbit_speed = std::max(r.orbit_speed, fx.norm());
    r.orbit_lip = std::max(r.orbit_lip, (m.Df(x0) * fx).norm());
    for (const Vec& d : dirs) {
      Vec x = x0 + delta * d;
      r.f0 = std::max(r.f0, m.f(x).norm());
      r.f1 = std::max(r.f1, spectral_norm(m.Df(x)));
      r.f2 = std::max(r.f2, hess_norm(x));
    }
    Mat H0 = hess_all(x0);
    for (int i = 0; i < n; ++i) {
      Mat H1 = hess_all(x0 + hl * Vec::Unit(n, i));
      r.lip2 = std::max(r.lip2, (H1 - H0).norm() / hl);
    }
  }
  return r;
}

}  // namespace hypershadow

#include "hypershadow/numerics.hpp"

#include <cmath>
#include <exception>
#include <map>
#include <memory>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hypershadow::numerics {

const QuadratureRule& gauss_legendre(int n) {
  if (n < 1) throw Error("gauss_legendre: n must be positive");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return *it->second;

  Mat J = Mat::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    double b = i / std::sqrt(4.0 * i * i - 1.0);
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  auto rule = std::make_unique<QuadratureRule>();
  rule->nodes.resize(n);
  rule->weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = es.eigenvalues()(i);
    double v = es.eigenvectors()(0, i);
    rule->nodes[i] = 0.5 * (x + 1.0);
    rule->weights[i] = v * v;  // 2 v^2 on [-1,1], halved for [0,1]
  }
  auto& ref = *rule;
  cache.emplace(n, std::move(rule));
  return ref;
}

void lagrange_weights(double x, int x0, int p, double* w) {
  for (int k = 0; k <= p; ++k) {
    double num = 1.0, den = 1.0;
    for (int j = 0; j <= p; ++j) {
      if (j == k) continue;
      num *= x - (x0 + j);
      den *= k - j;
    }
    w[k] = num / den;
  }
}

std::vector<double> fd_weights(double z, const std::vector<double>& x, int m) {
  const int n = static_cast<int>(x.size()) - 1;
  std::vector<std::vector<double>> c(n + 1, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    int mn = std::min(i, m);
    double c2 = 1.0, c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> out(n + 1);
  for (int i = 0; i <= n; ++i) out[i] = c[i][m];
  return out;
}

namespace {
void loglog_fit(const std::vector<double>& x, const std::vector<double>& y, double& slope, double& r2) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw Error("loglog fit: need at least two paired samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw Error("loglog fit: samples must be positive");
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly; syy += ly * ly;
  }
  double cxx = sxx - sx * sx / n, cxy = sxy - sx * sy / n, cyy = syy - sy * sy / n;
  if (cxx <= 0) throw Error("loglog fit: degenerate abscissae");
  slope = cxy / cxx;
  r2 = cyy > 0 ? cxy * cxy / (cxx * cyy) : 1.0;
}
}  // namespace

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double s, r;
  loglog_fit(x, y, s, r);
  return s;
}

double loglog_r2(const std::vector<double>& x, const std::vector<double>& y) {
  double s, r;
  loglog_fit(x, y, s, r);
  return r;
}

namespace {
int g_thread_cap = 0;
}

void set_thread_cap(int threads) { g_thread_cap = threads < 0 ? 0 : threads; }
int thread_cap() { return g_thread_cap; }

void parallel_for(int n, bool parallel, const std::function<void(int)>& body) {
#ifdef _OPENMP
  if (parallel && n > 1) {
    int threads = g_thread_cap > 0 ? g_thread_cap : omp_get_max_threads();
    std::exception_ptr first;
#pragma omp parallel for schedule(static) num_threads(threads)
    for (int i = 0; i < n; ++i) {
      try {
        body(i);
      } catch (...) {
#pragma omp critical(hs_parallel_for_error)
        if (!first) first = std::current_exception();
      }
    }
    if (first) std::rethrow_exception(first);
    return;
  }
#else
  (void)parallel;
#endif
  for (int i = 0; i < n; ++i) body(i);
}

}  // namespace hypershadow::numerics

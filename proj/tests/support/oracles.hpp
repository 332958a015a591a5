#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "logspline/spline_basis.hpp"

namespace oracle {

/// Midpoint Riemann sum with m cells.
inline double riemann(const std::function<double(double)>& f, int m = 1000000) {
  const double h = 1.0 / m;
  double acc = 0.0;
  for (int i = 0; i < m; ++i) acc += f((i + 0.5) * h);
  return acc * h;
}

/// Order-q B-spline B_j on the knot vector t by the Cox-de Boor recursion, evaluated
/// directly from its definition (right-continuous, with the last function closed at 1).
inline double cox_de_boor(const std::vector<double>& t, int j, int q, double x) {
  if (q == 1) {
    if (t[j] <= x && x < t[j + 1]) return 1.0;
    if (x == 1.0 && t[j] < t[j + 1] && t[j + 1] == 1.0) return 1.0;
    return 0.0;
  }
  double out = 0.0;
  const double d1 = t[j + q - 1] - t[j];
  const double d2 = t[j + q] - t[j + 1];
  if (d1 > 0.0) out += (x - t[j]) / d1 * cox_de_boor(t, j, q - 1, x);
  if (d2 > 0.0) out += (t[j + q] - x) / d2 * cox_de_boor(t, j + 1, q - 1, x);
  return out;
}

/// Empirical CDF sup distance against a reference CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    d = std::max(d, std::max((i + 1) / n - F, F - i / n));
  }
  return d;
}

/// Asymptotic Kolmogorov critical value at level 0.01.
inline double ks_critical_01(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

/// OLS slope of log y on log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace oracle

#include "logspline/quadrature.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/legendre.hpp>
#include <fmt/format.h>

#include "logspline/error.hpp"

namespace logspline {

void gauss_legendre(int order, std::vector<double>& x, std::vector<double>& w) {
  if (order < 1) throw InvalidInput(fmt::format("gauss_legendre: order {} < 1", order));
  const std::vector<double> pos = boost::math::legendre_p_zeros<double>(order);
  x.clear();
  for (double z : pos) {
    x.push_back(z);
    if (z != 0.0) x.push_back(-z);
  }
  std::sort(x.begin(), x.end());
  w.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = boost::math::legendre_p_prime(order, x[i]);
    w[i] = 2.0 / ((1.0 - x[i] * x[i]) * d * d);
  }
}

QuadratureRule make_rule(std::span<const double> knots, int order) {
  if (order < 2) throw InvalidInput(fmt::format("make_rule: order {} < 2", order));
  if (knots.size() < 2 || knots.front() != 0.0 || knots.back() != 1.0)
    throw InvalidInput("make_rule: knots must start at 0 and end at 1");
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1]))
      throw InvalidInput(fmt::format("make_rule: knots not strictly increasing at index {}", i));
  }

  std::vector<double> gx, gw;
  gauss_legendre(order, gx, gw);

  QuadratureRule rule;
  rule.order_ = order;
  rule.segments_.assign(knots.begin(), knots.end());
  const std::size_t nseg = knots.size() - 1;
  rule.nodes_.reserve(nseg * gx.size());
  rule.weights_.reserve(nseg * gx.size());
  for (std::size_t s = 0; s < nseg; ++s) {
    const double a = knots[s];
    const double half = 0.5 * (knots[s + 1] - a);
    const double mid = a + half;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      rule.nodes_.push_back(mid + half * gx[i]);
      rule.weights_.push_back(half * gw[i]);
    }
  }
  return rule;
}

std::vector<double> uniform_knots(int K) {
  if (K < 1) throw InvalidInput(fmt::format("uniform_knots: K {} < 1", K));
  std::vector<double> k(static_cast<std::size_t>(K) + 1);
  for (int i = 0; i <= K; ++i) k[i] = static_cast<double>(i) / K;
  k.back() = 1.0;
  return k;
}

std::vector<double> refine_segments(std::span<const double> knots, int min_segments) {
  if (knots.size() < 2) throw InvalidInput("refine_segments: need at least two knots");
  const std::size_t nseg = knots.size() - 1;
  const std::size_t split =
      std::max<std::size_t>(1, (static_cast<std::size_t>(std::max(min_segments, 1)) + nseg - 1) / nseg);
  std::vector<double> out;
  out.reserve(nseg * split + 1);
  for (std::size_t s = 0; s < nseg; ++s) {
    const double a = knots[s], b = knots[s + 1];
    for (std::size_t i = 0; i < split; ++i)
      out.push_back(a + (b - a) * static_cast<double>(i) / static_cast<double>(split));
  }
  out.push_back(knots.back());
  return out;
}

std::vector<double> merge_breakpoints(std::span<const double> a, std::span<const double> b) {
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  all.push_back(0.0);
  all.push_back(1.0);
  std::sort(all.begin(), all.end());
  std::vector<double> out;
  out.reserve(all.size());
  for (double v : all) {
    if (v < 0.0 || v > 1.0) continue;
    if (out.empty() || v - out.back() > 1e-14) out.push_back(v);
  }
  out.front() = 0.0;
  if (out.back() > 1.0 - 1e-14)
    out.back() = 1.0;
  else
    out.push_back(1.0);
  return out;
}

double integrate(const QuadratureRule& rule, const std::function<double(double)>& f) {
  const auto& x = rule.nodes();
  const auto& w = rule.weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = f(x[i]);
    if (!std::isfinite(v))
      throw NumericDomain(fmt::format("integrate: non-finite integrand {} at node x={:.17g}", v, x[i]));
    acc += w[i] * v;
  }
  return acc;
}

InverseCdfTable::InverseCdfTable(std::vector<double> grid, std::vector<double> cdf)
    : grid_(std::move(grid)), cdf_(std::move(cdf)) {
  if (grid_.size() < 2 || grid_.size() != cdf_.size())
    throw InvalidInput("InverseCdfTable: grid and cdf must have equal length >= 2");
}

double InverseCdfTable::quantile(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw InvalidInput(fmt::format("quantile: u={} outside [0,1]", u));
  if (u <= 0.0) return grid_.front();
  if (u >= 1.0) return grid_.back();
  // First index with cdf >= u; flat cells (zero density) are skipped over.
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  const std::size_t hi = static_cast<std::size_t>(it - cdf_.begin());
  const std::size_t lo = hi - 1;
  const double c0 = cdf_[lo];
  const double c1 = cdf_[hi];
  const double t = c1 > c0 ? (u - c0) / (c1 - c0) : 1.0;
  return grid_[lo] + t * (grid_[hi] - grid_[lo]);
}

double InverseCdfTable::cdf_at(double x) const {
  if (x <= grid_.front()) return 0.0;
  if (x >= grid_.back()) return 1.0;
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - grid_[lo]) / (grid_[hi] - grid_[lo]);
  return cdf_[lo] + t * (cdf_[hi] - cdf_[lo]);
}

InverseCdfTable build_inverse_cdf(const std::function<double(double)>& density,
                                  const QuadratureRule& rule, int grid_size,
                                  const QuadratureTolerances& tol) {
  if (grid_size < 1) throw InvalidInput(fmt::format("build_inverse_cdf: grid_size {} < 1", grid_size));
  const std::vector<double> uni = uniform_knots(grid_size);
  std::vector<double> grid = merge_breakpoints(uni, rule.segments());

  std::vector<double> gx, gw;
  gauss_legendre(std::max(rule.order(), 2), gx, gw);

  for (double g : grid) {
    const double v = density(g);
    if (!(v >= 0.0))
      throw InvalidInput(fmt::format("build_inverse_cdf: negative density {} at x={:.17g}", v, g));
  }

  std::vector<double> cdf(grid.size(), 0.0);
  double acc = 0.0;
  for (std::size_t c = 0; c + 1 < grid.size(); ++c) {
    const double half = 0.5 * (grid[c + 1] - grid[c]);
    const double mid = grid[c] + half;
    double cell = 0.0;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = density(mid + half * gx[i]);
      if (!(v >= 0.0))
        throw InvalidInput(
            fmt::format("build_inverse_cdf: negative density {} at x={:.17g}", v, mid + half * gx[i]));
      cell += gw[i] * v;
    }
    acc += half * cell;
    cdf[c + 1] = acc;
  }
  if (!(std::abs(acc - 1.0) <= tol.density_mass))
    throw InvalidInput(fmt::format("build_inverse_cdf: density integrates to {:.12g}, not 1", acc));
  for (double& v : cdf) v /= acc;
  cdf.back() = 1.0;
  return InverseCdfTable(std::move(grid), std::move(cdf));
}

}  // namespace logspline

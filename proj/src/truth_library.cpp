#include "logspline/truth_library.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>

#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>

#include "logspline/error.hpp"
#include "logspline/rng.hpp"

namespace logspline {
namespace {

constexpr int kLacunaryTerms = 11;
constexpr int kLacunarySegments = 1024;

double log_integral_exp(const std::function<double(double)>& g, std::span<const double> knots) {
  const QuadratureRule rule = make_rule(refine_segments(knots), 8);
  double m = -std::numeric_limits<double>::infinity();
  std::vector<double> v(rule.size());
  for (std::size_t k = 0; k < rule.size(); ++k) {
    v[k] = g(rule.nodes()[k]);
    m = std::max(m, v[k]);
  }
  double s = 0.0;
  for (std::size_t k = 0; k < rule.size(); ++k) s += rule.weights()[k] * std::exp(v[k] - m);
  return m + std::log(s);
}

}  // namespace

double tilted_log_partition(double phi) {
  if (std::abs(phi) < 1e-4) {
    const double p2 = phi * phi;
    return phi / 2.0 + p2 / 24.0 - p2 * p2 / 2880.0;
  }
  // log((e^phi - 1) / phi), arranged to avoid overflow for large |phi|.
  if (phi > 0.0) return phi + std::log(-std::expm1(-phi) / phi);
  return std::log(std::expm1(phi) / phi);
}

double grid_sup_log_norm(const Density& d, int points) {
  double m = 0.0;
  for (int i = 0; i <= points; ++i)
    m = std::max(m, std::abs(d.log_pdf(static_cast<double>(i) / points)));
  for (double b : d.breakpoints) m = std::max(m, std::abs(d.log_pdf(b)));
  return m;
}

TruthSpec analytic_truth(double amplitude) {
  if (!std::isfinite(amplitude)) throw InvalidInput("analytic_truth: non-finite amplitude");
  auto g = [amplitude](double x) { return amplitude * std::sin(2.0 * std::numbers::pi * x); };
  const double c = log_integral_exp(g, uniform_knots(4));
  Density d;
  d.log_pdf = [g, c](double x) { return g(x) - c; };
  d.breakpoints = uniform_knots(4);
  d.name = fmt::format("analytic(a={})", amplitude);
  const double sup = std::abs(amplitude) + std::abs(c);
  return TruthSpec{d.name, TrueDensity(d, std::nullopt, sup), std::nullopt, sup, amplitude == 0.0,
                   false, amplitude == 0.0 ? std::optional<double>(0.0) : std::nullopt,
                   std::nullopt};
}

TruthSpec spline_member_truth(const FamilyPtr& family, const Eigen::VectorXd& theta) {
  const LogSplineModel m(family, theta);
  const Density d = m.to_density();
  const double sup = grid_sup_log_norm(d);
  return TruthSpec{d.name, TrueDensity(d, std::nullopt, sup), std::nullopt, sup, false, true,
                   std::nullopt, family->J()};
}

TruthSpec tilted_uniform_truth(double phi) {
  if (!std::isfinite(phi)) throw InvalidInput("tilted_uniform_truth: non-finite phi");
  const double psi = tilted_log_partition(phi);
  Density d;
  d.log_pdf = [phi, psi](double x) { return phi * x - psi; };
  d.name = fmt::format("tilted(phi={})", phi);
  const double sup = std::max(std::abs(psi), std::abs(phi - psi));
  return TruthSpec{d.name, TrueDensity(d, std::nullopt, sup), std::nullopt, sup, true, false, phi,
                   std::nullopt};
}

TruthSpec hoelder_truth(double beta, std::uint64_t seed, double amplitude) {
  if (!(beta > 0.0 && beta <= 4.0))
    throw InvalidInput(fmt::format("hoelder_truth: beta {} outside (0, 4]", beta));
  struct Series {
    std::array<double, kLacunaryTerms> coef;
    std::array<double, kLacunaryTerms> freq;
    std::array<double, kLacunaryTerms> phase;
    double operator()(double x) const {
      double s = 0.0;
      for (int k = 0; k < kLacunaryTerms; ++k) s += coef[k] * std::cos(freq[k] * x + phase[k]);
      return s;
    }
  };
  auto series = std::make_shared<Series>();
  Rng rng(derive_seed(seed, "truth.hoelder"));
  for (int k = 0; k < kLacunaryTerms; ++k) {
    const double mag = rng.uniform(0.5, 1.0);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    series->coef[k] = amplitude * std::exp2(-k * beta) * sign * mag;
    series->freq[k] = std::exp2(k) * std::numbers::pi;
    series->phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const std::vector<double> knots = uniform_knots(kLacunarySegments);
  const double c = log_integral_exp([series](double x) { return (*series)(x); }, knots);
  Density d;
  d.log_pdf = [series, c](double x) { return (*series)(x) - c; };
  d.breakpoints = knots;
  d.name = fmt::format("hoelder(beta={},seed={})", beta, seed);
  const double sup = grid_sup_log_norm(d);
  return TruthSpec{d.name, TrueDensity(d, beta, sup), beta, sup, false, false, std::nullopt,
                   std::nullopt};
}

NullDistance null_distance(const TrueDensity& p0, double lo, double hi) {
  if (!(lo < hi)) throw InvalidInput("null_distance: empty interval");
  const QuadratureRule rule = make_rule(refine_segments(p0.breakpoints()), 8);
  std::vector<double> sq0(rule.size());
  for (std::size_t k = 0; k < rule.size(); ++k)
    sq0[k] = std::exp(0.5 * p0.log_pdf(rule.nodes()[k]));
  auto h2 = [&](double phi) {
    const double psi = tilted_log_partition(phi);
    double aff = 0.0;
    for (std::size_t k = 0; k < rule.size(); ++k)
      aff += rule.weights()[k] * sq0[k] * std::exp(0.5 * (phi * rule.nodes()[k] - psi));
    return std::max(2.0 - 2.0 * aff, 0.0);
  };
  // Bracket on a grid, then refine.
  constexpr int kGrid = 40;
  int best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    const double v = h2(lo + (hi - lo) * i / kGrid);
    if (v < best_v) {
      best_v = v;
      best = i;
    }
  }
  const double a = lo + (hi - lo) * std::max(best - 1, 0) / kGrid;
  const double b = lo + (hi - lo) * std::min(best + 1, kGrid) / kGrid;
  const auto [phi, v] = boost::math::tools::brent_find_minima(h2, a, b, 30);
  return {phi, std::sqrt(v)};
}

}  // namespace logspline

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "logspline/logspline_model.hpp"

namespace logspline {

/// A labelled true density for experiments.
struct TruthSpec {
  std::string name;
  TrueDensity truth;
  std::optional<double> beta;    // nominal Hoelder smoothness; empty for analytic truths
  double sup_log_norm = 0.0;     // sup |log p0|
  bool in_null = false;          // member of the tilted-uniform family
  bool spline_member = false;
  std::optional<double> phi;     // tilt of a null member
  std::optional<int> member_J;   // dimension of a spline member
};

/// psi(phi) = log int_0^1 exp(phi x) dx, stable near phi = 0.
double tilted_log_partition(double phi);

/// p0 proportional to exp(a sin(2 pi x)).
TruthSpec analytic_truth(double amplitude = 1.0);

/// p0 = p_{J,theta} for the given family member.
TruthSpec spline_member_truth(const FamilyPtr& family, const Eigen::VectorXd& theta);

/// p0(x) = exp(phi x - psi(phi)).
TruthSpec tilted_uniform_truth(double phi);

/// Lacunary cosine series in the log-density:
///   log p0 = amplitude * sum_{k=0}^{10} 2^{-k beta} a_k cos(2^k pi x + phi_k) - c,
/// a_k = +-U[0.5, 1], phi_k ~ U[0, 2 pi), drawn from `seed`. Requires 0 < beta <= 4.
TruthSpec hoelder_truth(double beta, std::uint64_t seed, double amplitude = 1.0);

struct NullDistance {
  double phi = 0.0;
  double hellinger = 0.0;
};

/// min over phi in [lo, hi] of h(p0, p_phi), by Brent's method on a bracketing grid.
NullDistance null_distance(const TrueDensity& p0, double lo = -5.0, double hi = 5.0);

/// sup |log p| on a uniform grid of `points` cells.
double grid_sup_log_norm(const Density& d, int points = 1 << 18);

}  // namespace logspline

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "logspline/posterior_engine.hpp"
#include "logspline/prior_lib.hpp"
#include "logspline/truth_library.hpp"

namespace logspline {

/// Tilted-uniform family p_phi(x) = exp(phi x - psi(phi)) with a uniform prior on
/// [phi_lo, phi_hi].
class ParametricNull {
 public:
  explicit ParametricNull(double phi_lo = -5.0, double phi_hi = 5.0);

  double phi_lo() const noexcept { return lo_; }
  double phi_hi() const noexcept { return hi_; }

  double log_pdf(double phi, double x) const;
  TrueDensity member(double phi) const;

  /// Maximizer of the likelihood over [phi_lo, phi_hi] given sum(x) and n.
  double mle(double sum_x, std::size_t n) const;

  /// log int prod p_phi(X_i) dPi(phi) by composite Gauss-Legendre around the MLE.
  EvidenceEstimate log_evidence(std::span<const double> data) const;

 private:
  double lo_;
  double hi_;
};

/// psi'(phi) and psi''(phi): mean and variance of X under p_phi.
double tilted_mean(double phi);
double tilted_variance(double phi);

/// A model that can produce its log evidence. `name` also seeds its random stream, so
/// the same model yields the same estimate wherever it appears.
struct ModelSpec {
  std::string name;
  std::function<EvidenceEstimate(std::span<const double>, Rng&)> evidence;
};

ModelSpec null_model(const ParametricNull& null);

/// One log-spline model with a coefficient prior.
ModelSpec logspline_model(FamilyPtr family, CoefficientPrior prior,
                          const EvidenceOptions& opt = {});

/// Settings of the nonparametric alternative: a single log-spline model of dimension
/// dimension_schedule(alpha, n, q).
struct AlternativeSpec {
  double alpha = 1.0;
  int q = 4;
  double M = 3.0;
  PriorKind kind = PriorKind::kFlat;
  double net_factor = 1.0;
  EvidenceOptions evidence;
};

ModelSpec alternative_model(const AlternativeSpec& alt, std::size_t n);

struct BayesFactorResult {
  double log_bf = 0.0;  // (log w2 + log Z2) - (log w1 + log Z1)
  double std_error = 0.0;
  double log_w1 = 0.0;
  double log_w2 = 0.0;
  EvidenceEstimate z1;
  EvidenceEstimate z2;
  std::size_t n = 0;
};

/// BF of model 2 against model 1 with prior weights (w1, w2).
BayesFactorResult bayes_factor(const ModelSpec& m1, const ModelSpec& m2, double w1, double w2,
                               std::span<const double> data, std::uint64_t seed);

/// Posterior probability of model 2: the logistic function of log BF.
double posterior_probability_model2(const BayesFactorResult& bf);

struct BfRow {
  std::size_t n = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  double log_bf = 0.0;
  double se = 0.0;
  double log_z_null = 0.0;
  double log_z_alt = 0.0;
};

struct BfTrajectoryOptions {
  std::vector<std::size_t> n_grid{250, 500, 1000, 2000};
  int reps = 10;
  std::uint64_t seed = 1;
  double w_alt = 0.5;
  double w_null = 0.5;
  int jobs = 1;
};

/// log BF (null = model 2 against the alternative = model 1) along n_grid, rows in (n, rep)
/// order. Every cell draws a fresh sample from p0 with a seed derived from (n, rep).
std::vector<BfRow> bf_trajectory(const TrueDensity& p0, const ParametricNull& null,
                                 const AlternativeSpec& alt, const BfTrajectoryOptions& opt);

struct SmallBallMass {
  RegionMass hellinger;  // Pi(h(p, p0) <= radius)
  RegionMass kl;         // Pi(B(radius))
};

/// Prior mass of the Hellinger ball and the KL neighborhood of p0 in one model.
SmallBallMass prior_mass_smallball(const FamilyPtr& family, const CoefficientPrior& prior,
                                   const TrueDensity& p0, double radius, Rng& rng,
                                   const RegionMassOptions& opt = {});

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. Exceptions are rethrown after
/// all workers finish (the first by index).
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace logspline

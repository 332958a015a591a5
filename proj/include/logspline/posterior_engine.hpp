#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "logspline/logspline_model.hpp"
#include "logspline/prior_lib.hpp"
#include "logspline/rng.hpp"

namespace logspline {

/// Gaussian approximation of the within-model posterior in free coordinates.
struct LaplaceFit {
  Eigen::VectorXd mode;        // free coordinates, inside the box
  Eigen::MatrixXd cov;         // (n T^T Cov T + I / M^2)^{-1}
  Eigen::MatrixXd chol;        // lower Cholesky factor of cov
  double log_lik = 0.0;        // at the mode
  int iterations = 0;
};

LaplaceFit laplace_fit(const LogSplineFamily& family, const SufficientStats& ss,
                       const CoefficientPrior& prior);

/// Proposal on free coordinates with an exactly computable log-density (continuous case)
/// or log-mass (lattice case).
class Proposal {
 public:
  /// Multivariate t (dof <= 0 means Gaussian) with scale matrix inflate * cov, mixed with
  /// the prior at weight `defensive`. On a net prior the Gaussian is replaced by a
  /// sequential discrete Gaussian on the lattice.
  Proposal(const CoefficientPrior& prior, Eigen::VectorXd center, const Eigen::MatrixXd& cov,
           double inflate, double dof, double defensive);

  Eigen::VectorXd draw(Rng& rng) const;  // free coordinates
  double log_q(const Eigen::VectorXd& x) const;

 private:
  double log_q_core(const Eigen::VectorXd& x) const;
  Eigen::VectorXd draw_core(Rng& rng) const;

  const CoefficientPrior* prior_;
  Eigen::VectorXd center_;
  Eigen::MatrixXd chol_;  // of inflate * cov
  double log_det_ = 0.0;  // log det of the scale matrix
  double dof_;
  double defensive_;
};

enum class EvidenceMethod { kExactDiscrete, kImportanceSampling, kQuadrature };

std::string to_string(EvidenceMethod m);

struct EvidenceEstimate {
  double log_z = 0.0;
  double std_error = 0.0;
  EvidenceMethod method = EvidenceMethod::kExactDiscrete;
  std::size_t n_draws = 0;
  double ess = 0.0;  // importance-sampling effective sample size
};

struct EvidenceOptions {
  std::size_t n_is = 20000;
  double t_dof = 7.0;
  double inflate = 1.5;
  double defensive = 0.1;
  std::size_t exact_atom_cap = 20000;  // enumerate nets up to this many atoms
};

/// log int prod p_theta(X_i) dPi(theta).
EvidenceEstimate log_evidence(const CoefficientPrior& prior, const LogSplineFamily& family,
                              const SufficientStats& ss, Rng& rng,
                              const EvidenceOptions& opt = {});
EvidenceEstimate log_evidence(const CoefficientPrior& prior, const LogSplineFamily& family,
                              std::span<const double> data, Rng& rng,
                              const EvidenceOptions& opt = {});

/// m + log sum exp(v_i - m), summed in index order.
double ordered_log_sum_exp(std::span<const double> v);

/// Softmax of log_weights + log_evidences.
std::vector<double> model_posterior(std::span<const double> log_weights,
                                    std::span<const double> log_evidences);

struct McmcOptions {
  std::size_t steps = 5000;
  double burn_fraction = 0.2;
  std::size_t window = 50;      // adaptation window length
  double target_low = 0.25;
  double target_high = 0.40;
  std::size_t thin = 1;
  double initial_scale = 0.0;   // 0: 2.38 / sqrt(dimension)
  double independence = 0.3;    // share of independence proposals from the Laplace fit
};

struct Chain {
  std::vector<Eigen::VectorXd> draws;  // full coefficient vectors after burn-in
  std::vector<double> log_lik;
  double acceptance = 0.0;             // after burn-in
  double scale = 0.0;                  // frozen proposal scale
  double ess = 0.0;                    // min over coordinates
};

/// Metropolis-Hastings in free coordinates mixing three moves: a random walk preconditioned
/// by the Laplace covariance (rounded to the lattice on nets), an independence proposal from
/// the Laplace fit, and on nets a jump to a neighboring atom. Only the random-walk scale
/// adapts, during burn-in. Throws DiagnosticsError if an adaptation window accepts nothing.
Chain mcmc_theta(const LogSplineFamily& family, const CoefficientPrior& prior,
                 const SufficientStats& ss, Rng& rng, const McmcOptions& opt = {});

/// Geyer initial positive sequence estimate.
double effective_sample_size(std::span<const double> x);

struct ModelFit {
  double alpha = 0.0;
  int J = 0;
  double log_weight = 0.0;
  EvidenceEstimate evidence;
  Chain chain;
};

struct PosteriorSummary {
  std::vector<ModelFit> models;
  std::vector<double> model_posterior;
  std::size_t n = 0;
};

struct PosteriorOptions {
  EvidenceOptions evidence;
  McmcOptions mcmc;
  bool run_chains = true;
};

PosteriorSummary compute_posterior(const HierarchicalPrior& hp, std::span<const double> data,
                                   std::uint64_t seed, const PosteriorOptions& opt = {});

struct BallMass {
  double mass = 0.0;
  double std_error = 0.0;
};

/// Posterior probability of {h(p, p0) > radius}.
BallMass posterior_ball_mass(const PosteriorSummary& ps, const HierarchicalPrior& hp,
                             const TrueDensity& p0, double radius);

/// Quantile of h(p, p0) under the model-posterior mixture of chain draws.
double contraction_radius(const PosteriorSummary& ps, const HierarchicalPrior& hp,
                          const TrueDensity& p0, double quantile);

/// Per-model log evidence, std error, posterior weight, acceptance rate as JSON text.
std::string summary_json(const PosteriorSummary& ps);

struct RegionMass {
  double mass = 0.0;
  double log_mass = 0.0;
  double std_error = 0.0;
  double upper = 0.0;       // 95% upper bound; equals mass unless nothing was hit
  bool exact = false;
  std::size_t hits = 0;
  std::size_t draws = 0;
};

struct RegionMassOptions {
  std::size_t draws = 20000;
  std::size_t exact_atom_cap = 20000;
  double defensive = 0.05;
};

/// Prior probability of a region {theta: inside(theta)} that is approximately the
/// ellipsoid (x - center)^T H (x - center) <= r2 in free coordinates. Nets up to the cap are
/// enumerated; otherwise importance sampling with a proposal matched to the ellipsoid.
RegionMass prior_region_mass(const CoefficientPrior& prior,
                             const std::function<bool(const Eigen::VectorXd&)>& inside,
                             const Eigen::VectorXd& center, const Eigen::MatrixXd& H, double r2,
                             Rng& rng, const RegionMassOptions& opt = {});

enum class BallKind { kHellinger, kKullbackLeibler };

/// Distances from one model to p0, with the local quadratic shape of h^2 around the
/// Hellinger projection.
struct TruthGeometry {
  std::shared_ptr<const TruthComparator> cmp;
  Eigen::VectorXd theta_J;  // Hellinger projection onto the box
  double eps_J = 0.0;       // h at the projection
  double kl_J = 0.0;        // KL at the projection
  Eigen::MatrixXd H;        // h^2 ~ eps_J^2 + (x - x_J)^T H (x - x_J) in free coordinates
};

TruthGeometry truth_geometry(const FamilyPtr& family, const TrueDensity& p0, double M);

/// Prior mass of the Hellinger ball {h(p, p0) <= radius} or the KL ball B(radius).
RegionMass prior_ball_mass(const CoefficientPrior& prior, const TruthGeometry& geo,
                           BallKind kind, double radius, Rng& rng,
                           const RegionMassOptions& opt = {});

}  // namespace logspline

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "logspline/logspline_model.hpp"
#include "logspline/posterior_engine.hpp"
#include "logspline/prior_lib.hpp"

namespace logspline {

/// log of the volume of the unit ball in R^J: (J/2) log pi - lgamma(J/2 + 1).
double log_ball_volume(int J);
double ball_volume(int J);

enum class CoverNorm { kSup, kEuclidean };

struct CoverCount {
  double log_count = 0.0;
  std::uint64_t count = 0;  // valid unless overflow
  bool overflow = false;
};

/// Size of a constructive grid cover of [-M, M]^J by balls of radius eps: ceil(M / eps)^J
/// for the sup norm, ceil(M sqrt(J) / eps)^J for the Euclidean norm (cubes of half-side
/// eps / sqrt(J) fit in the balls).
CoverCount covering_number_box(int J, double M, double eps, CoverNorm norm);

struct EntropyRow {
  double eps = 0.0;
  double log_cover = 0.0;  // bound on log N(eps/3, C_J(2 eps), h)
  double implied_E = 0.0;  // log_cover / J
  bool ball_bound = false; // local Euclidean-ball bound applied (else the box cover)
};

struct EntropyReport {
  double alpha = 0.0;
  double n = 0.0;
  int J = 0;
  double eps_n = 0.0;
  double F_lower = 0.0;
  double F_upper = 0.0;
  std::vector<EntropyRow> rows;
  double E_max = 0.0;
  double E_min = 0.0;
  bool finite = false;
  bool stable = false;  // E_max <= 3 E_min
};

struct EntropyAuditOptions {
  int grid = 10;               // eps_n * 2^{k/3}, k < grid, capped at sqrt 2
  bool log_factor = false;
  std::optional<double> F_lower;  // default: frozen calibration
  std::optional<double> F_upper;
};

/// Entropy bound in model J = dimension_schedule(alpha, n, q) over eps >= eps_n. Inside the
/// local regime 4 eps < F_lower the set C_J(2 eps) lies in a Euclidean ball of radius
/// 4 sqrt(J) eps / F_lower around theta_J, and Hellinger radius eps/3 is reached by
/// Euclidean radius sqrt(J) eps / (3 F_upper); a volumetric cover gives
/// (J - 1) log(1 + 24 F_upper / F_lower). Otherwise the box is covered in the sup norm.
EntropyReport entropy_audit(double alpha, double n, int q, double M,
                            const EntropyAuditOptions& opt = {});

struct ConditionConstants {
  double B = 2.0;
  double H = 1.0;
  double I = 3.0;
  double L = 0.0;
  std::vector<double> E_alpha;
  double E = 0.0;
  double E_lower = 0.0;
  double F = 0.0;
  double K = 1.0 / 9.0;
  std::vector<double> mu;  // mu_{n,alpha}; empty means all ones
};

struct GateResult {
  bool h_at_least_one = false;
  bool i_above_two = false;
  bool b_above_sqrt_h = false;    // B > sqrt(H)
  bool kb2_dominates = false;     // K B^2 > max(H E_lower, E) + 1
  bool testing_margin = false;    // B^2 I^2 (K - 2 L) > 3
  bool all = false;
};

/// The hypothesis inequalities on the constants of the main contraction theorem.
GateResult theorem_gate(const ConditionConstants& cc);

/// log(lambda_alpha / lambda_beta) + F J_beta and log(mu_alpha / mu_beta) - C J_alpha +
/// (F + C) J_beta for exponential weights, with J := n eps^2.
struct WeightRatioIdentity {
  double alpha = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
};

std::vector<WeightRatioIdentity> weight_ratio_identity(const WeightScheme& scheme,
                                                       std::span<const double> alphas,
                                                       std::size_t beta, double n, double F,
                                                       int q = 1);

struct PriorMassRow {
  double alpha = 0.0;
  int J = 0;
  bool smaller = false;    // alpha in A_{<beta}: eps_alpha^2 > H eps_beta^2
  double i = 0.0;
  double radius = 0.0;     // i eps_alpha (smaller) or i eps_beta
  double log_weight_ratio = 0.0;
  double log_mass = 0.0;   // log Pi_alpha(C(radius)); the upper bound if nothing was hit
  bool exact = false;
  double log_lhs = 0.0;
  double log_rhs = 0.0;    // log mu + L i^2 n eps^2
  bool satisfied = false;
};

struct PriorMassAuditOptions {
  double kl_factor = 1.0;  // B(kl_factor * eps_beta) in the denominators
  RegionMassOptions mass;
  std::uint64_t seed = 1;
};

struct PriorMassAudit {
  std::size_t beta = 0;
  double n = 0.0;
  double eps_beta = 0.0;
  RegionMass kl_mass_beta;  // Pi_beta(B(kl_factor eps_beta))
  std::vector<PriorMassRow> rows;
  bool smaller_empty = true;

  double log_sum_small = 0.0;     // log of the sum over alpha < beta
  double log_target_small = 0.0;     // -2 n eps_beta^2
  double log_ratio_small = 0.0;   // log_sum_small - log_target_small
  double log_crude_small = 0.0;   // same with Pi_alpha(C) <= 1 and Pi_beta(B) >= 1/N_beta

  double log_kl_mass = 0.0;     // log Pi_beta(B(kl_factor eps_beta))
  double log_kl_target = 0.0;     // -F n eps_beta^2
  bool kl_mass_ok = false;

  std::vector<double> log_weight_ratios;  // per alpha: log(lambda_alpha / lambda_beta)
  std::vector<double> log_weight_bounds;  // log mu + n max(eps_alpha^2, eps_beta^2)
  bool weights_ok = false;

  double log_sum_weighted = 0.0;
  double log_target_weighted = 0.0;     // -(F + 2) n eps_beta^2
  double log_ratio_weighted = 0.0;

  bool balls_ok = false;
};

/// Both sides of the prior mass comparisons for one n. Zero-mass denominators make the
/// ratios infinite and the conditions violated.
PriorMassAudit prior_mass_audit(const HierarchicalPrior& hp, const TrueDensity& p0,
                                std::size_t beta, const ConditionConstants& cc,
                                std::span<const double> i_grid,
                                const PriorMassAuditOptions& opt = {});

/// 1 iff sum_i log(q / p0)(X_i) > log(a / b); ties decide 0. Throws NumericDomain if a
/// log-ratio is not finite.
int minimax_test_singleton(const Density& p0, const Density& q, double a, double b,
                           std::span<const double> data);

/// Maximum of singleton tests against net centers, each at Hellinger distance >= 3 eps
/// from p0.
class TestFunction {
 public:
  TestFunction(Density p0, std::vector<Density> centers, double a, double b, double eps);

  std::size_t size() const noexcept { return centers_.size(); }
  double eps() const noexcept { return eps_; }
  double log_threshold(std::size_t j) const { return log_thresholds_.at(j); }
  const std::vector<double>& distances() const noexcept { return distances_; }

  /// sum_i log(q_j / p0)(X_i)
  double statistic(std::size_t j, std::span<const double> data) const;
  int decide(std::span<const double> data) const;

 private:
  Density p0_;
  std::vector<Density> centers_;
  std::vector<double> log_thresholds_;
  std::vector<double> distances_;
  double eps_;
};

int minimax_test_ball(const TestFunction& test, std::span<const double> data);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct SingletonErrors {
  McEstimate type1;     // P0^n phi
  McEstimate type2;     // Q^n (1 - phi)
  McEstimate weighted;  // a type1 + b type2
  double hellinger = 0.0;
  double bound = 0.0;   // sqrt(ab) exp(-n h^2 / 2)
};

SingletonErrors singleton_test_errors(const TrueDensity& p0, const TrueDensity& q, double a,
                                      double b, std::size_t n, std::size_t reps,
                                      std::uint64_t seed);

struct NetErrors {
  McEstimate type1;
  double bound1 = 0.0;               // sqrt(b/a) N exp(-n eps^2)
  std::vector<McEstimate> type2;     // at every center
  double bound2 = 0.0;               // sqrt(a/b) exp(-n eps^2)
};

NetErrors net_test_errors(const TrueDensity& p0, const std::vector<TrueDensity>& centers,
                          double a, double b, double eps, std::size_t n, std::size_t reps,
                          std::uint64_t seed);

}  // namespace logspline

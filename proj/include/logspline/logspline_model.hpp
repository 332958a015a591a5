#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "logspline/quadrature.hpp"
#include "logspline/rng.hpp"
#include "logspline/spline_basis.hpp"

namespace logspline {

/// A density on [0,1] given by its log. `breakpoints` lists points where the log-density
/// may lose smoothness; quadrature over the density is aligned to them.
struct Density {
  std::function<double(double)> log_pdf;
  std::vector<double> breakpoints{0.0, 1.0};
  std::string name;

  double pdf(double x) const { return std::exp(log_pdf(x)); }
};

/// Data-generating density p0 with a cached inverse-CDF table for sampling.
class TrueDensity {
 public:
  TrueDensity(Density density, std::optional<double> beta, double sup_log_norm,
              int grid_size = 4096);

  const Density& density() const noexcept { return density_; }
  double log_pdf(double x) const { return density_.log_pdf(x); }
  double pdf(double x) const { return density_.pdf(x); }
  const std::vector<double>& breakpoints() const noexcept { return density_.breakpoints; }
  const std::string& name() const noexcept { return density_.name; }
  std::optional<double> nominal_smoothness() const noexcept { return beta_; }
  double sup_log_norm() const noexcept { return sup_log_norm_; }

  std::vector<double> sample(Rng& rng, std::size_t n) const;

 private:
  Density density_;
  std::optional<double> beta_;
  double sup_log_norm_;
  std::shared_ptr<const InverseCdfTable> table_;
};

struct SufficientStats {
  Eigen::VectorXd S;  // sum_i B(X_i)
  std::size_t n = 0;
};

/// The J-dimensional exponential family p_{J,theta} = exp(theta^T B_J - c_J(theta)) with
/// the basis tabulated on a knot-aligned Gauss rule.
class LogSplineFamily {
 public:
  explicit LogSplineFamily(SplineBasis basis, int order = 8);

  const SplineBasis& basis() const noexcept { return basis_; }
  const QuadratureRule& rule() const noexcept { return rule_; }
  int J() const noexcept { return basis_.J(); }

  /// theta^T B at the rule nodes.
  void eta(const double* theta, double* out) const;

  /// c_J(theta) = log int exp(theta^T B). Throws InvalidInput for non-finite theta.
  double log_normalizer(const Eigen::VectorXd& theta) const;

  struct Moments {
    double c = 0.0;
    Eigen::VectorXd mean;  // E_theta B
    Eigen::MatrixXd cov;   // Cov_theta B (empty unless requested)
  };
  Moments moments(const Eigen::VectorXd& theta, bool with_cov) const;

  SufficientStats suff_stats(std::span<const double> data) const;

  /// sum_i log p_{J,theta}(X_i) = theta^T S - n c_J(theta).
  double log_likelihood(const Eigen::VectorXd& theta, const SufficientStats& ss) const;

 private:
  SplineBasis basis_;
  QuadratureRule rule_;
  std::vector<std::int64_t> first_;
  std::vector<double> values_;  // j-major: values_[j * nodes + k]
};

using FamilyPtr = std::shared_ptr<const LogSplineFamily>;

FamilyPtr make_family(int q, int J, int order = 8);

class LogSplineModel {
 public:
  /// theta is centered on construction; the density does not change.
  LogSplineModel(FamilyPtr family, const Eigen::VectorXd& theta);

  const LogSplineFamily& family() const noexcept { return *family_; }
  const FamilyPtr& family_ptr() const noexcept { return family_; }
  const Eigen::VectorXd& theta() const noexcept { return theta_; }
  double normalizer() const noexcept { return c_; }

  double log_density_at(double x) const;
  /// Throws InvalidInput for x outside [0,1].
  double density_at(double x) const;

  /// i.i.d. draws by inverse CDF.
  std::vector<double> sample(Rng& rng, std::size_t n, int grid_size = 4096) const;

  Density to_density() const;

 private:
  FamilyPtr family_;
  Eigen::VectorXd theta_;
  double c_;
};

/// Hellinger distance sqrt(int (sqrt p - sqrt q)^2). Throws InvalidInput if either density
/// fails to integrate to 1 within `mass_tol`.
double hellinger(const Density& p, const Density& q, int order = 8, double mass_tol = 1e-6);

struct NeighborhoodMembership {
  double kl = 0.0;         // P0 log(p0/p)
  double kl2 = 0.0;        // P0 (log(p0/p))^2
  double hellinger = 0.0;  // h(p, p0)

  bool in_kl_ball(double eps) const { return kl <= eps * eps && kl2 <= eps * eps; }
  bool in_hellinger_ball(double eps) const { return hellinger <= eps; }
};

/// Throws NumericDomain if p falls below 1e-300 at a quadrature node.
NeighborhoodMembership kl_profile(const TrueDensity& p0, const Density& p, int order = 8);

/// Repeated distance evaluations between members of one family and a fixed p0, on a rule
/// aligned to both the spline knots and the breakpoints of p0.
class TruthComparator {
 public:
  TruthComparator(FamilyPtr family, const TrueDensity& p0, int order = 8);

  const LogSplineFamily& family() const noexcept { return *family_; }

  double hellinger(const Eigen::VectorXd& theta) const;
  NeighborhoodMembership profile(const Eigen::VectorXd& theta) const;

  /// h^2 and its gradient in theta.
  double hellinger_sq_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;

 private:
  void densities(const Eigen::VectorXd& theta, std::vector<double>& eta,
                 std::vector<double>& p) const;

  FamilyPtr family_;
  std::vector<double> w_;
  std::vector<std::int64_t> first_;
  std::vector<double> values_;
  std::vector<double> p0_;
  std::vector<double> log_p0_;
};

struct ProjectionOptions {
  std::optional<double> lower_c4;  // defaults to the frozen calibration value
  int max_iter = 200;
  int max_rounds = 50;
  double tol = 1e-14;
  int order = 8;
};

struct Projection {
  Eigen::VectorXd theta;
  double epsilon = 0.0;       // h(p_{J,theta}, p0)
  double sup_init = 0.0;      // sup-norm distance of the initializer's log-density to log p0
  double eps_init = 0.0;      // Hellinger distance of the initializer
  int iterations = 0;
  bool warning = false;       // iteration cap reached
};

/// Hellinger projection of p0 onto {p_{J,theta}: theta^T 1 = 0, |theta|_inf <= M}.
/// Requires sup|log p0| < lower_c4 * M; throws InvalidInput otherwise.
Projection project_hellinger(const FamilyPtr& family, const TrueDensity& p0, double M,
                             const ProjectionOptions& opt = {});

/// Center, clip to [-M, M], repeat until centered and inside the box (at most `rounds`).
Eigen::VectorXd project_to_box(const Eigen::VectorXd& theta, double M, int rounds = 50);

/// Max of |log p_{J,theta}| over a uniform grid refined at the knots.
double sup_log_density(const LogSplineFamily& family, const Eigen::VectorXd& theta,
                       int grid_per_cell = 64);

}  // namespace logspline

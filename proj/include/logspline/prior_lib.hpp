#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "logspline/logspline_model.hpp"
#include "logspline/rng.hpp"

namespace logspline {

/// Coefficients are stored in full (length J) but the prior lives on {theta^T 1 = 0}.
/// Free coordinates are the first J-1 entries; the last is minus their sum.
Eigen::VectorXd theta_from_free(const Eigen::VectorXd& x);
Eigen::VectorXd free_from_theta(const Eigen::VectorXd& theta);

/// floor(n^{1/(2 alpha + 1)}), clamped below at q.
int dimension_schedule(double alpha, double n, int q = 1);

/// n^{-alpha/(2 alpha + 1)}, times sqrt(log n) when `log_factor`.
double rate_schedule(double alpha, double n, bool log_factor);

enum class PriorKind { kFlat, kNet };

std::string to_string(PriorKind kind);
PriorKind parse_prior_kind(const std::string& s);

/// Within-model prior on the centered box slice Theta_J = {theta^T 1 = 0, |theta|_inf <= M}.
class CoefficientPrior {
 public:
  /// Bounded log-density tilt for the flat prior; values must lie in [lo, hi].
  struct Tilt {
    std::function<double(const Eigen::VectorXd&)> g;
    double lo = 0.0;
    double hi = 0.0;
  };

  /// Uniform density on the slice (in free coordinates), optionally tilted by exp(g).
  static CoefficientPrior flat(int J, double M, std::optional<Tilt> tilt = std::nullopt,
                               std::uint64_t tilt_seed = 1);

  /// Uniform distribution on the lattice {theta in s Z^J : theta^T 1 = 0, |theta|_inf <= M}
  /// with s = spacing_factor * eps.
  static CoefficientPrior net(int J, double M, double eps, double spacing_factor = 1.0,
                              std::size_t atom_cap = 1'000'000);

  /// Net with an explicit spacing.
  static CoefficientPrior lattice(int J, double M, double spacing,
                                  std::size_t atom_cap = 1'000'000);

  PriorKind kind() const noexcept { return kind_; }
  int J() const noexcept { return J_; }
  double M() const noexcept { return M_; }
  bool discrete() const noexcept { return kind_ == PriorKind::kNet; }

  /// Lattice spacing and the largest |multiplier| per coordinate (net only).
  double spacing() const noexcept { return spacing_; }
  int half_width() const noexcept { return half_width_; }

  /// log N for nets; log of the slice volume (free coordinates) for flat priors.
  double log_atom_count() const noexcept { return log_count_; }
  double log_volume() const noexcept { return log_volume_; }
  std::size_t atom_cap() const noexcept { return atom_cap_; }

  bool in_box(const Eigen::VectorXd& theta, double tol = 1e-12) const;
  /// True for lattice points of the net (within rounding).
  bool is_atom(const Eigen::VectorXd& theta) const;

  /// Density w.r.t. Lebesgue measure on the free coordinates (flat), or atom mass (net).
  /// -inf off the support.
  double log_density(const Eigen::VectorXd& theta) const;

  Eigen::VectorXd sample(Rng& rng) const;

  /// All atoms in lexicographic order of their lattice multipliers. Throws ResourceError
  /// carrying the count if it exceeds the cap.
  std::vector<Eigen::VectorXd> atoms() const;

  /// Lattice point of the net closest to theta in the sup norm, up to one spacing.
  Eigen::VectorXd nearest_atom(const Eigen::VectorXd& theta) const;

  /// Tilt bounds as (log d, log D) per coordinate for the flat prior.
  std::pair<double, double> density_bounds() const;

 private:
  CoefficientPrior() = default;

  PriorKind kind_ = PriorKind::kFlat;
  int J_ = 0;
  double M_ = 0.0;
  double spacing_ = 0.0;
  int half_width_ = 0;
  double log_count_ = 0.0;
  double log_volume_ = 0.0;
  std::size_t atom_cap_ = 0;
  std::optional<Tilt> tilt_;
  double log_tilt_norm_ = 0.0;  // log E_uniform[exp(g)]
};

/// log of the (J-1)-dimensional volume of the slice in free coordinates, exact.
double slice_log_volume(int J, double M);

/// log #{v in {-m..m}^J : sum v = 0}.
double lattice_log_count(int J, int m);

enum class WeightKind { kConstant, kExponential, kDecreasing };

std::string to_string(WeightKind kind);
WeightKind parse_weight_kind(const std::string& s);

struct WeightScheme {
  WeightKind kind = WeightKind::kExponential;
  std::vector<double> mu;  // base measure; empty means all ones
  double C = 1.0;
};

struct ModelWeights {
  std::vector<double> log_weights;  // normalized
  std::vector<double> weights;
  bool warning = false;
  std::string message;
};

/// lambda_{n,alpha} for ascending, distinct `alphas`. Computed in log space.
ModelWeights model_weights(const WeightScheme& scheme, std::span<const double> alphas, double n,
                           bool log_factor, int q = 1);

struct PriorComponent {
  double alpha = 0.0;
  int J = 0;
  double eps = 0.0;
  FamilyPtr family;
  CoefficientPrior prior;
  double log_weight = 0.0;
  double weight = 0.0;
};

struct HierarchicalPriorSpec {
  std::vector<double> alphas{0.5, 1.0, 2.0};
  WeightScheme scheme;
  PriorKind kind = PriorKind::kNet;
  double M = 3.0;
  int q = 4;
  std::optional<bool> log_factor;  // defaults: flat -> true, net -> false
  double net_factor = 1.0;
  std::size_t atom_cap = 1'000'000;
};

class HierarchicalPrior {
 public:
  HierarchicalPrior(std::vector<PriorComponent> components, double n, bool warning,
                    std::string message);

  const std::vector<PriorComponent>& components() const noexcept { return components_; }
  const PriorComponent& operator[](std::size_t i) const { return components_.at(i); }
  std::size_t size() const noexcept { return components_.size(); }
  double n() const noexcept { return n_; }
  bool warning() const noexcept { return warning_; }
  const std::string& message() const noexcept { return message_; }

  std::size_t sample_index(Rng& rng) const;
  /// Draws alpha by weight, then theta from that component's prior.
  std::pair<std::size_t, Eigen::VectorXd> sample(Rng& rng) const;

 private:
  std::vector<PriorComponent> components_;
  double n_;
  bool warning_;
  std::string message_;
};

HierarchicalPrior assemble(const HierarchicalPriorSpec& spec, double n);

}  // namespace logspline

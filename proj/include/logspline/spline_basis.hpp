#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace logspline {

/// B-splines of order q (degree q-1) on the uniform partition of [0,1] into K cells,
/// with q-fold boundary knots. Dimension J = q + K - 1.
class SplineBasis {
 public:
  SplineBasis(int q, int K);

  int q() const noexcept { return q_; }
  int K() const noexcept { return K_; }
  int J() const noexcept { return q_ + K_ - 1; }

  /// Partition points k/K, k = 0..K.
  const std::vector<double>& breakpoints() const noexcept { return breaks_; }
  /// Full knot vector of length J + q.
  const std::vector<double>& knot_vector() const noexcept { return knots_; }

  /// Index of the first nonzero basis function at x; the nonzero ones are first..first+q-1.
  int first_index(double x) const;

  /// Writes the q values B_{first..first+q-1}(x) into `out` and returns `first`.
  /// x is not range checked.
  int eval_nonzero(double x, double* out) const noexcept;

  /// Dense vector of all J values. Throws InvalidInput for x outside [0,1].
  Eigen::VectorXd eval(double x) const;

  /// sum_j theta_j B_j(x)
  double combine(const Eigen::VectorXd& theta, double x) const;

 private:
  int q_;
  int K_;
  std::vector<double> breaks_;
  std::vector<double> knots_;
};

/// Basis with dimension J for order q (K = J - q + 1). Throws if J < q.
SplineBasis basis_for_dimension(int q, int J);

struct SupFitOptions {
  int grid_size = 0;  // 0 selects 50 * J
  int max_iter = 100;
  double tol = 1e-8;
};

struct SupFit {
  Eigen::VectorXd theta;
  double sup_error = 0.0;  // max over the fit grid
  int iterations = 0;
};

/// Near-minimax spline fit of f on a uniform grid by Lawson's iteratively reweighted
/// least squares. Throws InvalidInput if grid_size < J.
SupFit fit_supnorm(const SplineBasis& basis, const std::function<double(double)>& f,
                   const SupFitOptions& opt = {});

/// theta minus its mean.
Eigen::VectorXd centered(const Eigen::VectorXd& theta);

}  // namespace logspline

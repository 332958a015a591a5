#pragma once

#include <functional>
#include <span>
#include <vector>

namespace logspline {

struct QuadratureTolerances {
  double density_mass = 1e-6;
};

/// Composite Gauss-Legendre rule on [0,1], `order` nodes per segment.
class QuadratureRule {
 public:
  QuadratureRule() = default;

  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& segments() const noexcept { return segments_; }
  int order() const noexcept { return order_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend QuadratureRule make_rule(std::span<const double> knots, int order);

  std::vector<double> nodes_;
  std::vector<double> weights_;
  std::vector<double> segments_;
  int order_ = 0;
};

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
void gauss_legendre(int order, std::vector<double>& x, std::vector<double>& w);

/// Throws InvalidInput unless knots are strictly increasing from 0 to 1 and order >= 2.
QuadratureRule make_rule(std::span<const double> knots, int order = 8);

/// Splits every interval evenly so the result has at least `min_segments` segments.
std::vector<double> refine_segments(std::span<const double> knots, int min_segments = 64);

/// {0, 1/K, ..., 1}
std::vector<double> uniform_knots(int K);

/// Sorted union of several breakpoint sets, with near-duplicates (within 1e-14) collapsed.
std::vector<double> merge_breakpoints(std::span<const double> a, std::span<const double> b);

/// sum_i w_i f(x_i). Throws NumericDomain naming the node if f is non-finite there.
double integrate(const QuadratureRule& rule, const std::function<double(double)>& f);

class InverseCdfTable {
 public:
  InverseCdfTable(std::vector<double> grid, std::vector<double> cdf);

  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<double>& cdf() const noexcept { return cdf_; }

  /// x with CDF(x) = u, by linear interpolation on the table.
  double quantile(double u) const;
  /// Interpolated CDF at x.
  double cdf_at(double x) const;

 private:
  std::vector<double> grid_;
  std::vector<double> cdf_;
};

/// Cumulative integrals of `density` on a uniform grid of `grid_size` cells, refined at the
/// rule's segment boundaries. Cell integrals use a Gauss rule of the same order as `rule`.
InverseCdfTable build_inverse_cdf(const std::function<double(double)>& density,
                                  const QuadratureRule& rule, int grid_size = 4096,
                                  const QuadratureTolerances& tol = {});

}  // namespace logspline

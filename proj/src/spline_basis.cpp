#include "logspline/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "logspline/error.hpp"

namespace logspline {

SplineBasis::SplineBasis(int q, int K) : q_(q), K_(K) {
  if (q < 1 || q > 31) throw InvalidInput(fmt::format("SplineBasis: order q={} outside [1, 31]", q));
  if (K < 1) throw InvalidInput(fmt::format("SplineBasis: resolution K={} must be >= 1", K));
  breaks_.resize(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k) breaks_[k] = static_cast<double>(k) / K;
  breaks_.back() = 1.0;
  knots_.reserve(static_cast<std::size_t>(J() + q));
  for (int i = 0; i < q; ++i) knots_.push_back(0.0);
  for (int k = 1; k < K; ++k) knots_.push_back(breaks_[k]);
  for (int i = 0; i < q; ++i) knots_.push_back(1.0);
}

int SplineBasis::first_index(double x) const {
  double buf[32];
  return eval_nonzero(x, buf);
}

int SplineBasis::eval_nonzero(double x, double* out) const noexcept {
  int s = 0;
  {
    const double f = std::floor(x * K_);
    if (f >= K_ - 1)
      s = K_ - 1;
    else if (f > 0.0)
      s = static_cast<int>(f);
  }
  // floor(x*K) can land one cell off next to a breakpoint.
  if (s > 0 && x < breaks_[s]) --s;
  if (s < K_ - 1 && x >= breaks_[s + 1]) ++s;

  const int p = q_ - 1;
  const int span = s + p;
  double left[32];
  double right[32];
  out[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knots_[span + 1 - j];
    right[j] = knots_[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    out[j] = saved;
  }
  return s;
}

Eigen::VectorXd SplineBasis::eval(double x) const {
  if (!(x >= 0.0 && x <= 1.0))
    throw InvalidInput(fmt::format("eval_basis: x={} outside [0,1]", x));
  Eigen::VectorXd v = Eigen::VectorXd::Zero(J());
  double buf[32];
  const int first = eval_nonzero(x, buf);
  for (int j = 0; j < q_; ++j) v[first + j] = buf[j];
  return v;
}

double SplineBasis::combine(const Eigen::VectorXd& theta, double x) const {
  double buf[32];
  const int first = eval_nonzero(x, buf);
  double acc = 0.0;
  for (int j = 0; j < q_; ++j) acc += theta[first + j] * buf[j];
  return acc;
}

SplineBasis basis_for_dimension(int q, int J) {
  if (J < q) throw InvalidInput(fmt::format("dimension J={} smaller than order q={}", J, q));
  return SplineBasis(q, J - q + 1);
}

SupFit fit_supnorm(const SplineBasis& basis, const std::function<double(double)>& f,
                   const SupFitOptions& opt) {
  const int J = basis.J();
  const int q = basis.q();
  const int G = opt.grid_size > 0 ? opt.grid_size : 50 * J;
  if (G < J) throw InvalidInput(fmt::format("fit_supnorm: grid_size {} < J={}", G, J));

  std::vector<int> first(G);
  std::vector<double> vals(static_cast<std::size_t>(G) * q);
  Eigen::VectorXd fv(G);
  double fmax = 0.0;
  for (int i = 0; i < G; ++i) {
    const double x = G == 1 ? 0.5 : static_cast<double>(i) / (G - 1);
    first[i] = basis.eval_nonzero(x, &vals[static_cast<std::size_t>(i) * q]);
    fv[i] = f(x);
    if (!std::isfinite(fv[i]))
      throw InvalidInput(fmt::format("fit_supnorm: f is not finite at x={:.17g}", x));
    fmax = std::max(fmax, std::abs(fv[i]));
  }

  std::vector<double> w(G, 1.0 / G);
  std::vector<double> resid(G);
  SupFit best;
  best.sup_error = std::numeric_limits<double>::infinity();
  double prev = std::numeric_limits<double>::infinity();
  const double floor_w = 1e-14 / G;
  const double exact_tol = 1e-14 * (1.0 + fmax);

  for (int it = 0; it < std::max(opt.max_iter, 1); ++it) {
    Eigen::MatrixXd N = Eigen::MatrixXd::Zero(J, J);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(J);
    for (int i = 0; i < G; ++i) {
      const double wi = std::max(w[i], floor_w);
      const double* a = &vals[static_cast<std::size_t>(i) * q];
      const int f0 = first[i];
      for (int r = 0; r < q; ++r) {
        rhs[f0 + r] += wi * a[r] * fv[i];
        for (int c = 0; c < q; ++c) N(f0 + r, f0 + c) += wi * a[r] * a[c];
      }
    }
    const Eigen::VectorXd theta = N.ldlt().solve(rhs);

    double err = 0.0;
    double total = 0.0;
    for (int i = 0; i < G; ++i) {
      const double* a = &vals[static_cast<std::size_t>(i) * q];
      double s = 0.0;
      for (int r = 0; r < q; ++r) s += theta[first[i] + r] * a[r];
      resid[i] = std::abs(s - fv[i]);
      err = std::max(err, resid[i]);
      total += w[i] * resid[i];
    }
    if (err < best.sup_error) {
      best.sup_error = err;
      best.theta = theta;
      best.iterations = it + 1;
    }
    if (err <= exact_tol || total <= 0.0 || std::abs(prev - err) < opt.tol) break;
    prev = err;
    for (int i = 0; i < G; ++i) w[i] = w[i] * resid[i] / total;
  }
  return best;
}

Eigen::VectorXd centered(const Eigen::VectorXd& theta) {
  if (theta.size() == 0) return theta;
  return theta.array() - theta.mean();
}

}  // namespace logspline

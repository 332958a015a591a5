#include "logspline/simd/kernels.hpp"

#include <cmath>
#include <limits>

namespace logspline::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void banded_matvec_scalar(const double* theta, const std::int64_t* first, const double* values,
                          int q, std::size_t n, double* out) {
  for (std::size_t k = 0; k < n; ++k) {
    const double* t = theta + first[k];
    double acc = 0.0;
    for (int j = 0; j < q; ++j) acc += t[j] * values[static_cast<std::size_t>(j) * n + k];
    out[k] = acc;
  }
}

void exp_shift_scalar(const double* v, double shift, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(v[i] - shift);
}

double weighted_exp_sum_scalar(const double* w, const double* v, double shift, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += w[i] * std::exp(v[i] - shift);
  return acc;
}

double hellinger_sq_scalar(const double* w, const double* p, const double* q, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    acc += w[i] * d * d;
  }
  return acc;
}

double log_sum_exp_scalar(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(v[i] - m);
  return m + std::log(acc);
}

}  // namespace

const KernelTable& scalar_kernels() noexcept {
  static const KernelTable table{Isa::kScalar,        "scalar",
                                 dot_scalar,          banded_matvec_scalar,
                                 exp_shift_scalar,    weighted_exp_sum_scalar,
                                 hellinger_sq_scalar, log_sum_exp_scalar};
  return table;
}

}  // namespace logspline::simd

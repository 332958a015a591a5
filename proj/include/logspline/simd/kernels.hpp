#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

// Data-parallel inner loops shared by quadrature, normalizers and distances.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2+FMA
// variant. The variant is picked once at runtime from CPUID; setting the environment
// variable LOGSPLINE_SIMD=scalar forces the reference path. Variants agree to within a
// few ulps per element; summation order differs, so reductions are not bit-identical
// across variants (but are deterministic for a fixed variant).

namespace logspline::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;

  /// sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);

  /// out[k] = sum_{j<q} theta[first[k] + j] * values[j * n + k]   (values stored j-major)
  void (*banded_matvec)(const double* theta, const std::int64_t* first, const double* values,
                        int q, std::size_t n, double* out);

  /// out[i] = exp(v[i] - shift)
  void (*exp_shift)(const double* v, double shift, double* out, std::size_t n);

  /// sum_i w[i] * exp(v[i] - shift)
  double (*weighted_exp_sum)(const double* w, const double* v, double shift, std::size_t n);

  /// sum_i w[i] * (sqrt(p[i]) - sqrt(q[i]))^2
  double (*hellinger_sq)(const double* w, const double* p, const double* q, std::size_t n);

  /// max_i v[i] + log sum_i exp(v[i] - max); -inf for empty input or all -inf
  double (*log_sum_exp)(const double* v, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;

/// Returns nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_kernels() noexcept;

/// The table selected for this process (CPUID + LOGSPLINE_SIMD override).
const KernelTable& kernels() noexcept;

/// Overrides the process-wide selection; intended for tests and benchmarks.
void select_isa(Isa isa);

// Convenience wrappers over the selected table.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return kernels().dot(a.data(), b.data(), a.size());
}
inline double weighted_exp_sum(std::span<const double> w, std::span<const double> v,
                               double shift) {
  return kernels().weighted_exp_sum(w.data(), v.data(), shift, w.size());
}
inline double hellinger_sq(std::span<const double> w, std::span<const double> p,
                           std::span<const double> q) {
  return kernels().hellinger_sq(w.data(), p.data(), q.data(), w.size());
}
inline double log_sum_exp(std::span<const double> v) {
  return kernels().log_sum_exp(v.data(), v.size());
}

}  // namespace logspline::simd

#include "logspline/simd/kernels.hpp"

#include <cmath>
#include <limits>

#if defined(LOGSPLINE_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))
#include <immintrin.h>

#define LS_AVX2 __attribute__((target("avx2,fma")))

namespace logspline::simd {
namespace {

LS_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

LS_AVX2 inline double hmax(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d m = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

// 2^k for integral k in [-1022, 1023] held in a double lane.
LS_AVX2 inline __m256d pow2i(__m256d k) {
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 1.5 * 2^52
  __m256i bits = _mm256_castpd_si256(_mm256_add_pd(k, magic));
  bits = _mm256_sub_epi64(bits, _mm256_castpd_si256(magic));
  bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
  return _mm256_castsi256_pd(_mm256_slli_epi64(bits, 52));
}

// exp with Cody-Waite reduction and a degree-13 Taylor polynomial on |r| <= ln2/2.
LS_AVX2 inline __m256d exp4(__m256d x) {
  const __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  __m256d xc = _mm256_max_pd(x, _mm256_set1_pd(-746.0));
  xc = _mm256_min_pd(xc, _mm256_set1_pd(710.0));

  const __m256d k = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(6.93147180369123816490e-01), xc);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(1.90821492927058770002e-10), r);

  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // Split the scale so subnormal results and overflow to +inf come out right.
  const __m256d k1 = _mm256_floor_pd(_mm256_mul_pd(k, _mm256_set1_pd(0.5)));
  const __m256d k2 = _mm256_sub_pd(k, k1);
  const __m256d y = _mm256_mul_pd(_mm256_mul_pd(p, pow2i(k1)), pow2i(k2));
  return _mm256_blendv_pd(y, x, nan_mask);
}

LS_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

LS_AVX2 void banded_matvec_avx2(const double* theta, const std::int64_t* first,
                                const double* values, int q, std::size_t n, double* out) {
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256i idx = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(first + k));
    __m256d acc = _mm256_setzero_pd();
    for (int j = 0; j < q; ++j) {
      const __m256d t = _mm256_i64gather_pd(theta + j, idx, 8);
      acc = _mm256_fmadd_pd(t, _mm256_loadu_pd(values + static_cast<std::size_t>(j) * n + k), acc);
    }
    _mm256_storeu_pd(out + k, acc);
  }
  for (; k < n; ++k) {
    const double* t = theta + first[k];
    double acc = 0.0;
    for (int j = 0; j < q; ++j) acc += t[j] * values[static_cast<std::size_t>(j) * n + k];
    out[k] = acc;
  }
}

LS_AVX2 void exp_shift_avx2(const double* v, double shift, double* out, std::size_t n) {
  const __m256d s = _mm256_set1_pd(shift);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, exp4(_mm256_sub_pd(_mm256_loadu_pd(v + i), s)));
  if (i < n) {
    alignas(32) double buf[4] = {0, 0, 0, 0};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = v[j] - shift;
    _mm256_store_pd(buf, exp4(_mm256_load_pd(buf)));
    for (std::size_t j = i; j < n; ++j) out[j] = buf[j - i];
  }
}

LS_AVX2 double weighted_exp_sum_avx2(const double* w, const double* v, double shift,
                                     std::size_t n) {
  const __m256d s = _mm256_set1_pd(shift);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = exp4(_mm256_sub_pd(_mm256_loadu_pd(v + i), s));
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), e, acc);
  }
  if (i < n) {
    alignas(32) double bv[4] = {0, 0, 0, 0};
    alignas(32) double bw[4] = {0, 0, 0, 0};
    for (std::size_t j = i; j < n; ++j) {
      bv[j - i] = v[j] - shift;
      bw[j - i] = w[j];
    }
    acc = _mm256_fmadd_pd(_mm256_load_pd(bw), exp4(_mm256_load_pd(bv)), acc);
  }
  return hsum(acc);
}

LS_AVX2 double hellinger_sq_avx2(const double* w, const double* p, const double* q,
                                 std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_sqrt_pd(_mm256_loadu_pd(p + i)),
                                    _mm256_sqrt_pd(_mm256_loadu_pd(q + i)));
    acc = _mm256_fmadd_pd(_mm256_mul_pd(d, d), _mm256_loadu_pd(w + i), acc);
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    tail += w[i] * d * d;
  }
  return hsum(acc) + tail;
}

LS_AVX2 double log_sum_exp_avx2(const double* v, std::size_t n) {
  const double ninf = -std::numeric_limits<double>::infinity();
  __m256d mv = _mm256_set1_pd(ninf);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) mv = _mm256_max_pd(mv, _mm256_loadu_pd(v + i));
  double m = hmax(mv);
  for (; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;

  const __m256d s = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, exp4(_mm256_sub_pd(_mm256_loadu_pd(v + i), s)));
  double total = hsum(acc);
  for (; i < n; ++i) total += std::exp(v[i] - m);
  return m + std::log(total);
}

}  // namespace

const KernelTable* avx2_kernels() noexcept {
  static const KernelTable table{Isa::kAvx2,        "avx2",
                                 dot_avx2,          banded_matvec_avx2,
                                 exp_shift_avx2,    weighted_exp_sum_avx2,
                                 hellinger_sq_avx2, log_sum_exp_avx2};
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &table : nullptr;
}

}  // namespace logspline::simd

#else

namespace logspline::simd {
const KernelTable* avx2_kernels() noexcept { return nullptr; }
}  // namespace logspline::simd

#endif

#pragma once

// Batched Chambers-Mallows-Stuck kernel. With OCCLAB_HAVE_LIBMVEC the AVX2
// path calls glibc's vector math entry points directly; otherwise (or on CPUs
// without AVX2) a scalar loop is used.

#include <cmath>
#include <cstddef>
#include <numbers>

#if defined(OCCLAB_HAVE_LIBMVEC) && defined(__x86_64__) && defined(__GNUC__)
#include <immintrin.h>
#define OCCLAB_SIMD_CMS 1
extern "C" {
__m256d _ZGVdN4v_sin(__m256d);
__m256d _ZGVdN4v_cos(__m256d);
__m256d _ZGVdN4v_log(__m256d);
__m256d _ZGVdN4v_exp(__m256d);
}
#endif

namespace occlab::detail {

// u1, u2 uniform on (0,1). Symmetric stable, unit scale, alpha != 1.
inline void cms_scalar(const double* u1, const double* u2, double* out, std::size_t n, double a) {
  const double ia = 1.0 / a, b = (1.0 - a) / a;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::numbers::pi * (u1[i] - 0.5);
    const double w = -std::log(u2[i]);
    out[i] = std::sin(a * v) / std::pow(std::cos(v), ia) * std::pow(std::cos((1.0 - a) * v) / w, b);
  }
}

#ifdef OCCLAB_SIMD_CMS
__attribute__((target("avx2,fma"))) inline void cms_avx2(const double* u1, const double* u2, double* out,
                                                           std::size_t n, double a) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d neg_ia = _mm256_set1_pd(-1.0 / a);
  const __m256d b = _mm256_set1_pd((1.0 - a) / a);
  const __m256d pi = _mm256_set1_pd(std::numbers::pi);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d oma = _mm256_set1_pd(1.0 - a);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_mul_pd(pi, _mm256_sub_pd(_mm256_loadu_pd(u1 + i), half));
    const __m256d w = _mm256_sub_pd(zero, _ZGVdN4v_log(_mm256_loadu_pd(u2 + i)));
    const __m256d lc = _ZGVdN4v_log(_ZGVdN4v_cos(v));
    const __m256d lr = _mm256_sub_pd(_ZGVdN4v_log(_ZGVdN4v_cos(_mm256_mul_pd(oma, v))), _ZGVdN4v_log(w));
    const __m256d e = _mm256_fmadd_pd(neg_ia, lc, _mm256_mul_pd(b, lr));
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_ZGVdN4v_sin(_mm256_mul_pd(va, v)), _ZGVdN4v_exp(e)));
  }
  if (i < n) cms_scalar(u1 + i, u2 + i, out + i, n - i, a);
}
#endif

inline bool simd_cms_available() noexcept {
#ifdef OCCLAB_SIMD_CMS
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

inline void cms_batch(const double* u1, const double* u2, double* out, std::size_t n, double a) {
#ifdef OCCLAB_SIMD_CMS
  if (simd_cms_available()) {
    cms_avx2(u1, u2, out, n, a);
    return;
  }
#endif
  cms_scalar(u1, u2, out, n, a);
}

}  // namespace occlab::detail

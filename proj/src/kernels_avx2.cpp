#include "qbex/kernels.hpp"

#if defined(QBEX_AVX2_TRANSLATION_UNIT)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace qbex::kernels::detail {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

inline double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_max_sd(lo, swapped));
}

inline double hmin(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_min_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_min_sd(lo, swapped));
}

// exp for four doubles: x = k ln2 + r, exp(x) = 2^k * P(r) with a degree-13
// Taylor expansion on |r| <= ln2/2. Arguments are clamped to +-708 so the
// 2^k reconstruction stays in the normal range.
inline __m256d exp4(__m256d x) {
    const __m256d max_arg = _mm256_set1_pd(708.0);
    const __m256d min_arg = _mm256_set1_pd(-708.0);
    x = _mm256_min_pd(max_arg, _mm256_max_pd(min_arg, x));

    const __m256d inv_ln2 = _mm256_set1_pd(1.4426950408889634074);
    const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
    const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);

    __m256d k = _mm256_round_pd(_mm256_mul_pd(x, inv_ln2),
                                _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(k, ln2_hi, x);
    r = _mm256_fnmadd_pd(k, ln2_lo, r);

    __m256d p = _mm256_set1_pd(1.0 / 6227020800.0); // 1/13!
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

    __m128i k32 = _mm256_cvtpd_epi32(k);
    __m256i k64 = _mm256_cvtepi32_epi64(k32);
    __m256i pow2 = _mm256_slli_epi64(_mm256_add_epi64(k64, _mm256_set1_epi64x(1023)), 52);
    return _mm256_mul_pd(p, _mm256_castsi256_pd(pow2));
}

} // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    }
    double result = hsum(acc);
    for (; i < n; ++i) result += a[i] * b[i];
    return result;
}

double gather_dot_avx2(const double* values, const std::int32_t* idx, const double* weights,
                       std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m128i ix = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i));
        __m256d gathered = _mm256_i32gather_pd(values, ix, 8);
        acc = _mm256_fmadd_pd(gathered, _mm256_loadu_pd(weights + i), acc);
    }
    double result = hsum(acc);
    for (; i < n; ++i) result += values[idx[i]] * weights[i];
    return result;
}

double max_abs_diff_avx2(const double* a, const double* b, std::size_t n) {
    const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_max_pd(acc, _mm256_and_pd(d, abs_mask));
    }
    double result = hmax(acc);
    for (; i < n; ++i) result = std::max(result, std::fabs(a[i] - b[i]));
    return result;
}

double reduce_max_avx2(const double* a, std::size_t n) {
    double result = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    if (n >= 4) {
        __m256d acc = _mm256_loadu_pd(a);
        for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
        result = hmax(acc);
    }
    for (; i < n; ++i) result = std::max(result, a[i]);
    return result;
}

double reduce_min_avx2(const double* a, std::size_t n) {
    double result = std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    if (n >= 4) {
        __m256d acc = _mm256_loadu_pd(a);
        for (i = 4; i + 4 <= n; i += 4) acc = _mm256_min_pd(acc, _mm256_loadu_pd(a + i));
        result = hmin(acc);
    }
    for (; i < n; ++i) result = std::min(result, a[i]);
    return result;
}

void clamp_avx2(double* x, const double* lo, const double* hi, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_max_pd(_mm256_loadu_pd(lo + i), _mm256_loadu_pd(x + i));
        v = _mm256_min_pd(_mm256_loadu_pd(hi + i), v);
        _mm256_storeu_pd(x + i, v);
    }
    for (; i < n; ++i) x[i] = std::min(hi[i], std::max(lo[i], x[i]));
}

double clipped_scale_sum_avx2(const double* w, const double* lo, const double* hi, double t,
                              std::size_t n) {
    const __m256d tv = _mm256_set1_pd(t);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d p = _mm256_mul_pd(_mm256_loadu_pd(w + i), tv);
        p = _mm256_max_pd(_mm256_loadu_pd(lo + i), p);
        p = _mm256_min_pd(_mm256_loadu_pd(hi + i), p);
        acc = _mm256_add_pd(acc, p);
    }
    double result = hsum(acc);
    for (; i < n; ++i) result += std::min(hi[i], std::max(lo[i], w[i] * t));
    return result;
}

void clipped_scale_store_avx2(double* out, const double* w, const double* lo, const double* hi,
                              double t, std::size_t n) {
    const __m256d tv = _mm256_set1_pd(t);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d p = _mm256_mul_pd(_mm256_loadu_pd(w + i), tv);
        p = _mm256_max_pd(_mm256_loadu_pd(lo + i), p);
        p = _mm256_min_pd(_mm256_loadu_pd(hi + i), p);
        _mm256_storeu_pd(out + i, p);
    }
    for (; i < n; ++i) out[i] = std::min(hi[i], std::max(lo[i], w[i] * t));
}

void exp_weights_avx2(double* out, const double* ref, const double* v, double scale, double shift,
                      std::size_t n) {
    const __m256d sv = _mm256_set1_pd(scale);
    const __m256d sh = _mm256_set1_pd(shift);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d arg = _mm256_fmadd_pd(_mm256_loadu_pd(v + i), sv, sh);
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(ref + i), exp4(arg)));
    }
    for (; i < n; ++i) out[i] = ref[i] * std::exp(v[i] * scale + shift);
}

} // namespace qbex::kernels::detail

#endif // QBEX_AVX2_TRANSLATION_UNIT

#include "qbex/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>

namespace qbex::kernels {

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double gather_dot_scalar(const double* values, const std::int32_t* idx, const double* weights,
                         std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += values[idx[i]] * weights[i];
    return acc;
}

double max_abs_diff_scalar(const double* a, const double* b, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

double reduce_max_scalar(const double* a, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, a[i]);
    return m;
}

double reduce_min_scalar(const double* a, std::size_t n) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::min(m, a[i]);
    return m;
}

void clamp_scalar(double* x, const double* lo, const double* hi, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::min(hi[i], std::max(lo[i], x[i]));
}

double clipped_scale_sum_scalar(const double* w, const double* lo, const double* hi, double t,
                                std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::min(hi[i], std::max(lo[i], w[i] * t));
    return acc;
}

void clipped_scale_store_scalar(double* out, const double* w, const double* lo, const double* hi,
                                double t, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::min(hi[i], std::max(lo[i], w[i] * t));
}

void exp_weights_scalar(double* out, const double* ref, const double* v, double scale,
                        double shift, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = ref[i] * std::exp(v[i] * scale + shift);
}

} // namespace detail

namespace {

struct KernelTable {
    double (*dot)(const double*, const double*, std::size_t);
    double (*gather_dot)(const double*, const std::int32_t*, const double*, std::size_t);
    double (*max_abs_diff)(const double*, const double*, std::size_t);
    double (*reduce_max)(const double*, std::size_t);
    double (*reduce_min)(const double*, std::size_t);
    void (*clamp)(double*, const double*, const double*, std::size_t);
    double (*clipped_scale_sum)(const double*, const double*, const double*, double, std::size_t);
    void (*clipped_scale_store)(double*, const double*, const double*, const double*, double,
                                std::size_t);
    void (*exp_weights)(double*, const double*, const double*, double, double, std::size_t);
    Isa isa;
};

constexpr KernelTable scalar_table{
    detail::dot_scalar,          detail::gather_dot_scalar,
    detail::max_abs_diff_scalar, detail::reduce_max_scalar,
    detail::reduce_min_scalar,   detail::clamp_scalar,
    detail::clipped_scale_sum_scalar, detail::clipped_scale_store_scalar,
    detail::exp_weights_scalar,  Isa::Scalar};

#if defined(QBEX_AVX2_TRANSLATION_UNIT)
constexpr KernelTable avx2_table{
    detail::dot_avx2,          detail::gather_dot_avx2,
    detail::max_abs_diff_avx2, detail::reduce_max_avx2,
    detail::reduce_min_avx2,   detail::clamp_avx2,
    detail::clipped_scale_sum_avx2, detail::clipped_scale_store_avx2,
    detail::exp_weights_avx2,  Isa::Avx2};
#endif

bool cpu_has_avx2() {
#if defined(QBEX_AVX2_TRANSLATION_UNIT) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* select_table() {
#if defined(QBEX_AVX2_TRANSLATION_UNIT)
    const char* env = std::getenv("QBEX_KERNELS");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return &scalar_table;
    if (cpu_has_avx2()) return &avx2_table;
#endif
    return &scalar_table;
}

const KernelTable* active = select_table();

} // namespace

Isa active_isa() { return active->isa; }

bool avx2_available() { return cpu_has_avx2(); }

void force_isa(Isa isa) {
#if defined(QBEX_AVX2_TRANSLATION_UNIT)
    if (isa == Isa::Avx2 && cpu_has_avx2()) {
        active = &avx2_table;
        return;
    }
#endif
    (void)isa;
    active = &scalar_table;
}

double dot(const double* a, const double* b, std::size_t n) { return active->dot(a, b, n); }

double gather_dot(const double* values, const std::int32_t* idx, const double* weights,
                  std::size_t n) {
    return active->gather_dot(values, idx, weights, n);
}

double max_abs_diff(const double* a, const double* b, std::size_t n) {
    return active->max_abs_diff(a, b, n);
}

double reduce_max(const double* a, std::size_t n) { return active->reduce_max(a, n); }

double reduce_min(const double* a, std::size_t n) { return active->reduce_min(a, n); }

void clamp(double* x, const double* lo, const double* hi, std::size_t n) {
    active->clamp(x, lo, hi, n);
}

double clipped_scale_sum(const double* w, const double* lo, const double* hi, double t,
                         std::size_t n) {
    return active->clipped_scale_sum(w, lo, hi, t, n);
}

void clipped_scale_store(double* out, const double* w, const double* lo, const double* hi,
                         double t, std::size_t n) {
    active->clipped_scale_store(out, w, lo, hi, t, n);
}

void exp_weights(double* out, const double* ref, const double* v, double scale, double shift,
                 std::size_t n) {
    active->exp_weights(out, ref, v, scale, shift, n);
}

} // namespace qbex::kernels

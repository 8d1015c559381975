#pragma once

#include <cstddef>
#include <cstdint>

// Arithmetic inner loops shared by the solvers. Every kernel has a scalar
// reference implementation and, on x86-64 with AVX2+FMA, a vectorized variant
// selected once at startup. The scalar and SIMD paths are equivalence-tested;
// within one process the selected path never changes, so results stay
// reproducible for a fixed machine and binary.
namespace qbex::kernels {

enum class Isa { Scalar, Avx2 };

/// Instruction set the dispatcher resolved to (honors QBEX_KERNELS=scalar).
Isa active_isa();

/// True when the binary carries AVX2 kernels and the CPU supports them.
bool avx2_available();

/// Test hook: pin dispatch to one implementation. Not thread-safe; call
/// before any worker threads start.
void force_isa(Isa isa);

/// Dot product of two contiguous vectors.
double dot(const double* a, const double* b, std::size_t n);

/// Sparse inner product: sum_i values[idx[i]] * weights[i].
double gather_dot(const double* values, const std::int32_t* idx, const double* weights,
                  std::size_t n);

/// Supremum-norm distance between two vectors (0 for n = 0).
double max_abs_diff(const double* a, const double* b, std::size_t n);

/// Maximum / minimum element (-inf / +inf for n = 0).
double reduce_max(const double* a, std::size_t n);
double reduce_min(const double* a, std::size_t n);

/// Elementwise x <- min(hi, max(lo, x)).
void clamp(double* x, const double* lo, const double* hi, std::size_t n);

/// sum_i min(hi[i], max(lo[i], w[i] * t)) -- the inner evaluation of the
/// dual bisection in the KL-regularized row problem.
double clipped_scale_sum(const double* w, const double* lo, const double* hi, double t,
                         std::size_t n);

/// out[i] = min(hi[i], max(lo[i], w[i] * t)).
void clipped_scale_store(double* out, const double* w, const double* lo, const double* hi,
                         double t, std::size_t n);

/// out[i] = ref[i] * exp(v[i] * scale + shift).
void exp_weights(double* out, const double* ref, const double* v, double scale, double shift,
                 std::size_t n);

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
double gather_dot_scalar(const double* values, const std::int32_t* idx, const double* weights,
                         std::size_t n);
double max_abs_diff_scalar(const double* a, const double* b, std::size_t n);
double reduce_max_scalar(const double* a, std::size_t n);
double reduce_min_scalar(const double* a, std::size_t n);
void clamp_scalar(double* x, const double* lo, const double* hi, std::size_t n);
double clipped_scale_sum_scalar(const double* w, const double* lo, const double* hi, double t,
                                std::size_t n);
void clipped_scale_store_scalar(double* out, const double* w, const double* lo, const double* hi,
                                double t, std::size_t n);
void exp_weights_scalar(double* out, const double* ref, const double* v, double scale,
                        double shift, std::size_t n);

#if defined(QBEX_AVX2_TRANSLATION_UNIT)
double dot_avx2(const double* a, const double* b, std::size_t n);
double gather_dot_avx2(const double* values, const std::int32_t* idx, const double* weights,
                       std::size_t n);
double max_abs_diff_avx2(const double* a, const double* b, std::size_t n);
double reduce_max_avx2(const double* a, std::size_t n);
double reduce_min_avx2(const double* a, std::size_t n);
void clamp_avx2(double* x, const double* lo, const double* hi, std::size_t n);
double clipped_scale_sum_avx2(const double* w, const double* lo, const double* hi, double t,
                              std::size_t n);
void clipped_scale_store_avx2(double* out, const double* w, const double* lo, const double* hi,
                              double t, std::size_t n);
void exp_weights_avx2(double* out, const double* ref, const double* v, double scale, double shift,
                      std::size_t n);
#endif

} // namespace detail

} // namespace qbex::kernels

#pragma once

#include <cstddef>
#include <string_view>

namespace mmfusion::kernels {

enum class Backend { scalar, avx2, neon };

// Backend in use for this process: MMFUSION_KERNELS=scalar|avx2|neon if set
// and supported, otherwise the widest instruction set the CPU offers.
Backend active_backend();
bool backend_available(Backend b);
std::string_view backend_name(Backend b);

// Pin dispatch to one backend; throws std::invalid_argument if unavailable.
// Not safe to call concurrently with kernel invocations.
void force_backend(Backend b);
void reset_backend();

// y[i] += alpha * x[i].  Every backend evaluates each element as one multiply
// followed by one add (no FMA), so axpy and scale are bit-identical across
// backends.
void axpy(std::size_t n, double alpha, const double* x, double* y);

// x[i] *= alpha
void scale(std::size_t n, double alpha, double* x);

// sum_i a[i]*b[i].  The scalar backend accumulates strictly left to right;
// SIMD backends use lane partial sums, so agreement is to rounding only.
double dot(std::size_t n, const double* a, const double* b);

namespace detail {

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y);
void scale_scalar(std::size_t n, double alpha, double* x);
double dot_scalar(std::size_t n, const double* a, const double* b);

#if defined(__x86_64__) || defined(__i386__)
void axpy_avx2(std::size_t n, double alpha, const double* x, double* y);
void scale_avx2(std::size_t n, double alpha, double* x);
double dot_avx2(std::size_t n, const double* a, const double* b);
#endif

#if defined(__aarch64__)
void axpy_neon(std::size_t n, double alpha, const double* x, double* y);
void scale_neon(std::size_t n, double alpha, double* x);
double dot_neon(std::size_t n, const double* a, const double* b);
#endif

}  // namespace detail

}  // namespace mmfusion::kernels

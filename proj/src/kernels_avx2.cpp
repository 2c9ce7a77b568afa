// AVX2 kernel variants; this file is compiled with -mavx2 only, and the
// dispatcher routes here only after a runtime cpuid check.

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include "mmfusion/kernels.hpp"

namespace mmfusion::kernels::detail {

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d vy = _mm256_loadu_pd(y + i);
        // mul then add (no fma) so results match the scalar kernel bitwise
        vy = _mm256_add_pd(vy, _mm256_mul_pd(va, vx));
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void scale_avx2(std::size_t n, double alpha, double* x) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
    }
    for (; i < n; ++i) {
        x[i] *= alpha;
    }
}

double dot_avx2(std::size_t n, const double* a, const double* b) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vb = _mm256_loadu_pd(b + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
    }
    double lanes[4];
    _mm256_storeu_pd(lanes, acc);
    double sum = ((lanes[0] + lanes[1]) + lanes[2]) + lanes[3];
    for (; i < n; ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

}  // namespace mmfusion::kernels::detail

#endif  // x86

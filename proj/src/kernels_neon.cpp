// NEON kernel variants for aarch64, where NEON is baseline and needs no
// runtime feature check.

#if defined(__aarch64__)

#include <arm_neon.h>

#include "mmfusion/kernels.hpp"

namespace mmfusion::kernels::detail {

void axpy_neon(std::size_t n, double alpha, const double* x, double* y) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t vx = vld1q_f64(x + i);
        float64x2_t vy = vld1q_f64(y + i);
        // mul then add (no fused form) to match the scalar kernel bitwise
        vy = vaddq_f64(vy, vmulq_f64(va, vx));
        vst1q_f64(y + i, vy);
    }
    for (; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void scale_neon(std::size_t n, double alpha, double* x) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(x + i, vmulq_f64(vld1q_f64(x + i), va));
    }
    for (; i < n; ++i) {
        x[i] *= alpha;
    }
}

double dot_neon(std::size_t n, const double* a, const double* b) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    double sum = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

}  // namespace mmfusion::kernels::detail

#endif  // aarch64

#include "mmfusion/kernels.hpp"

namespace mmfusion::kernels::detail {

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void scale_scalar(std::size_t n, double alpha, double* x) {
    for (std::size_t i = 0; i < n; ++i) {
        x[i] *= alpha;
    }
}

double dot_scalar(std::size_t n, const double* a, const double* b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

}  // namespace mmfusion::kernels::detail

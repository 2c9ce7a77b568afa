#include "mmfusion/kernels.hpp"

#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace mmfusion::kernels {

namespace {

struct Table {
    Backend id;
    void (*axpy)(std::size_t, double, const double*, double*);
    void (*scale)(std::size_t, double, double*);
    double (*dot)(std::size_t, const double*, const double*);
};

Table table_for(Backend b) {
    switch (b) {
#if defined(__x86_64__) || defined(__i386__)
        case Backend::avx2:
            return {Backend::avx2, detail::axpy_avx2, detail::scale_avx2, detail::dot_avx2};
#endif
#if defined(__aarch64__)
        case Backend::neon:
            return {Backend::neon, detail::axpy_neon, detail::scale_neon, detail::dot_neon};
#endif
        default:
            return {Backend::scalar, detail::axpy_scalar, detail::scale_scalar,
                    detail::dot_scalar};
    }
}

Backend detect() {
#if defined(__x86_64__) || defined(__i386__)
    if (__builtin_cpu_supports("avx2")) {
        return Backend::avx2;
    }
#elif defined(__aarch64__)
    return Backend::neon;
#endif
    return Backend::scalar;
}

Backend initial_backend() {
    const char* env = std::getenv("MMFUSION_KERNELS");
    if (env != nullptr) {
        const std::string value(env);
        for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
            if (value == backend_name(b)) {
                if (backend_available(b)) {
                    return b;
                }
                std::fprintf(stderr,
                             "mmfusion: MMFUSION_KERNELS=%s not supported on this CPU, "
                             "falling back to auto-detection\n",
                             env);
                return detect();
            }
        }
        std::fprintf(stderr, "mmfusion: unknown MMFUSION_KERNELS value '%s', ignoring\n", env);
    }
    return detect();
}

Table& table() {
    static Table t = table_for(initial_backend());
    return t;
}

}  // namespace

bool backend_available(Backend b) {
    switch (b) {
        case Backend::scalar:
            return true;
        case Backend::avx2:
#if defined(__x86_64__) || defined(__i386__)
            return __builtin_cpu_supports("avx2") != 0;
#else
            return false;
#endif
        case Backend::neon:
#if defined(__aarch64__)
            return true;
#else
            return false;
#endif
    }
    return false;
}

std::string_view backend_name(Backend b) {
    switch (b) {
        case Backend::scalar:
            return "scalar";
        case Backend::avx2:
            return "avx2";
        case Backend::neon:
            return "neon";
    }
    return "unknown";
}

Backend active_backend() { return table().id; }

void force_backend(Backend b) {
    if (!backend_available(b)) {
        throw std::invalid_argument("kernels: backend '" + std::string(backend_name(b)) +
                                    "' is not available on this CPU");
    }
    table() = table_for(b);
}

void reset_backend() { table() = table_for(initial_backend()); }

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    table().axpy(n, alpha, x, y);
}

void scale(std::size_t n, double alpha, double* x) { table().scale(n, alpha, x); }

double dot(std::size_t n, const double* a, const double* b) { return table().dot(n, a, b); }

}  // namespace mmfusion::kernels

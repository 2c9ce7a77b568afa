// Test-side oracles, independent of the library implementation paths they
// check.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mmfusion/linalg.hpp"
#include "mmfusion/synthdata.hpp"

namespace testsupport {

// Determinant via LU with partial pivoting; plain loops on a copy.
inline double determinant(const mmfusion::Matrix& m) {
    const std::size_t n = m.rows();
    std::vector<std::vector<double>> a(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a[i][j] = m.at(i, j);
        }
    }
    double det = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) {
                pivot = r;
            }
        }
        if (a[pivot][col] == 0.0) {
            return 0.0;
        }
        if (pivot != col) {
            std::swap(a[pivot], a[col]);
            det = -det;
        }
        det *= a[col][col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    return det;
}

// max |(A^T A - I)_ij|
inline double orthogonality_defect(const mmfusion::Matrix& r) {
    const mmfusion::Matrix gram = mmfusion::matmul_tn(r, r);
    double worst = 0.0;
    for (std::size_t i = 0; i < gram.rows(); ++i) {
        for (std::size_t j = 0; j < gram.cols(); ++j) {
            const double target = i == j ? 1.0 : 0.0;
            worst = std::max(worst, std::abs(gram.at(i, j) - target));
        }
    }
    return worst;
}

// Nearest-class-mean linear probe on one modality's mean raw token.
// Returns test accuracy; chance is 1/classes.
inline double linear_probe_accuracy(const mmfusion::Dataset& ds, mmfusion::Modality modality) {
    using namespace mmfusion;
    const std::size_t classes = ds.spec.classes;
    const std::size_t dim =
        modality == Modality::a ? ds.spec.dim_in_a : ds.spec.dim_in_v;
    std::vector<Vector> means(classes, Vector(dim));
    std::vector<std::size_t> counts(classes, 0);
    auto mean_token = [&](const Sample& s) {
        const Matrix& raw = modality == Modality::a ? s.raw_a : s.raw_v;
        Vector m(dim);
        for (std::size_t t = 0; t < raw.rows(); ++t) {
            for (std::size_t j = 0; j < dim; ++j) {
                m[j] += raw.at(t, j);
            }
        }
        for (std::size_t j = 0; j < dim; ++j) {
            m[j] /= static_cast<double>(raw.rows());
        }
        return m;
    };
    for (const Sample& s : ds.train) {
        const Vector m = mean_token(s);
        for (std::size_t j = 0; j < dim; ++j) {
            means[s.label][j] += m[j];
        }
        ++counts[s.label];
    }
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t j = 0; j < dim; ++j) {
            means[c][j] /= static_cast<double>(counts[c]);
        }
    }
    std::size_t correct = 0;
    for (const Sample& s : ds.test) {
        const Vector m = mean_token(s);
        std::size_t best = 0;
        double best_dist = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            double dist = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = m[j] - means[c][j];
                dist += diff * diff;
            }
            if (c == 0 || dist < best_dist) {
                best = c;
                best_dist = dist;
            }
        }
        if (best == s.label) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.test.size());
}

}  // namespace testsupport

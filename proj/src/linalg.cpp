#include "mmfusion/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mmfusion/errors.hpp"
#include "mmfusion/kernels.hpp"

namespace mmfusion {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void ensure_finite(const Matrix& m, const char* op) {
    if (!all_finite(m)) {
        throw NumericError(std::string(op) + ": non-finite entry in result");
    }
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m.at(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t i = 0;
    for (const auto& r : rows) {
        if (r.size() != m.cols()) {
            throw ContractError("Matrix::from_rows: ragged rows");
        }
        std::copy(r.begin(), r.end(), m.row(i));
        ++i;
    }
    return m;
}

Vector Vector::from(std::initializer_list<double> vals) {
    Vector v;
    v.values_.assign(vals.begin(), vals.end());
    return v;
}

// --- Rng ----------------------------------------------------------------

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) {
        throw ContractError("Rng::below: bound must be positive");
    }
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t zone = max - max % bound;  // multiple of bound
    std::uint64_t x = next_u64();
    while (x >= zone) {
        x = next_u64();
    }
    return x % bound;
}

double Rng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double stddev) {
    if (!(stddev > 0.0)) {
        throw ContractError("Rng::truncated_normal: stddev must be positive");
    }
    for (;;) {
        const double z = normal();
        if (std::abs(z) <= 2.0) {
            return z * stddev;
        }
    }
}

Rng Rng::fork(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// --- products -----------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ContractError("matmul: dimension mismatch " + shape_str(a) + " * " + shape_str(b));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* dst = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            kernels::axpy(b.cols(), a.at(i, k), b.row(k), dst);
        }
    }
    ensure_finite(out, "matmul");
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ContractError("matmul_tn: dimension mismatch " + shape_str(a) + "^T * " +
                            shape_str(b));
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            kernels::axpy(b.cols(), a.at(k, i), brow, out.row(i));
        }
    }
    ensure_finite(out, "matmul_tn");
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ContractError("matmul_nt: dimension mismatch " + shape_str(a) + " * " +
                            shape_str(b) + "^T");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            out.at(i, j) = kernels::dot(a.cols(), a.row(i), b.row(j));
        }
    }
    ensure_finite(out, "matmul_nt");
    return out;
}

Vector vec_mat(const Vector& v, const Matrix& m) {
    if (v.dim() != m.rows()) {
        throw ContractError("vec_mat: dimension mismatch " + std::to_string(v.dim()) + " * " +
                            shape_str(m));
    }
    Vector out(m.cols());
    for (std::size_t k = 0; k < m.rows(); ++k) {
        kernels::axpy(m.cols(), v[k], m.row(k), out.data());
    }
    return out;
}

Vector vec_mat_t(const Vector& v, const Matrix& m) {
    if (v.dim() != m.cols()) {
        throw ContractError("vec_mat_t: dimension mismatch " + std::to_string(v.dim()) + " * " +
                            shape_str(m) + "^T");
    }
    Vector out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out[i] = kernels::dot(m.cols(), m.row(i), v.data());
    }
    return out;
}

Matrix outer(const Vector& u, const Vector& v) {
    Matrix out(u.dim(), v.dim());
    for (std::size_t i = 0; i < u.dim(); ++i) {
        kernels::axpy(v.dim(), u[i], v.data(), out.row(i));
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out.at(j, i) = m.at(i, j);
        }
    }
    return out;
}

// --- elementwise helpers --------------------------------------------------

void add_scaled(Vector& dst, const Vector& x, double alpha) {
    if (dst.dim() != x.dim()) {
        throw ContractError("add_scaled: dimension mismatch");
    }
    kernels::axpy(dst.dim(), alpha, x.data(), dst.data());
}

void add_scaled(Matrix& dst, const Matrix& x, double alpha) {
    if (dst.rows() != x.rows() || dst.cols() != x.cols()) {
        throw ContractError("add_scaled: shape mismatch");
    }
    kernels::axpy(dst.size(), alpha, x.data(), dst.data());
}

void scale_in_place(Vector& v, double alpha) { kernels::scale(v.dim(), alpha, v.data()); }

void scale_in_place(Matrix& m, double alpha) { kernels::scale(m.size(), alpha, m.data()); }

void add_row_in_place(Matrix& m, const Vector& row) {
    if (m.cols() != row.dim()) {
        throw ContractError("add_row_in_place: dimension mismatch");
    }
    for (std::size_t i = 0; i < m.rows(); ++i) {
        kernels::axpy(m.cols(), 1.0, row.data(), m.row(i));
    }
}

bool all_finite(const Vector& v) {
    for (std::size_t i = 0; i < v.dim(); ++i) {
        if (!std::isfinite(v[i])) {
            return false;
        }
    }
    return true;
}

bool all_finite(const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m.data()[i])) {
            return false;
        }
    }
    return true;
}

// --- reductions and nonlinearities ----------------------------------------

Vector softmax_row(const Vector& logits) {
    if (logits.dim() == 0) {
        throw ContractError("softmax_row: empty input");
    }
    double max = kNegInf;
    for (std::size_t i = 0; i < logits.dim(); ++i) {
        const double x = logits[i];
        if (std::isnan(x) || x == -kNegInf) {
            throw ContractError("softmax_row: entries must be finite or -inf");
        }
        max = std::max(max, x);
    }
    if (max == kNegInf) {
        throw NumericError("softmax_row: fully masked row");
    }
    Vector out(logits.dim());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.dim(); ++i) {
        if (logits[i] == kNegInf) {
            out[i] = 0.0;
        } else {
            out[i] = std::exp(logits[i] - max);
            sum += out[i];
        }
    }
    kernels::scale(out.dim(), 1.0 / sum, out.data());
    return out;
}

double l2_norm(const Vector& u) { return std::sqrt(kernels::dot(u.dim(), u.data(), u.data())); }

double cosine_similarity(const Vector& u, const Vector& v) {
    if (u.dim() != v.dim()) {
        throw ContractError("cosine_similarity: dimension mismatch");
    }
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    if (nu <= 1e-12 || nv <= 1e-12) {
        throw NumericError("cosine_similarity: degenerate vector for cosine");
    }
    const double c = kernels::dot(u.dim(), u.data(), v.data()) / (nu * nv);
    return std::clamp(c, -1.0, 1.0);
}

namespace {

Vector unit_of(const Vector& v, double norm) {
    Vector out = v;
    kernels::scale(out.dim(), 1.0 / norm, out.data());
    return out;
}

// Rotation between unit row vectors u -> t, assuming they are not
// antiparallel. R = I + (c-1)(u^T u + v^T v) + s(u^T v - v^T u) where v is
// the Gram-Schmidt complement of t against u.
Matrix rotation_between_units(const Vector& u, const Vector& t) {
    const std::size_t d = u.dim();
    const double c = std::clamp(kernels::dot(d, u.data(), t.data()), -1.0, 1.0);

    Vector w = t;
    add_scaled(w, u, -c);
    const double wn = l2_norm(w);
    if (wn < 1e-14) {
        return Matrix::identity(d);  // zero angle
    }
    Vector v = unit_of(w, wn);
    const double s = wn;  // sin of the subtended angle; v * t = ||w||

    Matrix r = Matrix::identity(d);
    for (std::size_t i = 0; i < d; ++i) {
        double* row = r.row(i);
        kernels::axpy(d, (c - 1.0) * u[i], u.data(), row);
        kernels::axpy(d, (c - 1.0) * v[i], v.data(), row);
        kernels::axpy(d, s * u[i], v.data(), row);
        kernels::axpy(d, -s * v[i], u.data(), row);
    }
    return r;
}

}  // namespace

Matrix plane_rotation_from_pair(const Vector& src, const Vector& dst) {
    if (src.dim() != dst.dim()) {
        throw ContractError("plane_rotation_from_pair: dimension mismatch");
    }
    const std::size_t d = src.dim();
    if (d < 2) {
        throw ContractError("plane_rotation_from_pair: dimension must be at least 2");
    }
    const double ns = l2_norm(src);
    const double nd = l2_norm(dst);
    if (ns <= 1e-12 || nd <= 1e-12) {
        throw NumericError("plane_rotation_from_pair: zero-norm input");
    }
    const Vector u = unit_of(src, ns);
    const Vector t = unit_of(dst, nd);
    const double c = std::clamp(kernels::dot(d, u.data(), t.data()), -1.0, 1.0);

    if (c < -1.0 + 1e-9) {
        // Antiparallel: route through an auxiliary axis orthogonal to u.
        // The lowest-index basis vector with |u_i| < 0.9 is never parallel
        // to u (at most one component can exceed 0.9 in magnitude).
        std::size_t pick = 0;
        while (pick < d && std::abs(u[pick]) >= 0.9) {
            ++pick;
        }
        Vector axis(d);
        axis[pick] = 1.0;
        add_scaled(axis, u, -u[pick]);
        axis = unit_of(axis, l2_norm(axis));
        return matmul(rotation_between_units(u, axis), rotation_between_units(axis, t));
    }
    return rotation_between_units(u, t);
}

Vector truncated_normal_vector(Rng& rng, std::size_t dim, double stddev) {
    Vector out(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        out[i] = rng.truncated_normal(stddev);
    }
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ContractError("pearson: length mismatch");
    }
    if (x.size() < 3) {
        throw ContractError("pearson: need at least 3 points");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw NumericError("pearson: zero variance input");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace mmfusion

#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace mmfusion {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Dense row-major matrix of doubles. Row vectors act on matrices from the
// left throughout this codebase: y = x * M.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, value) {}

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }

    double& at(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
    double at(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
    double* row(std::size_t i) { return values_.data() + i * cols_; }
    const double* row(std::size_t i) const { return values_.data() + i * cols_; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    bool operator==(const Matrix&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

class Vector {
  public:
    Vector() = default;
    explicit Vector(std::size_t dim, double value = 0.0) : values_(dim, value) {}

    static Vector from(std::initializer_list<double> vals);

    std::size_t dim() const { return values_.size(); }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::span<const double> span() const { return {values_.data(), values_.size()}; }

    bool operator==(const Vector&) const = default;

  private:
    std::vector<double> values_;
};

// Deterministic random stream: a fixed seed reproduces the exact bit pattern
// of every draw. The engine is std::mt19937_64 (fully specified); all
// distributions are implemented here rather than via std:: distributions,
// which are not portable.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform();
    // uniform integer in [0, bound)
    std::uint64_t below(std::uint64_t bound);
    // standard normal via Box-Muller (one value per pair of uniforms)
    double normal();
    // N(0, stddev^2) resampled until |x| <= 2*stddev
    double truncated_normal(double stddev);

    // Independent derived stream; deterministic in (seed, stream).
    Rng fork(std::uint64_t stream) const;

  private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

// splitmix64 finalizer over (seed, stream); used to derive sub-stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[rng.below(i)]);
    }
}

// --- products ---------------------------------------------------------

// a * b. Each output element accumulates strictly left to right over the
// shared index, in every kernel backend.
Matrix matmul(const Matrix& a, const Matrix& b);
// transpose(a) * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * transpose(b)
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// row vector * matrix
Vector vec_mat(const Vector& v, const Matrix& m);
// row vector * transpose(matrix)
Vector vec_mat_t(const Vector& v, const Matrix& m);
// column(u) * row(v), dims u.dim() x v.dim()
Matrix outer(const Vector& u, const Vector& v);
Matrix transpose(const Matrix& m);

// --- elementwise helpers ----------------------------------------------

void add_scaled(Vector& dst, const Vector& x, double alpha);
void add_scaled(Matrix& dst, const Matrix& x, double alpha);
void scale_in_place(Vector& v, double alpha);
void scale_in_place(Matrix& m, double alpha);
void add_row_in_place(Matrix& m, const Vector& row);
bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

// --- reductions and nonlinearities ------------------------------------

// Stable softmax (max subtraction). Entries equal to -inf are mask
// sentinels and map to exactly 0; an all-masked row is an error.
Vector softmax_row(const Vector& logits);

double l2_norm(const Vector& u);

// Requires both norms > 1e-12; result clamped to [-1, 1].
double cosine_similarity(const Vector& u, const Vector& v);

// Minimal rotation R with unit(src) * R = unit(dst), acting as identity on
// the orthogonal complement of span{src, dst}. Orthogonal with det +1.
// Antiparallel inputs are handled by composing two quarter-turn rotations
// through the lowest-index basis direction not parallel to src.
Matrix plane_rotation_from_pair(const Vector& src, const Vector& dst);

Vector truncated_normal_vector(Rng& rng, std::size_t dim, double stddev);

// Pearson correlation; throws NumericError on zero-variance input.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace mmfusion

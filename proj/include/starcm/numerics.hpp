#pragma once

// Small dense linear algebra, the chi-squared(1) survival function, and
// reproducible counter-based Gaussian streams. Everything here is a pure
// value type, safe to share read-only across threads.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace starcm {

// Thrown when a symmetric factorization meets a pivot below the relative
// tolerance. Carries the offending pivot ratio for diagnostics.
class NearSingularError : public std::runtime_error {
public:
    explicit NearSingularError(double pivot_ratio)
        : std::runtime_error("matrix is numerically singular (pivot ratio " +
                             std::to_string(pivot_ratio) + ")"),
          pivot_ratio_(pivot_ratio) {}
    double pivot_ratio() const { return pivot_ratio_; }

private:
    double pivot_ratio_;
};

// Dense row-major matrix. Only the operations this project needs.
class Matrix {
public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}
    Matrix(int rows, int cols, std::vector<double> entries);

    static Matrix identity(int n);
    static Matrix column(const std::vector<double>& v);

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }

    Matrix transposed() const;
    Matrix operator*(const Matrix& rhs) const;
    Matrix operator+(const Matrix& rhs) const;
    Matrix operator-(const Matrix& rhs) const;
    Matrix scaled(double c) const;

    // Largest absolute entry.
    double max_abs() const;
    bool is_symmetric(double tol = 0.0) const;

private:
    int rows_;
    int cols_;
    std::vector<double> data_;
};

// Solves A X = B for symmetric positive definite A via Cholesky.
// Throws NearSingularError when the smallest pivot falls below
// 1e-10 times the largest diagonal entry.
Matrix solve_spd(const Matrix& A, const Matrix& B);

// Inverse of a symmetric positive definite matrix.
Matrix spd_inverse(const Matrix& A);

// Eigenvalues of a symmetric matrix (cyclic Jacobi), ascending order.
std::vector<double> sym_eigenvalues(const Matrix& A);

// Symmetric inverse square root A^{-1/2} for SPD A, via Jacobi.
Matrix spd_inverse_sqrt(const Matrix& A);

// P(chi^2(1) > x), computed as erfc(sqrt(x/2)). Throws std::domain_error
// for negative x.
double chi2_1_sf(double x);

// Purpose tags keep logically distinct draws on independent sub-streams.
enum class StreamPurpose : std::uint64_t {
    DgpNoise = 1,
    EstimatorStarts = 2,
    BootstrapZ = 3,
    StrongBootZ = 4,
    LambdaStar = 5,
};

struct StreamId {
    std::uint64_t replication = 0;
    std::uint64_t draw = 0;
    std::uint64_t purpose = 0;
};

// Counter-based stream: the output at position i is a pure function of
// (seed, id, i), so identical keys reproduce identical sequences
// regardless of threading or call interleaving.
class RngStream {
public:
    RngStream(std::uint64_t seed, StreamId id);
    RngStream(std::uint64_t seed, std::uint64_t replication, std::uint64_t draw,
              StreamPurpose purpose)
        : RngStream(seed, StreamId{replication, draw, static_cast<std::uint64_t>(purpose)}) {}

    // Uniform on (0,1).
    double next_uniform();
    // Standard normal (Box-Muller).
    double next_gaussian();

    std::vector<double> gaussian_draws(std::size_t count);
    std::vector<double> uniform_draws(std::size_t count);

private:
    std::uint64_t next_u64();

    std::uint64_t base_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace starcm

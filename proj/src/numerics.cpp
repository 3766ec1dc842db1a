#include "starcm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace starcm {

Matrix::Matrix(int rows, int cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != static_cast<size_t>(rows) * cols)
        throw std::invalid_argument("Matrix: entry count does not match shape");
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::column(const std::vector<double>& v) {
    Matrix m(static_cast<int>(v.size()), 1);
    for (size_t i = 0; i < v.size(); ++i) m(static_cast<int>(i), 0) = v[i];
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
        for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
    if (cols_ != rhs.rows_) throw std::invalid_argument("Matrix multiply: shape mismatch");
    Matrix out(rows_, rhs.cols_);
    for (int i = 0; i < rows_; ++i)
        for (int k = 0; k < cols_; ++k) {
            const double a = (*this)(i, k);
            if (a == 0.0) continue;
            for (int j = 0; j < rhs.cols_; ++j) out(i, j) += a * rhs(k, j);
        }
    return out;
}

Matrix Matrix::operator+(const Matrix& rhs) const {
    if (rows_ != rhs.rows_ || cols_ != rhs.cols_)
        throw std::invalid_argument("Matrix add: shape mismatch");
    Matrix out = *this;
    for (size_t i = 0; i < out.data_.size(); ++i) out.data_[i] += rhs.data_[i];
    return out;
}

Matrix Matrix::operator-(const Matrix& rhs) const {
    if (rows_ != rhs.rows_ || cols_ != rhs.cols_)
        throw std::invalid_argument("Matrix subtract: shape mismatch");
    Matrix out = *this;
    for (size_t i = 0; i < out.data_.size(); ++i) out.data_[i] -= rhs.data_[i];
    return out;
}

Matrix Matrix::scaled(double c) const {
    Matrix out = *this;
    for (double& v : out.data_) v *= c;
    return out;
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

bool Matrix::is_symmetric(double tol) const {
    if (rows_ != cols_) return false;
    for (int i = 0; i < rows_; ++i)
        for (int j = i + 1; j < cols_; ++j)
            if (std::fabs((*this)(i, j) - (*this)(j, i)) > tol) return false;
    return true;
}

namespace {

constexpr double kPivotRelTol = 1e-10;

// Lower Cholesky factor; throws NearSingularError on a small pivot.
Matrix cholesky_lower(const Matrix& A) {
    const int n = A.rows();
    if (A.cols() != n) throw std::invalid_argument("cholesky: matrix not square");
    double max_diag = 0.0;
    for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(A(i, i)));
    if (max_diag == 0.0) throw NearSingularError(0.0);

    Matrix L(n, n);
    for (int j = 0; j < n; ++j) {
        double d = A(j, j);
        for (int k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
        if (!(d > kPivotRelTol * max_diag)) throw NearSingularError(d / max_diag);
        L(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i) {
            double s = A(i, j);
            for (int k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            L(i, j) = s / L(j, j);
        }
    }
    return L;
}

}  // namespace

Matrix solve_spd(const Matrix& A, const Matrix& B) {
    if (A.rows() != B.rows()) throw std::invalid_argument("solve_spd: shape mismatch");
    const int n = A.rows();
    const int m = B.cols();
    const Matrix L = cholesky_lower(A);
    Matrix X = B;
    // Forward: L Y = B
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i) {
            double s = X(i, j);
            for (int k = 0; k < i; ++k) s -= L(i, k) * X(k, j);
            X(i, j) = s / L(i, i);
        }
    // Backward: L' X = Y
    for (int j = 0; j < m; ++j)
        for (int i = n - 1; i >= 0; --i) {
            double s = X(i, j);
            for (int k = i + 1; k < n; ++k) s -= L(k, i) * X(k, j);
            X(i, j) = s / L(i, i);
        }
    return X;
}

Matrix spd_inverse(const Matrix& A) { return solve_spd(A, Matrix::identity(A.rows())); }

namespace {

// Cyclic Jacobi; returns (eigenvalues ascending, orthonormal columns).
std::pair<std::vector<double>, Matrix> jacobi_eig(const Matrix& A) {
    const int n = A.rows();
    Matrix D = A;
    Matrix V = Matrix::identity(n);
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += D(p, q) * D(p, q);
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::fabs(D(p, q)) < 1e-300) continue;
                const double theta = (D(q, q) - D(p, p)) / (2.0 * D(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double dpk = D(p, k), dqk = D(q, k);
                    D(p, k) = c * dpk - s * dqk;
                    D(q, k) = s * dpk + c * dqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double dkp = D(k, p), dkq = D(k, q);
                    D(k, p) = c * dkp - s * dkq;
                    D(k, q) = s * dkp + c * dkq;
                    const double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return D(a, a) < D(b, b); });
    std::vector<double> evals(n);
    Matrix Vs(n, n);
    for (int j = 0; j < n; ++j) {
        evals[j] = D(order[j], order[j]);
        for (int i = 0; i < n; ++i) Vs(i, j) = V(i, order[j]);
    }
    return {evals, Vs};
}

}  // namespace

std::vector<double> sym_eigenvalues(const Matrix& A) { return jacobi_eig(A).first; }

Matrix spd_inverse_sqrt(const Matrix& A) {
    auto [evals, V] = jacobi_eig(A);
    const int n = A.rows();
    double max_ev = 0.0;
    for (double e : evals) max_ev = std::max(max_ev, std::fabs(e));
    Matrix out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) {
                if (!(evals[k] > kPivotRelTol * max_ev))
                    throw NearSingularError(max_ev > 0 ? evals[k] / max_ev : 0.0);
                s += V(i, k) * V(j, k) / std::sqrt(evals[k]);
            }
            out(i, j) = s;
        }
    return out;
}

double chi2_1_sf(double x) {
    if (x < 0.0) throw std::domain_error("chi2_1_sf: negative argument");
    return std::erfc(std::sqrt(0.5 * x));
}

namespace {

// SplitMix64 finalizer; the stream is this mix applied at distinct counters.
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, StreamId id) {
    std::uint64_t s = mix64(seed + kGamma);
    s = mix64(s ^ mix64(id.replication + 2 * kGamma));
    s = mix64(s ^ mix64(id.draw + 3 * kGamma));
    base_ = mix64(s ^ mix64(id.purpose + 5 * kGamma));
}

std::uint64_t RngStream::next_u64() { return mix64(base_ + (++counter_) * kGamma); }

double RngStream::next_uniform() {
    // 53-bit mantissa, offset by half an ulp so the value is strictly in (0,1).
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

std::vector<double> RngStream::gaussian_draws(std::size_t count) {
    std::vector<double> out(count);
    for (auto& v : out) v = next_gaussian();
    return out;
}

std::vector<double> RngStream::uniform_draws(std::size_t count) {
    std::vector<double> out(count);
    for (auto& v : out) v = next_uniform();
    return out;
}

}  // namespace starcm

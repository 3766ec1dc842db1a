#pragma once

// Independent reference implementations used only by tests. Everything here
// is deliberately written from the definitions with plain loops and its own
// linear solver, sharing no code path with the library internals.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "starcm/model.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;

inline Mat zeros(int r, int c) { return Mat(r, Vec(c, 0.0)); }

// Gauss-Jordan with partial pivoting; A square, b any column count.
inline Mat gj_solve(Mat A, Mat b) {
    const int n = static_cast<int>(A.size());
    const int m = static_cast<int>(b[0].size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
        if (std::fabs(A[piv][col]) < 1e-300) throw std::runtime_error("gj_solve: singular");
        std::swap(A[col], A[piv]);
        std::swap(b[col], b[piv]);
        const double d = A[col][col];
        for (int j = 0; j < n; ++j) A[col][j] /= d;
        for (int j = 0; j < m; ++j) b[col][j] /= d;
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = A[r][col];
            if (f == 0.0) continue;
            for (int j = 0; j < n; ++j) A[r][j] -= f * A[col][j];
            for (int j = 0; j < m; ++j) b[r][j] -= f * b[col][j];
        }
    }
    return b;
}

inline Vec gj_solve_vec(const Mat& A, const Vec& b) {
    Mat B(b.size(), Vec(1));
    for (size_t i = 0; i < b.size(); ++i) B[i][0] = b[i];
    const Mat X = gj_solve(A, B);
    Vec out(b.size());
    for (size_t i = 0; i < b.size(); ++i) out[i] = X[i][0];
    return out;
}

// P(chi2(1) > x) by Simpson quadrature of the density on [x, x+200].
inline double chi2_sf_quad(double x) {
    if (x <= 0.0) return 1.0;
    auto density = [](double u) {
        return std::exp(-0.5 * u) / std::sqrt(2.0 * M_PI * u);
    };
    const double hi = x + 200.0;
    const int steps = 400000;  // even
    const double h = (hi - x) / steps;
    double sum = density(x) + density(hi);
    for (int i = 1; i < steps; ++i) sum += density(x + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

// --- model pieces, written out locally ---

inline double logi(double u) {
    if (u > 700.0) u = 700.0;
    if (u < -700.0) u = -700.0;
    return 1.0 / (1.0 + std::exp(-u));
}

// Scalar LSTAR design: k_x = k_beta = 1, no constant, transition z = x.
inline double g_at(double x, double pi, double speed) {
    return x * logi(speed * (x - pi));
}

inline double dg_dpi(double x, double pi, double speed) {
    const double h = logi(speed * (x - pi));
    return -speed * x * h * (1.0 - h);
}

inline double weight(double lambda, double x) {
    return 1.0 / (1.0 + std::exp(lambda * std::atan(x)));
}

// T_n(lambda) straight from its definition (scalar design).
inline double direct_T(const starcm::Sample& s, double zeta, double beta, double pi,
                       double speed, double lambda) {
    const int n = s.n();
    const double omega = beta > 0 ? 1.0 : (beta < 0 ? -1.0 : 1.0);
    Vec eps(n), F(n);
    Mat d(n, Vec(3));
    for (int t = 0; t < n; ++t) {
        const double x = s.X(t, 0);
        const double g = g_at(x, pi, speed);
        eps[t] = s.y[t] - zeta * x - beta * g;
        F[t] = weight(lambda, x);
        d[t] = {g, x, omega * dg_dpi(x, pi, speed)};
    }
    Mat H = zeros(3, 3);
    Vec b(3, 0.0);
    double num = 0.0;
    for (int t = 0; t < n; ++t) {
        num += eps[t] * F[t];
        for (int i = 0; i < 3; ++i) {
            b[i] += F[t] * d[t][i];
            for (int j = 0; j < 3; ++j) H[i][j] += d[t][i] * d[t][j];
        }
    }
    num /= std::sqrt(static_cast<double>(n));
    for (auto& v : b) v /= n;
    for (auto& row : H)
        for (auto& v : row) v /= n;
    const Vec c = gj_solve_vec(H, b);
    double v2 = 0.0;
    for (int t = 0; t < n; ++t) {
        double proj = F[t];
        for (int i = 0; i < 3; ++i) proj -= c[i] * d[t][i];
        v2 += eps[t] * eps[t] * proj * proj;
    }
    v2 /= n;
    return num * num / v2;
}

// Symmetric 2x2 inverse square root via closed-form eigendecomposition.
inline Mat inv_sqrt_2x2(const Mat& A) {
    const double a = A[0][0], b = A[0][1], c = A[1][1];
    const double tr = a + c;
    const double det = a * c - b * b;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    const double l1 = tr / 2.0 + disc, l2 = tr / 2.0 - disc;
    double v1x, v1y;
    if (std::fabs(b) > 1e-300) {
        v1x = l1 - c;
        v1y = b;
    } else {
        v1x = a >= c ? 1.0 : 0.0;
        v1y = a >= c ? 0.0 : 1.0;
    }
    const double norm = std::sqrt(v1x * v1x + v1y * v1y);
    v1x /= norm;
    v1y /= norm;
    const double v2x = -v1y, v2y = v1x;
    const double s1 = 1.0 / std::sqrt(l1), s2 = 1.0 / std::sqrt(l2);
    Mat out = zeros(2, 2);
    out[0][0] = s1 * v1x * v1x + s2 * v2x * v2x;
    out[0][1] = s1 * v1x * v1y + s2 * v2x * v2y;
    out[1][0] = out[0][1];
    out[1][1] = s1 * v1y * v1y + s2 * v2y * v2y;
    return out;
}

// Scalar-design bootstrap pieces at one pi, written from the Step 1-4
// displays. psi = (beta, zeta) is the fitted value; z one multiplier vector.
struct DirectBoot {
    const starcm::Sample& s;
    double beta_hat, zeta_hat, speed;

    Vec eps_at(double pi) const {
        Vec eps(s.n());
        for (int t = 0; t < s.n(); ++t) {
            const double x = s.X(t, 0);
            eps[t] = s.y[t] - zeta_hat * x - beta_hat * g_at(x, pi, speed);
        }
        return eps;
    }
    Mat d_psi_at(double pi) const {
        Mat d(s.n(), Vec(2));
        for (int t = 0; t < s.n(); ++t) {
            const double x = s.X(t, 0);
            d[t] = {g_at(x, pi, speed), x};
        }
        return d;
    }
    Mat H_psi(double pi) const {
        const Mat d = d_psi_at(pi);
        Mat H = zeros(2, 2);
        for (int t = 0; t < s.n(); ++t)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) H[i][j] += d[t][i] * d[t][j];
        for (auto& row : H)
            for (auto& v : row) v /= s.n();
        return H;
    }
    // D(pi, pi0) = -(1/n) sum d_psi(pi) g(pi0)
    Vec D(double pi, double pi0) const {
        const Mat d = d_psi_at(pi);
        Vec out(2, 0.0);
        for (int t = 0; t < s.n(); ++t) {
            const double g0 = g_at(s.X(t, 0), pi0, speed);
            out[0] -= d[t][0] * g0;
            out[1] -= d[t][1] * g0;
        }
        out[0] /= s.n();
        out[1] /= s.n();
        return out;
    }
    Vec b_psi(double pi, double lambda) const {
        const Mat d = d_psi_at(pi);
        Vec out(2, 0.0);
        for (int t = 0; t < s.n(); ++t) {
            const double F = weight(lambda, s.X(t, 0));
            out[0] += F * d[t][0];
            out[1] += F * d[t][1];
        }
        out[0] /= s.n();
        out[1] /= s.n();
        return out;
    }
    Vec score(double pi, const Vec& z) const {
        const Mat d = d_psi_at(pi);
        Vec out(2, 0.0);
        for (int t = 0; t < s.n(); ++t) {
            out[0] += z[t] * d[t][0];
            out[1] += z[t] * d[t][1];
        }
        const double r = std::sqrt(static_cast<double>(s.n()));
        out[0] /= r;
        out[1] /= r;
        return out;
    }
    double xi(double pi, const Vec& z, double sigma, double pi0, double b) const {
        const Mat Hs = inv_sqrt_2x2(H_psi(pi));
        const Vec sc = score(pi, z);
        const Vec Dv = D(pi, pi0);
        Vec inner(2, 0.0);
        for (int i = 0; i < 2; ++i)
            inner[i] = sigma * (Hs[i][0] * sc[0] + Hs[i][1] * sc[1]) +
                       Hs[i][0] * Dv[0] * b + Hs[i][1] * Dv[1] * b;
        return -0.5 * (inner[0] * inner[0] + inner[1] * inner[1]);
    }
    double z_star(double pi, double lambda, const Vec& z) const {
        const Vec bp = b_psi(pi, lambda);
        const Vec coef = gj_solve_vec(H_psi(pi), bp);
        const Mat d = d_psi_at(pi);
        double sum = 0.0;
        for (int t = 0; t < s.n(); ++t) {
            const double F = weight(lambda, s.X(t, 0));
            sum += z[t] * (F - coef[0] * d[t][0] - coef[1] * d[t][1]);
        }
        return sum / std::sqrt(static_cast<double>(s.n()));
    }
    // v^2(omega, pi, lambda) from its display with d_theta rows.
    double v2(double omega, double pi, double lambda) const {
        const Vec eps = eps_at(pi);
        Mat d(s.n(), Vec(3));
        for (int t = 0; t < s.n(); ++t) {
            const double x = s.X(t, 0);
            d[t] = {g_at(x, pi, speed), x, omega * dg_dpi(x, pi, speed)};
        }
        Mat H = zeros(3, 3);
        Vec b(3, 0.0);
        for (int t = 0; t < s.n(); ++t) {
            const double F = weight(lambda, s.X(t, 0));
            for (int i = 0; i < 3; ++i) {
                b[i] += F * d[t][i];
                for (int j = 0; j < 3; ++j) H[i][j] += d[t][i] * d[t][j];
            }
        }
        for (auto& v : b) v /= s.n();
        for (auto& row : H)
            for (auto& v : row) v /= s.n();
        const Vec c = gj_solve_vec(H, b);
        double out = 0.0;
        for (int t = 0; t < s.n(); ++t) {
            const double F = weight(lambda, s.X(t, 0));
            double proj = F;
            for (int i = 0; i < 3; ++i) proj -= c[i] * d[t][i];
            out += eps[t] * eps[t] * proj * proj;
        }
        return out / s.n();
    }
    // Full Step 4 statistic at a supplied pi (taken as pi*).
    double t_star(double pi, double lambda, const Vec& z, double sigma, double pi0,
                  double b) const {
        const Mat H = H_psi(pi);
        const Mat Hs = inv_sqrt_2x2(H);
        const Vec sc = score(pi, z);
        const Vec Dv = D(pi, pi0);
        // tau* = -S_beta H^{-1}(sigma H^{-1/2} score + D b)
        Vec inner(2);
        for (int i = 0; i < 2; ++i)
            inner[i] = sigma * (Hs[i][0] * sc[0] + Hs[i][1] * sc[1]) + Dv[i] * b;
        const Vec Hinv_inner = gj_solve_vec(H, inner);
        const double tau = -Hinv_inner[0];
        if (std::fabs(tau) < 1e-12) throw std::runtime_error("tau degenerate");
        const double omega = tau / std::fabs(tau);

        const Vec bp = b_psi(pi, lambda);
        const double term1 = sigma * z_star(pi, lambda, z);
        Vec Db{Dv[0] * b, Dv[1] * b};
        const Vec HinvDb = gj_solve_vec(H, Db);
        const double term2 = bp[0] * (HinvDb[0] + b) + bp[1] * HinvDb[1];
        // (1/n) sum d_psi {g(pi0) - g(pi)}' b
        const Mat d = d_psi_at(pi);
        Vec diff(2, 0.0);
        for (int t = 0; t < s.n(); ++t) {
            const double gd =
                g_at(s.X(t, 0), pi0, speed) - g_at(s.X(t, 0), pi, speed);
            diff[0] += d[t][0] * gd * b;
            diff[1] += d[t][1] * gd * b;
        }
        diff[0] /= s.n();
        diff[1] /= s.n();
        const Vec Hinv_diff = gj_solve_vec(H, diff);
        const double term3 = bp[0] * Hinv_diff[0] + bp[1] * Hinv_diff[1];
        const Vec coef = gj_solve_vec(H, bp);
        double term4 = 0.0;
        for (int t = 0; t < s.n(); ++t) {
            const double x = s.X(t, 0);
            const double K = weight(lambda, x) - coef[0] * d[t][0] - coef[1] * d[t][1];
            term4 += K * (g_at(x, pi0, speed) - g_at(x, pi, speed)) * b;
        }
        term4 /= s.n();

        const double numer = term1 + term2 + term3 + term4;
        return numer * numer / v2(omega, pi, lambda);
    }
};

// Deterministic recursion for the reference DGP (zero-noise path).
inline Vec dgp_recursion(int steps, double zeta0, double beta, double pi0, double varpi0,
                         double speed) {
    Vec y(steps);
    double prev = 0.0;
    for (int t = 0; t < steps; ++t) {
        y[t] = zeta0 * prev + beta * prev * logi(speed * (prev - pi0)) +
               varpi0 / (1.0 + prev * prev);
        prev = y[t];
    }
    return y;
}

// Least squares (beta, zeta) at fixed pi via independent normal equations.
inline Vec normal_eq_psi(const starcm::Sample& s, double pi, double speed) {
    const int n = s.n();
    Mat A = zeros(2, 2);
    Vec b(2, 0.0);
    for (int t = 0; t < n; ++t) {
        const double x = s.X(t, 0);
        const double g = g_at(x, pi, speed);
        A[0][0] += g * g;
        A[0][1] += g * x;
        A[1][1] += x * x;
        b[0] += g * s.y[t];
        b[1] += x * s.y[t];
    }
    A[1][0] = A[0][1];
    return gj_solve_vec(A, b);
}

}  // namespace oracle

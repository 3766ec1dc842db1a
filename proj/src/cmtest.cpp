#include "starcm/cmtest.hpp"

#include <cmath>

namespace starcm {

std::vector<double> LambdaGrid::values() const {
    validate();
    std::vector<double> v(points);
    for (int i = 0; i < points; ++i) v[i] = lo + (hi - lo) * i / (points - 1);
    return v;
}

void LambdaGrid::validate() const {
    if (!(lo < hi)) throw std::invalid_argument("LambdaGrid: lo must be < hi");
    if (points < 2) throw std::invalid_argument("LambdaGrid: need at least 2 points");
}

std::vector<int> TestSurface::active() const {
    std::vector<int> idx;
    for (size_t i = 0; i < lambda.size(); ++i)
        if (!degenerate[i]) idx.push_back(static_cast<int>(i));
    return idx;
}

TestComponents build_components(const ModelSpec& spec, const Sample& sample,
                                const Theta& theta_hat) {
    const int n = sample.n();
    const int k_theta = spec.k_beta + spec.k_x + spec.k_pi;

    TestComponents c;
    c.omega = omega_of_beta(theta_hat.beta);
    c.eps_hat = residual(spec, theta_hat, sample);
    c.d_theta_rows = Matrix(n, k_theta);
    c.H_hat = Matrix(k_theta, k_theta);
    c.V_hat = Matrix(k_theta, k_theta);

    for (int t = 0; t < n; ++t) {
        const Vector d = d_theta(spec, sample.x_row(t), c.omega, theta_hat.pi);
        const double e2 = c.eps_hat[t] * c.eps_hat[t];
        for (int i = 0; i < k_theta; ++i) {
            c.d_theta_rows(t, i) = d[i];
            for (int j = i; j < k_theta; ++j) {
                c.H_hat(i, j) += d[i] * d[j];
                c.V_hat(i, j) += e2 * d[i] * d[j];
            }
        }
    }
    for (int i = 0; i < k_theta; ++i)
        for (int j = 0; j < i; ++j) {
            c.H_hat(i, j) = c.H_hat(j, i);
            c.V_hat(i, j) = c.V_hat(j, i);
        }
    c.H_hat = c.H_hat.scaled(1.0 / n);
    c.V_hat = c.V_hat.scaled(1.0 / n);

    const Matrix Hinv = spd_inverse(c.H_hat);
    c.Sigma_hat = Hinv * c.V_hat * Hinv;
    return c;
}

TestSurface test_surface(const ModelSpec& spec, const Sample& sample, const Theta& theta_hat,
                         const LambdaGrid& grid) {
    const TestComponents c = build_components(spec, sample, theta_hat);
    const int n = sample.n();
    const int k_theta = c.H_hat.rows();
    const double sqrt_n = std::sqrt(static_cast<double>(n));

    TestSurface s;
    s.lambda_grid = grid;
    s.lambda = grid.values();
    const int L = static_cast<int>(s.lambda.size());
    s.numerator.assign(L, 0.0);
    s.v2.assign(L, 0.0);
    s.T.assign(L, 0.0);
    s.degenerate.assign(L, false);

    // F(lambda'W(x_t)) table; lambda is scalar times the transformed
    // regressors per the weight definition, broadcast over k_x coordinates.
    std::vector<Vector> lambda_vec(L, Vector(spec.k_x));
    for (int l = 0; l < L; ++l)
        for (int j = 0; j < spec.k_x; ++j) lambda_vec[l][j] = s.lambda[l];

    for (int l = 0; l < L; ++l) {
        // b_theta(lambda) and the numerator in one pass.
        Vector b_theta(k_theta, 0.0);
        Vector F(n);
        double num = 0.0;
        for (int t = 0; t < n; ++t) {
            F[t] = weight_F(spec, lambda_vec[l], sample.x_row(t));
            num += c.eps_hat[t] * F[t];
            for (int i = 0; i < k_theta; ++i) b_theta[i] += F[t] * c.d_theta_rows(t, i);
        }
        for (auto& b : b_theta) b /= n;
        s.numerator[l] = num / sqrt_n;

        const Matrix coef = solve_spd(c.H_hat, Matrix::column(b_theta));
        double v2 = 0.0;
        for (int t = 0; t < n; ++t) {
            double proj = F[t];
            for (int i = 0; i < k_theta; ++i) proj -= coef(i, 0) * c.d_theta_rows(t, i);
            v2 += c.eps_hat[t] * c.eps_hat[t] * proj * proj;
        }
        s.v2[l] = v2 / n;
    }

    double v2_max = 0.0;
    for (double v : s.v2) v2_max = std::max(v2_max, v);
    // An exact fit zeroes every v2 through eps, not through the weight; the
    // statistic is identically zero there rather than degenerate.
    if (v2_max == 0.0) {
        double num_max = 0.0;
        for (double v : s.numerator) num_max = std::max(num_max, std::fabs(v));
        if (num_max == 0.0) return s;
        throw DegenerateScaleError();
    }
    bool any_active = false;
    for (int l = 0; l < L; ++l) {
        if (s.v2[l] < kDegenerateRelTol * v2_max) {
            s.degenerate[l] = true;
            continue;
        }
        any_active = true;
        s.T[l] = s.numerator[l] * s.numerator[l] / s.v2[l];
    }
    if (!any_active) throw DegenerateScaleError();
    return s;
}

IcsDiagnostics ics_statistic(const ModelSpec& spec, const Sample& sample,
                             const Theta& theta_hat, double a) {
    const int n = sample.n();
    if (n < 3) throw std::invalid_argument("ics_statistic: need n >= 3 for ln(ln n)");
    const TestComponents c = build_components(spec, sample, theta_hat);

    const int kb = spec.k_beta;
    Matrix Sbb(kb, kb);
    for (int i = 0; i < kb; ++i)
        for (int j = 0; j < kb; ++j) Sbb(i, j) = c.Sigma_hat(i, j);
    const Matrix sol = solve_spd(Sbb, Matrix::column(theta_hat.beta));
    double quad = 0.0;
    for (int i = 0; i < kb; ++i) quad += theta_hat.beta[i] * sol(i, 0);

    IcsDiagnostics ics;
    ics.Sigma_hat = c.Sigma_hat;
    ics.A_n = std::sqrt(std::max(0.0, n * quad / kb));
    ics.kappa_n = a * std::log(std::log(static_cast<double>(n)));
    ics.weak_selected = ics.A_n <= ics.kappa_n;
    return ics;
}

}  // namespace starcm

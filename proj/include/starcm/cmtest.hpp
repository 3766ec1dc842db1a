#pragma once

// Conditional-moment test components at the fitted parameter: the Hessian
// proxy H, the sandwich Sigma = H^-1 V H^-1, the statistic surface T(lambda)
// over the lambda grid, and the identification-category statistic A_n.

#include "starcm/estimator.hpp"

namespace starcm {

class DegenerateScaleError : public std::runtime_error {
public:
    DegenerateScaleError() : std::runtime_error("every lambda has degenerate scale") {}
};

struct LambdaGrid {
    double lo = 1.0;
    double hi = 5.0;
    int points = 2;

    std::vector<double> values() const;
    void validate() const;
};

struct TestComponents {
    Matrix H_hat;      // (1/n) sum d_theta d_theta'
    Matrix V_hat;      // (1/n) sum eps^2 d_theta d_theta'
    Matrix Sigma_hat;  // H^-1 V H^-1
    Matrix d_theta_rows;  // n x k_theta
    Vector eps_hat;
    Vector omega;      // omega(beta_hat)
};

struct TestSurface {
    LambdaGrid lambda_grid;
    std::vector<double> lambda;     // grid values
    std::vector<double> numerator;  // n^{-1/2} sum eps_hat F(lambda'W(x))
    std::vector<double> v2;
    std::vector<double> T;
    std::vector<bool> degenerate;   // v2 below the relative threshold

    // Indices with usable scale.
    std::vector<int> active() const;
};

struct IcsDiagnostics {
    double A_n = 0.0;
    double kappa_n = 0.0;
    Matrix Sigma_hat;
    bool weak_selected = false;  // A_n <= kappa_n
};

TestComponents build_components(const ModelSpec& spec, const Sample& sample,
                                const Theta& theta_hat);

TestSurface test_surface(const ModelSpec& spec, const Sample& sample, const Theta& theta_hat,
                         const LambdaGrid& grid);

// A_n = sqrt(n beta' Sigma_bb^-1 beta / k_beta), kappa_n = a ln(ln n).
IcsDiagnostics ics_statistic(const ModelSpec& spec, const Sample& sample,
                             const Theta& theta_hat, double a = 1.0);

// Relative cut below which v2 counts as degenerate.
constexpr double kDegenerateRelTol = 1e-10;

}  // namespace starcm

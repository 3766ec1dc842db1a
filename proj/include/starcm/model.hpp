#pragma once

// The additively nonlinear regression family y = zeta'x + beta'g(x,pi) + eps,
// its parameter spaces, the conditional-moment weight F(lambda'W(x)), and the
// analytic derivatives the test components need.

#include <functional>
#include <vector>

#include "starcm/numerics.hpp"

namespace starcm {

using Vector = std::vector<double>;

enum class ResponseKind {
    // g_i(x,pi) = x_i * logistic(speed * (z - pi)), z the transition regressor.
    LogisticSTARFixedSpeed,
    // User-supplied g and dg/dpi.
    Custom,
};

struct ModelSpec {
    int k_x = 1;
    int k_beta = 1;
    int k_pi = 1;
    ResponseKind response_kind = ResponseKind::LogisticSTARFixedSpeed;
    double speed = 10.0;
    bool include_constant = false;
    // Index into x of the transition variable z. -1 selects the first
    // stochastic regressor.
    int transition_index = -1;

    int resolved_transition_index() const;

    // Hooks for ResponseKind::Custom. g returns k_beta values, grad is
    // k_beta x k_pi.
    std::function<Vector(const Vector& x_row, const Vector& pi)> custom_g;
    std::function<Matrix(const Vector& x_row, const Vector& pi)> custom_g_grad;

    void validate() const;
};

struct Theta {
    Vector zeta;
    Vector beta;
    Vector pi;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double clip(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
    double width() const { return hi - lo; }
};

struct ParameterSpace {
    std::vector<Interval> beta_box;
    std::function<std::vector<Interval>(const Vector& beta)> zeta_box_fn;
    std::vector<Interval> pi_box;

    // The scalar LSTAR spaces: B = [-1+i, 1-i], Z(beta) = [-1-beta, 1-beta],
    // Pi = [-2, 2] with i = 1e-10.
    static ParameterSpace lstar_default();
};

struct Sample {
    Vector y;
    Matrix X;  // n x k_x

    int n() const { return static_cast<int>(y.size()); }
    Vector x_row(int t) const;
};

// Logistic with the exponent clamped at +-700 to avoid overflow.
double logistic(double u);

// g(x, pi), length k_beta.
Vector g_eval(const ModelSpec& spec, const Vector& x_row, const Vector& pi);

// dg/dpi, k_beta x k_pi.
Matrix g_grad_pi(const ModelSpec& spec, const Vector& x_row, const Vector& pi);

// eps_t(theta) = y_t - zeta'x_t - beta'g(x_t, pi), all t.
Vector residual(const ModelSpec& spec, const Theta& theta, const Sample& sample);

// d_psi = [g(x,pi)', x']', length k_beta + k_x.
Vector d_psi(const ModelSpec& spec, const Vector& x_row, const Vector& pi);

// d_theta = [g', x', omega' dg/dpi]', length k_beta + k_x + k_pi.
// omega must be a unit vector.
Vector d_theta(const ModelSpec& spec, const Vector& x_row, const Vector& omega,
               const Vector& pi);

// beta/||beta||, or the normalized ones vector at beta = 0.
Vector omega_of_beta(const Vector& beta);

// F(lambda'W(x)) with F(u) = 1/(1+e^u) and W = atan coordinatewise, the
// constant coordinate (when present) left untouched.
double weight_F(const ModelSpec& spec, const Vector& lambda, const Vector& x_row);

}  // namespace starcm

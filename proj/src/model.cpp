#include "starcm/model.hpp"

#include <cmath>
#include <stdexcept>

namespace starcm {

void ModelSpec::validate() const {
    if (k_x < 1 || k_beta < 1 || k_pi < 1)
        throw std::invalid_argument("ModelSpec: k_x, k_beta, k_pi must be >= 1");
    if (response_kind == ResponseKind::LogisticSTARFixedSpeed) {
        if (!(speed > 0.0)) throw std::invalid_argument("ModelSpec: speed must be > 0");
        if (k_pi != 1)
            throw std::invalid_argument("ModelSpec: logistic STAR uses a scalar threshold");
    } else {
        if (!custom_g || !custom_g_grad)
            throw std::invalid_argument("ModelSpec: custom response needs g and g_grad hooks");
    }
}

int ModelSpec::resolved_transition_index() const {
    if (transition_index >= 0) return transition_index;
    return include_constant ? 1 : 0;
}

ParameterSpace ParameterSpace::lstar_default() {
    constexpr double iota = 1e-10;
    ParameterSpace space;
    space.beta_box = {Interval{-1.0 + iota, 1.0 - iota}};
    space.zeta_box_fn = [](const Vector& beta) {
        return std::vector<Interval>{Interval{-1.0 - beta[0], 1.0 - beta[0]}};
    };
    space.pi_box = {Interval{-2.0, 2.0}};
    return space;
}

Vector Sample::x_row(int t) const {
    Vector row(X.cols());
    for (int j = 0; j < X.cols(); ++j) row[j] = X(t, j);
    return row;
}

double logistic(double u) {
    if (u > 700.0) u = 700.0;
    if (u < -700.0) u = -700.0;
    return 1.0 / (1.0 + std::exp(-u));
}

namespace {

// Regressor index feeding g component i (the constant never enters g).
int stochastic_index(const ModelSpec& spec, int i) {
    return spec.include_constant ? i + 1 : i;
}

}  // namespace

Vector g_eval(const ModelSpec& spec, const Vector& x_row, const Vector& pi) {
    if (spec.response_kind == ResponseKind::Custom) return spec.custom_g(x_row, pi);
    const double z = x_row[spec.resolved_transition_index()];
    const double h = logistic(spec.speed * (z - pi[0]));
    Vector g(spec.k_beta);
    for (int i = 0; i < spec.k_beta; ++i) g[i] = x_row[stochastic_index(spec, i)] * h;
    return g;
}

Matrix g_grad_pi(const ModelSpec& spec, const Vector& x_row, const Vector& pi) {
    if (spec.response_kind == ResponseKind::Custom) return spec.custom_g_grad(x_row, pi);
    const double z = x_row[spec.resolved_transition_index()];
    const double h = logistic(spec.speed * (z - pi[0]));
    const double dh = -spec.speed * h * (1.0 - h);  // d/dpi of logistic(speed*(z-pi))
    Matrix grad(spec.k_beta, 1);
    for (int i = 0; i < spec.k_beta; ++i) grad(i, 0) = x_row[stochastic_index(spec, i)] * dh;
    return grad;
}

Vector residual(const ModelSpec& spec, const Theta& theta, const Sample& sample) {
    const int n = sample.n();
    Vector eps(n);
    for (int t = 0; t < n; ++t) {
        const Vector x = sample.x_row(t);
        double fitted = 0.0;
        for (int j = 0; j < spec.k_x; ++j) fitted += theta.zeta[j] * x[j];
        const Vector g = g_eval(spec, x, theta.pi);
        for (int i = 0; i < spec.k_beta; ++i) fitted += theta.beta[i] * g[i];
        eps[t] = sample.y[t] - fitted;
    }
    return eps;
}

Vector d_psi(const ModelSpec& spec, const Vector& x_row, const Vector& pi) {
    Vector out;
    out.reserve(spec.k_beta + spec.k_x);
    const Vector g = g_eval(spec, x_row, pi);
    out.insert(out.end(), g.begin(), g.end());
    out.insert(out.end(), x_row.begin(), x_row.begin() + spec.k_x);
    return out;
}

Vector d_theta(const ModelSpec& spec, const Vector& x_row, const Vector& omega,
               const Vector& pi) {
    double norm2 = 0.0;
    for (double w : omega) norm2 += w * w;
    if (std::fabs(norm2 - 1.0) > 1e-12)
        throw std::invalid_argument("d_theta: omega must be a unit vector");
    Vector out = d_psi(spec, x_row, pi);
    const Matrix grad = g_grad_pi(spec, x_row, pi);
    for (int j = 0; j < spec.k_pi; ++j) {
        double s = 0.0;
        for (int i = 0; i < spec.k_beta; ++i) s += omega[i] * grad(i, j);
        out.push_back(s);
    }
    return out;
}

Vector omega_of_beta(const Vector& beta) {
    double norm = 0.0;
    for (double b : beta) norm += b * b;
    norm = std::sqrt(norm);
    Vector omega(beta.size());
    if (norm > 0.0) {
        for (size_t i = 0; i < beta.size(); ++i) omega[i] = beta[i] / norm;
    } else {
        const double v = 1.0 / std::sqrt(static_cast<double>(beta.size()));
        for (auto& w : omega) w = v;
    }
    return omega;
}

double weight_F(const ModelSpec& spec, const Vector& lambda, const Vector& x_row) {
    double u = 0.0;
    for (int j = 0; j < spec.k_x; ++j) {
        const double w = (spec.include_constant && j == 0) ? x_row[j] : std::atan(x_row[j]);
        u += lambda[j] * w;
    }
    return logistic(-u);  // F(u) = 1/(1+e^u)
}

}  // namespace starcm

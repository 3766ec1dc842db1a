#include "starcm/estimator.hpp"

#include <algorithm>
#include <cmath>

namespace starcm {

ConcentratedLS::ConcentratedLS(const ModelSpec& spec, const Sample& sample)
    : spec_(spec), sample_(sample), k_psi_(spec.k_beta + spec.k_x) {
    const int n = sample.n();
    const int kx = spec.k_x;
    Sxx_ = Matrix(kx, kx);
    Sxy_.assign(kx, 0.0);
    for (int t = 0; t < n; ++t) {
        for (int j = 0; j < kx; ++j) {
            const double xj = sample.X(t, j);
            Sxy_[j] += xj * sample.y[t];
            for (int l = j; l < kx; ++l) Sxx_(j, l) += xj * sample.X(t, l);
        }
        Syy_ += sample.y[t] * sample.y[t];
    }
    for (int j = 0; j < kx; ++j)
        for (int l = 0; l < j; ++l) Sxx_(j, l) = Sxx_(l, j);
}

std::pair<Vector, double> ConcentratedLS::solve(const Vector& pi) const {
    const int n = sample_.n();
    const int kb = spec_.k_beta;
    const int kx = spec_.k_x;

    // Cross moments involving g(x_t, pi).
    Matrix Sgg(kb, kb);
    Matrix Sgx(kb, kx);
    Vector Sgy(kb, 0.0);
    for (int t = 0; t < n; ++t) {
        const Vector x = sample_.x_row(t);
        const Vector g = g_eval(spec_, x, pi);
        for (int i = 0; i < kb; ++i) {
            Sgy[i] += g[i] * sample_.y[t];
            for (int l = i; l < kb; ++l) Sgg(i, l) += g[i] * g[l];
            for (int j = 0; j < kx; ++j) Sgx(i, j) += g[i] * x[j];
        }
    }
    for (int i = 0; i < kb; ++i)
        for (int l = 0; l < i; ++l) Sgg(i, l) = Sgg(l, i);

    Matrix Sdd(k_psi_, k_psi_);
    Matrix Sdy(k_psi_, 1);
    for (int i = 0; i < kb; ++i) {
        Sdy(i, 0) = Sgy[i];
        for (int l = 0; l < kb; ++l) Sdd(i, l) = Sgg(i, l);
        for (int j = 0; j < kx; ++j) {
            Sdd(i, kb + j) = Sgx(i, j);
            Sdd(kb + j, i) = Sgx(i, j);
        }
    }
    for (int j = 0; j < kx; ++j) {
        Sdy(kb + j, 0) = Sxy_[j];
        for (int l = 0; l < kx; ++l) Sdd(kb + j, kb + l) = Sxx_(j, l);
    }

    const Matrix psi_col = solve_spd(Sdd, Sdy);
    Vector psi(k_psi_);
    double quad = 0.0;
    for (int i = 0; i < k_psi_; ++i) {
        psi[i] = psi_col(i, 0);
        quad += psi[i] * Sdy(i, 0);
    }
    const double q = std::max(0.0, (Syy_ - quad) / (2.0 * n));
    return {psi, q};
}

double ConcentratedLS::criterion_at(const Vector& psi, const Vector& pi) const {
    const int n = sample_.n();
    Theta theta;
    theta.beta.assign(psi.begin(), psi.begin() + spec_.k_beta);
    theta.zeta.assign(psi.begin() + spec_.k_beta, psi.end());
    theta.pi = pi;
    const Vector eps = residual(spec_, theta, sample_);
    double s = 0.0;
    for (double e : eps) s += e * e;
    return s / (2.0 * n);
}

std::pair<Vector, double> psi_hat_given_pi(const ModelSpec& spec, const Sample& sample,
                                           const Vector& pi) {
    return ConcentratedLS(spec, sample).solve(pi);
}

double sigma2_hat(const ModelSpec& spec, const Sample& sample, const Theta& theta_hat) {
    const Vector eps = residual(spec, theta_hat, sample);
    double s = 0.0;
    for (double e : eps) s += e * e;
    return s / sample.n();
}

namespace {

Vector clip_to_box(Vector v, const std::vector<Interval>& box) {
    for (size_t i = 0; i < v.size(); ++i) v[i] = box[i].clip(v[i]);
    return v;
}

// Projected gradient descent on the concentrated criterion over the pi box.
// Central-difference gradient, backtracking steps, stop on criterion change.
struct DescentOutcome {
    Vector pi;
    double criterion;
    bool converged;
};

DescentOutcome descend_pi(const ConcentratedLS& cls, const std::vector<Interval>& box,
                          Vector pi, double tol, int max_iters) {
    const int k = static_cast<int>(pi.size());
    constexpr double fd_step = 1e-6;
    double q = cls.criterion(pi);
    double step = 0.1;
    bool converged = false;
    for (int iter = 0; iter < max_iters; ++iter) {
        Vector grad(k);
        double gnorm = 0.0;
        for (int j = 0; j < k; ++j) {
            Vector hi = pi, lo = pi;
            hi[j] = box[j].clip(pi[j] + fd_step);
            lo[j] = box[j].clip(pi[j] - fd_step);
            const double denom = hi[j] - lo[j];
            grad[j] = denom > 0.0 ? (cls.criterion(hi) - cls.criterion(lo)) / denom : 0.0;
            gnorm += grad[j] * grad[j];
        }
        gnorm = std::sqrt(gnorm);
        if (gnorm == 0.0) {
            converged = true;
            break;
        }
        bool improved = false;
        double trial_step = step;
        for (int halving = 0; halving < 40; ++halving) {
            Vector trial(k);
            for (int j = 0; j < k; ++j)
                trial[j] = box[j].clip(pi[j] - trial_step * grad[j] / gnorm);
            const double qt = cls.criterion(trial);
            if (qt < q) {
                if (std::fabs(q - qt) < tol) converged = true;
                pi = std::move(trial);
                q = qt;
                step = trial_step * 2.0;
                improved = true;
                break;
            }
            trial_step *= 0.5;
        }
        if (!improved) {
            converged = true;
            break;
        }
        if (converged) break;
    }
    return {pi, q, converged};
}

// Golden-section refinement around a candidate minimizer (scalar pi only).
DescentOutcome golden_refine(const ConcentratedLS& cls, const Interval& box,
                             double pi, double q) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = std::max(box.lo, pi - 0.05 * box.width());
    double b = std::min(box.hi, pi + 0.05 * box.width());
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = cls.criterion({x1});
    double f2 = cls.criterion({x2});
    while (b - a > 1e-10) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = cls.criterion({x1});
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = cls.criterion({x2});
        }
    }
    const double mid = 0.5 * (a + b);
    const double fm = cls.criterion({mid});
    if (fm < q) return {{mid}, fm, true};
    return {{pi}, q, true};
}

// Full-parameter fit: projected gradient descent on Q_n over theta =
// (beta, zeta, pi) jointly, analytic gradient, backtracking line search,
// stopping when the criterion improves by less than tol.
struct JointTheta {
    Vector beta, zeta, pi;
};

JointTheta project_joint(JointTheta th, const ParameterSpace& space) {
    th.beta = clip_to_box(std::move(th.beta), space.beta_box);
    th.zeta = clip_to_box(std::move(th.zeta), space.zeta_box_fn(th.beta));
    th.pi = clip_to_box(std::move(th.pi), space.pi_box);
    return th;
}

double joint_criterion(const ModelSpec& spec, const Sample& sample, const JointTheta& th) {
    const Vector eps = residual(spec, Theta{th.zeta, th.beta, th.pi}, sample);
    double s = 0.0;
    for (double e : eps) s += e * e;
    return s / (2.0 * sample.n());
}

void joint_gradient(const ModelSpec& spec, const Sample& sample, const JointTheta& th,
                    Vector& gb, Vector& gz, Vector& gp) {
    const int n = sample.n();
    const int kb = spec.k_beta, kx = spec.k_x, kp = spec.k_pi;
    gb.assign(kb, 0.0);
    gz.assign(kx, 0.0);
    gp.assign(kp, 0.0);
    for (int t = 0; t < n; ++t) {
        const Vector x = sample.x_row(t);
        const Vector g = g_eval(spec, x, th.pi);
        const Matrix dg = g_grad_pi(spec, x, th.pi);
        double e = sample.y[t];
        for (int j = 0; j < kx; ++j) e -= th.zeta[j] * x[j];
        for (int i = 0; i < kb; ++i) e -= th.beta[i] * g[i];
        for (int i = 0; i < kb; ++i) gb[i] -= e * g[i];
        for (int j = 0; j < kx; ++j) gz[j] -= e * x[j];
        for (int m = 0; m < kp; ++m)
            for (int i = 0; i < kb; ++i) gp[m] -= e * th.beta[i] * dg(i, m);
    }
    for (int i = 0; i < kb; ++i) gb[i] /= n;
    for (int j = 0; j < kx; ++j) gz[j] /= n;
    for (int m = 0; m < kp; ++m) gp[m] /= n;
}

FitResult fit_joint(const ModelSpec& spec, const Sample& sample, const ParameterSpace& space,
                    const FitConfig& config) {
    RngStream stream(config.start_seed, config.replication, 0, StreamPurpose::EstimatorStarts);
    bool have_best = false;
    double best_q = 0.0;
    JointTheta best{};
    int best_index = -1;
    bool any_converged = false;

    for (int i = 0; i < config.n_starts; ++i) {
        JointTheta th;
        th.beta.resize(space.beta_box.size());
        for (size_t j = 0; j < th.beta.size(); ++j) {
            const Interval& iv = space.beta_box[j];
            th.beta[j] = iv.lo + stream.next_uniform() * iv.width();
        }
        const auto zbox = space.zeta_box_fn(th.beta);
        th.zeta.resize(zbox.size());
        for (size_t j = 0; j < th.zeta.size(); ++j)
            th.zeta[j] = zbox[j].lo + stream.next_uniform() * zbox[j].width();
        th.pi.resize(space.pi_box.size());
        for (size_t j = 0; j < th.pi.size(); ++j) {
            const Interval& iv = space.pi_box[j];
            th.pi[j] = iv.lo + stream.next_uniform() * iv.width();
        }
        th = project_joint(std::move(th), space);

        double q = joint_criterion(spec, sample, th);
        double step = 1.0;
        bool converged = false;
        Vector gb, gz, gp;
        for (int iter = 0; iter < config.max_iters; ++iter) {
            joint_gradient(spec, sample, th, gb, gz, gp);
            bool improved = false;
            JointTheta trial;
            double qt = 0.0;
            for (int halving = 0; halving < 40; ++halving) {
                trial = th;
                for (size_t j = 0; j < trial.beta.size(); ++j) trial.beta[j] -= step * gb[j];
                for (size_t j = 0; j < trial.zeta.size(); ++j) trial.zeta[j] -= step * gz[j];
                for (size_t j = 0; j < trial.pi.size(); ++j) trial.pi[j] -= step * gp[j];
                trial = project_joint(std::move(trial), space);
                qt = joint_criterion(spec, sample, trial);
                if (qt <= q) {
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!improved) {
                converged = true;
                break;
            }
            const double dq = q - qt;
            th = std::move(trial);
            q = qt;
            step = std::min(step * 2.0, 1e6);
            if (dq < config.criterion_tol) {
                converged = true;
                break;
            }
        }
        any_converged = any_converged || converged;
        if (!have_best || q < best_q - 1e-12) {
            have_best = true;
            best_q = q;
            best = th;
            best_index = i;
        }
    }
    if (!have_best) throw EstimationFailedError("fit: no usable start");

    FitResult result;
    result.theta_hat = Theta{best.zeta, best.beta, best.pi};
    result.criterion = best_q;
    result.sigma2_hat = 2.0 * best_q;
    result.converged = any_converged;
    result.starts_used = config.n_starts;
    result.best_start_index = best_index;
    return result;
}

}  // namespace

FitResult fit(const ModelSpec& spec, const Sample& sample, const ParameterSpace& space,
              const FitConfig& config) {
    spec.validate();
    if (config.n_starts < 1) throw std::invalid_argument("fit: n_starts must be >= 1");
    if (!(config.criterion_tol > 0.0))
        throw std::invalid_argument("fit: criterion_tol must be > 0");
    if (config.joint_descent) return fit_joint(spec, sample, space, config);

    const ConcentratedLS cls(spec, sample);
    const int k_pi = spec.k_pi;

    // Start points drawn uniformly on Theta; only the pi block seeds the
    // descent since psi is profiled out exactly.
    std::vector<Vector> pi_starts;
    pi_starts.reserve(config.n_starts + 1);
    RngStream stream(config.start_seed, config.replication, 0, StreamPurpose::EstimatorStarts);
    for (int i = 0; i < config.n_starts; ++i) {
        Vector beta(space.beta_box.size());
        for (size_t j = 0; j < beta.size(); ++j) {
            const Interval& iv = space.beta_box[j];
            beta[j] = iv.lo + stream.next_uniform() * iv.width();
        }
        const auto zbox = space.zeta_box_fn(beta);
        for (const Interval& iv : zbox) (void)(iv.lo + stream.next_uniform() * iv.width());
        Vector pi(k_pi);
        for (int j = 0; j < k_pi; ++j) {
            const Interval& iv = space.pi_box[j];
            pi[j] = iv.lo + stream.next_uniform() * iv.width();
        }
        pi_starts.push_back(std::move(pi));
    }
    // Profile fallback: best point of a coarse pi grid joins the start pool.
    if (k_pi == 1 && config.pi_grid_size >= 2) {
        const Interval& iv = space.pi_box[0];
        bool found = false;
        double grid_q = 0.0, grid_pi = iv.lo;
        for (int i = 0; i < config.pi_grid_size; ++i) {
            const double p = iv.lo + iv.width() * i / (config.pi_grid_size - 1);
            double q;
            try {
                q = cls.criterion({p});
            } catch (const NearSingularError&) {
                continue;
            }
            if (!found || q < grid_q) {
                found = true;
                grid_q = q;
                grid_pi = p;
            }
        }
        if (found) pi_starts.push_back({grid_pi});
    }

    bool have_best = false;
    double best_q = 0.0;
    Vector best_pi;
    int best_index = -1;
    bool any_converged = false;
    int starts_used = 0;

    for (size_t i = 0; i < pi_starts.size(); ++i) {
        DescentOutcome out;
        try {
            out = descend_pi(cls, space.pi_box, pi_starts[i], config.criterion_tol,
                             config.max_iters);
            if (k_pi == 1)
                out = golden_refine(cls, space.pi_box[0], out.pi[0], out.criterion);
        } catch (const NearSingularError&) {
            continue;
        }
        ++starts_used;
        any_converged = any_converged || out.converged;
        // Ties within 1e-12 keep the earlier start.
        if (!have_best || out.criterion < best_q - 1e-12) {
            have_best = true;
            best_q = out.criterion;
            best_pi = out.pi;
            best_index = static_cast<int>(i);
        }
    }
    if (!have_best)
        throw EstimationFailedError("fit: every start failed the design rank check");

    auto [psi, q] = cls.solve(best_pi);
    Vector beta(psi.begin(), psi.begin() + spec.k_beta);
    Vector zeta(psi.begin() + spec.k_beta, psi.end());

    const Vector beta_clipped = clip_to_box(beta, space.beta_box);
    bool clipped = false;
    for (size_t j = 0; j < beta.size(); ++j)
        if (beta_clipped[j] != beta[j]) clipped = true;
    if (clipped) {
        // Re-solve zeta by OLS of y - beta'g on x, then re-enter the boxes.
        beta = beta_clipped;
        const int n = sample.n();
        Matrix Sxx(spec.k_x, spec.k_x);
        Matrix Sxr(spec.k_x, 1);
        for (int t = 0; t < n; ++t) {
            const Vector x = sample.x_row(t);
            const Vector g = g_eval(spec, x, best_pi);
            double r = sample.y[t];
            for (int b = 0; b < spec.k_beta; ++b) r -= beta[b] * g[b];
            for (int jj = 0; jj < spec.k_x; ++jj) {
                Sxr(jj, 0) += x[jj] * r;
                for (int ll = 0; ll < spec.k_x; ++ll) Sxx(jj, ll) += x[jj] * x[ll];
            }
        }
        const Matrix zc = solve_spd(Sxx, Sxr);
        for (int jj = 0; jj < spec.k_x; ++jj) zeta[jj] = zc(jj, 0);
    }
    zeta = clip_to_box(zeta, space.zeta_box_fn(beta));

    Theta theta{zeta, beta, best_pi};
    Vector psi_final = beta;
    psi_final.insert(psi_final.end(), zeta.begin(), zeta.end());
    const double q_final = clipped ? cls.criterion_at(psi_final, best_pi) : q;

    FitResult result;
    result.theta_hat = theta;
    result.criterion = q_final;
    result.sigma2_hat = 2.0 * q_final;
    result.converged = any_converged;
    result.starts_used = starts_used;
    result.best_start_index = best_index;
    return result;
}

}  // namespace starcm

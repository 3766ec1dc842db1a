#include "starcm/bootstrap.hpp"

#include <algorithm>
#include <cmath>

namespace starcm {

HGrid HGrid::paper_default() {
    HGrid g;
    for (double p = -2.0; p <= 2.0 + 1e-9; p += 0.5) g.pi0_values.push_back(p);
    g.b_values = {-0.5, -0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.5};
    return g;
}

HGrid HGrid::coarse() {
    HGrid g;
    g.pi0_values = {-2.0, -1.0, 0.0, 1.0, 2.0};
    g.b_values = {-0.3, -0.1, 0.0, 0.1, 0.3};
    return g;
}

std::vector<NuisancePoint> HGrid::cross() const {
    if (pi0_values.empty() || b_values.empty())
        throw std::invalid_argument("HGrid: empty grid");
    std::vector<NuisancePoint> out;
    out.reserve(pi0_values.size() * b_values.size());
    for (double p : pi0_values)
        for (double b : b_values) out.push_back(NuisancePoint{{p}, {b}});
    return out;
}

std::vector<double> BootPValueMatrix::row(int lambda_idx) const {
    std::vector<double> out(h.size());
    for (size_t j = 0; j < h.size(); ++j) out[j] = at(lambda_idx, static_cast<int>(j));
    return out;
}

namespace {

Vector mat_vec(const Matrix& A, const Vector& v) {
    Vector out(A.rows(), 0.0);
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) out[i] += A(i, j) * v[j];
    return out;
}

double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

StepComponents::StepComponents(const ModelSpec& spec, const Sample& sample,
                               const Theta& theta_hat, const std::vector<double>& pi_grid,
                               const std::vector<double>& pi0_values,
                               const std::vector<double>& lambda_grid)
    : spec_(&spec),
      sample_(&sample),
      theta_hat_(theta_hat),
      pi_grid_(pi_grid),
      pi0_values_(pi0_values),
      lambda_(lambda_grid) {
    if (spec.k_pi != 1)
        throw std::invalid_argument("bootstrap: only scalar pi is supported");
    const int n = sample.n();
    const int L = static_cast<int>(lambda_.size());
    sigma_hat_ = std::sqrt(sigma2_hat(spec, sample, theta_hat));

    // F(lambda'W(x_t)) shared across every slice.
    F_ = Matrix(n, L);
    for (int t = 0; t < n; ++t) {
        const Vector x = sample.x_row(t);
        for (int l = 0; l < L; ++l) {
            Vector lam(spec.k_x, lambda_[l]);
            F_(t, l) = weight_F(spec, lam, x);
        }
    }

    // g(x_t, pi0) for the nuisance grid, and its F-weighted means.
    g_pi0_rows_.reserve(pi0_values_.size());
    G_pi0_.assign(pi0_values_.size() * L * spec.k_beta, 0.0);
    for (size_t p = 0; p < pi0_values_.size(); ++p) {
        Matrix rows(n, spec.k_beta);
        for (int t = 0; t < n; ++t) {
            const Vector g = g_eval(spec, sample.x_row(t), {pi0_values_[p]});
            for (int i = 0; i < spec.k_beta; ++i) rows(t, i) = g[i];
        }
        for (int l = 0; l < L; ++l)
            for (int i = 0; i < spec.k_beta; ++i) {
                double s = 0.0;
                for (int t = 0; t < n; ++t) s += F_(t, l) * rows(t, i);
                G_pi0_[(p * L + l) * spec.k_beta + i] = s / n;
            }
        g_pi0_rows_.push_back(std::move(rows));
    }

    slices_.reserve(pi_grid_.size());
    for (double pi : pi_grid_) {
        slices_.push_back(make_slice(pi));
        if (slices_.back().usable) ++usable_count_;
    }
    if (usable_count_ == 0) throw BootstrapDegenerateError();
}

double StepComponents::G_pi0(int pi0_idx, int lambda_idx, int beta_idx) const {
    const int L = lambda_count();
    return G_pi0_[(static_cast<size_t>(pi0_idx) * L + lambda_idx) * spec_->k_beta + beta_idx];
}

PiSlice StepComponents::make_slice(double pi) const {
    const ModelSpec& spec = *spec_;
    const Sample& sample = *sample_;
    const int n = sample.n();
    const int kb = spec.k_beta;
    const int kx = spec.k_x;
    const int kp = kb + kx;
    const int L = lambda_count();
    const Vector pivec{pi};

    PiSlice s;
    s.pi = pi;
    s.d_psi_rows = Matrix(n, kp);
    s.g_rows = Matrix(n, kb);
    s.r_rows = Matrix(n, kb);
    s.eps.assign(n, 0.0);
    s.H_psi = Matrix(kp, kp);
    s.B_psir = Matrix(kp, kb);
    s.C_rr = Matrix(kb, kb);
    s.V_psipsi = Matrix(kp, kp);
    s.V_psir = Matrix(kp, kb);
    s.V_rr = Matrix(kb, kb);

    const Vector& beta = theta_hat_.beta;
    const Vector& zeta = theta_hat_.zeta;

    for (int t = 0; t < n; ++t) {
        const Vector x = sample.x_row(t);
        const Vector g = g_eval(spec, x, pivec);
        const Matrix grad = g_grad_pi(spec, x, pivec);
        double fitted = 0.0;
        for (int j = 0; j < kx; ++j) fitted += zeta[j] * x[j];
        for (int i = 0; i < kb; ++i) fitted += beta[i] * g[i];
        const double eps = sample.y[t] - fitted;
        s.eps[t] = eps;
        const double e2 = eps * eps;
        for (int i = 0; i < kb; ++i) {
            s.d_psi_rows(t, i) = g[i];
            s.g_rows(t, i) = g[i];
            s.r_rows(t, i) = grad(i, 0);
        }
        for (int j = 0; j < kx; ++j) s.d_psi_rows(t, kb + j) = x[j];
        for (int i = 0; i < kp; ++i) {
            const double di = s.d_psi_rows(t, i);
            for (int j = i; j < kp; ++j) {
                s.H_psi(i, j) += di * s.d_psi_rows(t, j);
                s.V_psipsi(i, j) += e2 * di * s.d_psi_rows(t, j);
            }
            for (int j = 0; j < kb; ++j) {
                s.B_psir(i, j) += di * s.r_rows(t, j);
                s.V_psir(i, j) += e2 * di * s.r_rows(t, j);
            }
        }
        for (int i = 0; i < kb; ++i)
            for (int j = 0; j < kb; ++j) {
                s.C_rr(i, j) += s.r_rows(t, i) * s.r_rows(t, j);
                s.V_rr(i, j) += e2 * s.r_rows(t, i) * s.r_rows(t, j);
            }
    }
    for (int i = 0; i < kp; ++i)
        for (int j = 0; j < i; ++j) {
            s.H_psi(i, j) = s.H_psi(j, i);
            s.V_psipsi(i, j) = s.V_psipsi(j, i);
        }
    const double inv_n = 1.0 / n;
    s.H_psi = s.H_psi.scaled(inv_n);
    s.B_psir = s.B_psir.scaled(inv_n);
    s.C_rr = s.C_rr.scaled(inv_n);
    s.V_psipsi = s.V_psipsi.scaled(inv_n);
    s.V_psir = s.V_psir.scaled(inv_n);
    s.V_rr = s.V_rr.scaled(inv_n);

    try {
        s.H_psi_inv = spd_inverse(s.H_psi);
        s.H_psi_inv_sqrt = spd_inverse_sqrt(s.H_psi);
        // The v^2 solve also needs the full H(omega, pi) block including the
        // dg/dpi direction, which degenerates when no observation sits near
        // the transition. Probe it at a reference omega; for k_beta = 1 the
        // conclusion is sign-invariant and therefore exact.
        const Vector omega0 = omega_of_beta(Vector(kb, 0.0));
        Matrix Hfull(kp + 1, kp + 1);
        for (int i = 0; i < kp; ++i) {
            for (int j = 0; j < kp; ++j) Hfull(i, j) = s.H_psi(i, j);
            double bm = 0.0;
            for (int a = 0; a < kb; ++a) bm += omega0[a] * s.B_psir(i, a);
            Hfull(i, kp) = Hfull(kp, i) = bm;
        }
        double cm = 0.0;
        for (int a = 0; a < kb; ++a)
            for (int c = 0; c < kb; ++c) cm += omega0[a] * omega0[c] * s.C_rr(a, c);
        Hfull(kp, kp) = cm;
        (void)spd_inverse(Hfull);
    } catch (const NearSingularError&) {
        s.usable = false;
        return s;
    }

    // D(pi, pi0) = -(1/n) sum d_psi(pi) g(pi0)', including the self pairing.
    auto cross_D = [&](const Matrix& g_rows) {
        Matrix D(kp, kb);
        for (int t = 0; t < n; ++t)
            for (int i = 0; i < kp; ++i)
                for (int j = 0; j < kb; ++j) D(i, j) -= s.d_psi_rows(t, i) * g_rows(t, j);
        return D.scaled(inv_n);
    };
    s.D_self = cross_D(s.g_rows);
    s.D_pi0.reserve(g_pi0_rows_.size());
    for (const Matrix& rows : g_pi0_rows_) s.D_pi0.push_back(cross_D(rows));

    // Lambda-indexed F moments.
    s.b_psi = Matrix(L, kp);
    s.b_r = Matrix(L, kb);
    s.G_self = Matrix(L, kb);
    s.e0.assign(L, 0.0);
    s.e_psi = Matrix(L, kp);
    s.e_r = Matrix(L, kb);
    for (int t = 0; t < n; ++t) {
        const double e2 = s.eps[t] * s.eps[t];
        for (int l = 0; l < L; ++l) {
            const double F = F_(t, l);
            s.e0[l] += e2 * F * F;
            for (int i = 0; i < kp; ++i) {
                s.b_psi(l, i) += F * s.d_psi_rows(t, i);
                s.e_psi(l, i) += e2 * F * s.d_psi_rows(t, i);
            }
            for (int i = 0; i < kb; ++i) {
                s.b_r(l, i) += F * s.r_rows(t, i);
                s.e_r(l, i) += e2 * F * s.r_rows(t, i);
                s.G_self(l, i) += F * s.g_rows(t, i);
            }
        }
    }
    for (auto& v : s.e0) v *= inv_n;
    s.b_psi = s.b_psi.scaled(inv_n);
    s.b_r = s.b_r.scaled(inv_n);
    s.G_self = s.G_self.scaled(inv_n);
    s.e_psi = s.e_psi.scaled(inv_n);
    s.e_r = s.e_r.scaled(inv_n);
    return s;
}

Vector score_draw(const PiSlice& slice, const Vector& z) {
    const int n = slice.d_psi_rows.rows();
    const int kp = slice.d_psi_rows.cols();
    Vector s(kp, 0.0);
    for (int t = 0; t < n; ++t)
        for (int i = 0; i < kp; ++i) s[i] += z[t] * slice.d_psi_rows(t, i);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : s) v *= inv_sqrt_n;
    return s;
}

namespace {

// v^2(omega, pi, lambda) from the cached eps^2-weighted moments:
// v^2 = e0 - 2 c'S1 + c'S2 c with c = H(omega,pi)^{-1} b_theta(omega,pi,lambda).
double v2_from_moments(const PiSlice& s, const Vector& omega, int l) {
    const int kp = s.H_psi.rows();
    const int kb = static_cast<int>(omega.size());
    const int kt = kp + 1;  // scalar pi block

    Matrix H(kt, kt);
    Matrix S2(kt, kt);
    Vector b_theta(kt, 0.0);
    Vector S1(kt, 0.0);
    for (int i = 0; i < kp; ++i) {
        b_theta[i] = s.b_psi(l, i);
        S1[i] = s.e_psi(l, i);
        for (int j = 0; j < kp; ++j) {
            H(i, j) = s.H_psi(i, j);
            S2(i, j) = s.V_psipsi(i, j);
        }
        double bm = 0.0, vm = 0.0;
        for (int a = 0; a < kb; ++a) {
            bm += omega[a] * s.B_psir(i, a);
            vm += omega[a] * s.V_psir(i, a);
        }
        H(i, kp) = H(kp, i) = bm;
        S2(i, kp) = S2(kp, i) = vm;
    }
    double cm = 0.0, vm = 0.0, btm = 0.0, s1m = 0.0;
    for (int a = 0; a < kb; ++a)
        for (int c = 0; c < kb; ++c) {
            cm += omega[a] * omega[c] * s.C_rr(a, c);
            vm += omega[a] * omega[c] * s.V_rr(a, c);
        }
    for (int a = 0; a < kb; ++a) {
        btm += omega[a] * s.b_r(l, a);
        s1m += omega[a] * s.e_r(l, a);
    }
    H(kp, kp) = cm;
    S2(kp, kp) = vm;
    b_theta[kp] = btm;
    S1[kp] = s1m;

    const Matrix csol = solve_spd(H, Matrix::column(b_theta));
    Vector c(kt);
    for (int i = 0; i < kt; ++i) c[i] = csol(i, 0);
    double v2 = s.e0[l] - 2.0 * dot(c, S1);
    const Vector S2c = mat_vec(S2, c);
    v2 += dot(c, S2c);
    return std::max(0.0, v2);
}

// For k_beta = 1 the scale is invariant to the sign of omega, so it can be
// cached per (slice, lambda) across draws and nuisance points.
double v2_cached(const PiSlice& s, std::vector<double>* cache, std::vector<char>* have,
                 const Vector& omega, int l) {
    if (omega.size() != 1 || cache == nullptr) return v2_from_moments(s, omega, l);
    if (!(*have)[l]) {
        (*cache)[l] = v2_from_moments(s, Vector{1.0}, l);
        (*have)[l] = 1;
    }
    return (*cache)[l];
}

double xi_star(const PiSlice& s, const Vector& score, double sigma_hat, const Matrix& D,
               const Vector& b) {
    const int kp = s.H_psi.rows();
    Vector inner(kp, 0.0);
    const Vector g_star = mat_vec(s.H_psi_inv_sqrt, score);
    const Vector Db = mat_vec(D, b);
    const Vector hDb = mat_vec(s.H_psi_inv_sqrt, Db);
    for (int i = 0; i < kp; ++i) inner[i] = sigma_hat * g_star[i] + hDb[i];
    return -0.5 * dot(inner, inner);
}

int find_pi0_index(const StepComponents& comps, double pi0) {
    const auto& vals = comps.pi0_values();
    for (size_t i = 0; i < vals.size(); ++i)
        if (std::fabs(vals[i] - pi0) < 1e-12) return static_cast<int>(i);
    return -1;
}

// D(pi, pi0) straight from the data for a pi0 off the cached list.
Matrix direct_D(const StepComponents& comps, const PiSlice& s, double pi0) {
    const ModelSpec& spec = comps.spec();
    const Sample& sample = comps.sample();
    const int n = sample.n();
    const int kp = s.d_psi_rows.cols();
    const int kb = spec.k_beta;
    Matrix D(kp, kb);
    for (int t = 0; t < n; ++t) {
        const Vector g = g_eval(spec, sample.x_row(t), {pi0});
        for (int i = 0; i < kp; ++i)
            for (int j = 0; j < kb; ++j) D(i, j) -= s.d_psi_rows(t, i) * g[j];
    }
    return D.scaled(1.0 / n);
}

const Matrix& slice_D(const StepComponents& comps, const PiSlice& s, double pi0,
                      Matrix& scratch) {
    const int idx = find_pi0_index(comps, pi0);
    if (idx >= 0 && idx < static_cast<int>(s.D_pi0.size())) return s.D_pi0[idx];
    scratch = direct_D(comps, s, pi0);
    return scratch;
}

double G_at(const StepComponents& comps, const PiSlice& s, double pi0, int l, int beta_idx) {
    const int idx = find_pi0_index(comps, pi0);
    if (idx >= 0) return comps.G_pi0(idx, l, beta_idx);
    const ModelSpec& spec = comps.spec();
    const Sample& sample = comps.sample();
    const int n = sample.n();
    double sum = 0.0;
    for (int t = 0; t < n; ++t) {
        const Vector g = g_eval(spec, sample.x_row(t), {pi0});
        sum += comps.F_table()(t, l) * g[beta_idx];
    }
    return sum / n;
}

struct DrawCache {
    std::vector<Vector> score;  // per grid slice
    Vector u;                   // per lambda: n^{-1/2} sum z_t F_t
};

DrawCache make_draw_cache(const StepComponents& comps, const Vector& z) {
    DrawCache cache;
    const int P = static_cast<int>(comps.pi_grid().size());
    cache.score.resize(P);
    for (int p = 0; p < P; ++p)
        if (comps.slice(p).usable) cache.score[p] = score_draw(comps.slice(p), z);
    const int n = comps.n();
    const int L = comps.lambda_count();
    cache.u.assign(L, 0.0);
    for (int t = 0; t < n; ++t)
        for (int l = 0; l < L; ++l) cache.u[l] += z[t] * comps.F_table()(t, l);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : cache.u) v *= inv_sqrt_n;
    return cache;
}

PiStarResult pi_star_impl(const StepComponents& comps, const DrawCache& cache, const Vector& z,
                          double sigma_hat, const NuisancePoint& h) {
    const auto& grid = comps.pi_grid();
    const int P = static_cast<int>(grid.size());
    std::vector<double> xi(P, 0.0);
    int best = -1;
    for (int p = 0; p < P; ++p) {
        const PiSlice& s = comps.slice(p);
        if (!s.usable) continue;
        const int idx = find_pi0_index(comps, h.pi0[0]);
        Matrix scratch;
        const Matrix& D = (idx >= 0) ? s.D_pi0[idx] : (scratch = direct_D(comps, s, h.pi0[0]));
        xi[p] = xi_star(s, cache.score[p], sigma_hat, D, h.b);
        if (best < 0 || xi[p] < xi[best]) best = p;  // ties keep the smaller pi
    }
    if (best < 0) throw BootstrapDegenerateError();

    PiStarResult result;
    result.pi_star = grid[best];
    result.grid_index = best;

    // Three-point parabolic refinement when the minimum is interior.
    if (best > 0 && best < P - 1 && comps.slice(best - 1).usable &&
        comps.slice(best + 1).usable) {
        const double f0 = xi[best - 1], f1 = xi[best], f2 = xi[best + 1];
        const double denom = f0 - 2.0 * f1 + f2;
        if (denom > 0.0) {
            const double d = grid[best] - grid[best - 1];
            double offset = 0.5 * d * (f0 - f2) / denom;
            offset = std::clamp(offset, -d, d);
            const double pi_ref = grid[best] + offset;
            if (std::fabs(offset) > 1e-14) {
                PiSlice refined = comps.make_slice(pi_ref);
                if (refined.usable) {
                    const Vector score = score_draw(refined, z);
                    Matrix scratch;
                    const Matrix& D = slice_D(comps, refined, h.pi0[0], scratch);
                    const double xi_ref = xi_star(refined, score, sigma_hat, D, h.b);
                    if (xi_ref < f1) {
                        result.pi_star = pi_ref;
                        result.grid_index = -1;
                        result.refined = std::move(refined);
                    }
                }
            }
        }
    }
    return result;
}

double z_star_impl(const PiSlice& s, const Vector& score, double u_lambda, int l) {
    const Vector coef = mat_vec(s.H_psi_inv, score);
    double z = u_lambda;
    for (int i = 0; i < s.H_psi.rows(); ++i) z -= s.b_psi(l, i) * coef[i];
    return z;
}

struct TStarScratch {
    std::vector<double> v2_cache;
    std::vector<char> v2_have;
};

double t_star_impl(const StepComponents& comps, const PiSlice& s, const Vector& score,
                   double u_lambda, double sigma_hat, const NuisancePoint& h, int l,
                   TStarScratch* scratch) {
    const int kp = s.H_psi.rows();
    const int kb = comps.spec().k_beta;
    const Vector& b = h.b;

    Matrix Dscratch;
    const Matrix& D = slice_D(comps, s, h.pi0[0], Dscratch);

    // tau* = -S_beta H^{-1} (sigma G* + D b) with G* = H^{-1/2} score.
    const Vector g_star = mat_vec(s.H_psi_inv_sqrt, score);
    Vector inner(kp, 0.0);
    const Vector Db = mat_vec(D, b);
    for (int i = 0; i < kp; ++i) inner[i] = sigma_hat * g_star[i] + Db[i];
    const Vector Hinv_inner = mat_vec(s.H_psi_inv, inner);
    Vector tau(kb);
    double tau_norm = 0.0;
    for (int i = 0; i < kb; ++i) {
        tau[i] = -Hinv_inner[i];
        tau_norm += tau[i] * tau[i];
    }
    tau_norm = std::sqrt(tau_norm);
    if (tau_norm < kTauNormTol) throw TauDegenerateError();
    Vector omega(kb);
    for (int i = 0; i < kb; ++i) omega[i] = tau[i] / tau_norm;

    // Term (i): sigma Z*(pi, lambda).
    const double term1 = sigma_hat * z_star_impl(s, score, u_lambda, l);

    // Term (ii): b_psi' (H^{-1} D b + [b, 0]').
    Vector bpsi(kp);
    for (int i = 0; i < kp; ++i) bpsi[i] = s.b_psi(l, i);
    const Vector HinvDb = mat_vec(s.H_psi_inv, Db);
    double term2 = 0.0;
    for (int i = 0; i < kp; ++i) term2 += bpsi[i] * HinvDb[i];
    for (int i = 0; i < kb; ++i) term2 += bpsi[i] * b[i];

    // Term (iii): b_psi' H^{-1} (1/n) sum d_psi {g(pi0) - g(pi)}' b.
    // The cross moments are -D(pi,pi0) and -D(pi,pi).
    Vector diff_b(kp, 0.0);
    for (int i = 0; i < kp; ++i)
        for (int j = 0; j < kb; ++j) diff_b[i] += (-D(i, j) + s.D_self(i, j)) * b[j];
    const Vector Hinv_diff = mat_vec(s.H_psi_inv, diff_b);
    double term3 = 0.0;
    for (int i = 0; i < kp; ++i) term3 += bpsi[i] * Hinv_diff[i];

    // Term (iv): (1/n) sum K_t {g(pi0) - g(pi)}' b with K the projection
    // residual of F on d_psi.
    double term4 = 0.0;
    for (int j = 0; j < kb; ++j)
        term4 += (G_at(comps, s, h.pi0[0], l, j) - s.G_self(l, j)) * b[j];
    // Projection part: -b_psi' H^{-1} (1/n) sum d_psi {g(pi0)-g(pi)}'b = -term3.
    term4 -= term3;

    const double numer = term1 + term2 + term3 + term4;
    const double v2 = scratch != nullptr
                          ? v2_cached(s, &scratch->v2_cache, &scratch->v2_have, omega, l)
                          : v2_from_moments(s, omega, l);
    if (v2 <= 0.0) return 0.0;
    return numer * numer / v2;
}

}  // namespace

PiStarResult step2_pi_star(const StepComponents& comps, const Vector& z, double sigma_hat,
                           const NuisancePoint& h) {
    const DrawCache cache = make_draw_cache(comps, z);
    return pi_star_impl(comps, cache, z, sigma_hat, h);
}

double step3_z_star(const StepComponents& comps, const PiSlice& slice, const Vector& z,
                    int lambda_idx) {
    const Vector score = score_draw(slice, z);
    const int n = comps.n();
    double u = 0.0;
    for (int t = 0; t < n; ++t) u += z[t] * comps.F_table()(t, lambda_idx);
    u /= std::sqrt(static_cast<double>(n));
    return z_star_impl(slice, score, u, lambda_idx);
}

double step4_T_star(const StepComponents& comps, const PiSlice& slice, const Vector& z,
                    double sigma_hat, const NuisancePoint& h, int lambda_idx) {
    const Vector score = score_draw(slice, z);
    const int n = comps.n();
    double u = 0.0;
    for (int t = 0; t < n; ++t) u += z[t] * comps.F_table()(t, lambda_idx);
    u /= std::sqrt(static_cast<double>(n));
    return t_star_impl(comps, slice, score, u, sigma_hat, h, lambda_idx, nullptr);
}

BootPValueMatrix robust_pvalues(const ModelSpec& spec, const Sample& sample,
                                const FitResult& fitres, const TestSurface& surface,
                                const HGrid& hgrid, const BootConfig& config,
                                const ParameterSpace& space) {
    if (config.M < 1) throw std::invalid_argument("robust_pvalues: M must be >= 1");
    const std::vector<NuisancePoint> hpoints = hgrid.cross();
    const int L = static_cast<int>(surface.lambda.size());
    const int H = static_cast<int>(hpoints.size());

    std::vector<double> pi_grid(config.pi_star_grid);
    const Interval& box = space.pi_box[0];
    for (int i = 0; i < config.pi_star_grid; ++i)
        pi_grid[i] = box.lo + box.width() * i / (config.pi_star_grid - 1);

    StepComponents comps(spec, sample, fitres.theta_hat, pi_grid, hgrid.pi0_values,
                         surface.lambda);
    const double sigma = std::sqrt(fitres.sigma2_hat);
    const int n = sample.n();

    // Per-grid-slice v2 caches survive across draws (k_beta = 1 fast path).
    std::vector<TStarScratch> grid_scratch(pi_grid.size());
    for (auto& sc : grid_scratch) {
        sc.v2_cache.assign(L, 0.0);
        sc.v2_have.assign(L, 0);
    }

    std::vector<long> exceed(static_cast<size_t>(L) * H, 0);
    int tau_redraws = 0;

    for (int j = 0; j < config.M; ++j) {
        bool done = false;
        for (int attempt = 0; attempt < kTauRedrawLimit && !done; ++attempt) {
            StreamId id{config.replication, static_cast<std::uint64_t>(j),
                        static_cast<std::uint64_t>(StreamPurpose::BootstrapZ) * 100 +
                            static_cast<std::uint64_t>(attempt)};
            RngStream stream(config.seed, id);
            const Vector z = stream.gaussian_draws(static_cast<size_t>(n));
            const DrawCache cache = make_draw_cache(comps, z);
            std::vector<long> local(static_cast<size_t>(L) * H, 0);
            try {
                for (int hj = 0; hj < H; ++hj) {
                    const NuisancePoint& h = hpoints[hj];
                    const PiStarResult pr = pi_star_impl(comps, cache, z, sigma, h);
                    const PiSlice& s =
                        pr.grid_index >= 0 ? comps.slice(pr.grid_index) : pr.refined;
                    const Vector score = pr.grid_index >= 0 ? cache.score[pr.grid_index]
                                                            : score_draw(s, z);
                    TStarScratch off_grid_scratch;
                    TStarScratch* scratch;
                    if (pr.grid_index >= 0) {
                        scratch = &grid_scratch[pr.grid_index];
                    } else {
                        off_grid_scratch.v2_cache.assign(L, 0.0);
                        off_grid_scratch.v2_have.assign(L, 0);
                        scratch = &off_grid_scratch;
                    }
                    for (int l = 0; l < L; ++l) {
                        if (surface.degenerate[l]) continue;
                        const double t_star = t_star_impl(comps, s, score, cache.u[l], sigma,
                                                          h, l, scratch);
                        if (t_star > surface.T[l])
                            local[static_cast<size_t>(l) * H + hj] += 1;
                    }
                }
            } catch (const TauDegenerateError&) {
                ++tau_redraws;
                continue;  // discard the whole draw, next sub-stream
            }
            for (size_t i = 0; i < local.size(); ++i) exceed[i] += local[i];
            done = true;
        }
        if (!done) throw TauDegenerateError();
    }

    BootPValueMatrix out;
    out.lambda = surface.lambda;
    out.h = hpoints;
    out.tau_redraws = tau_redraws;
    out.p_star.assign(static_cast<size_t>(L) * H, 0.0);
    for (size_t i = 0; i < out.p_star.size(); ++i)
        out.p_star[i] = static_cast<double>(exceed[i]) / config.M;
    return out;
}

StrongBootResult strong_id_bootstrap(const ModelSpec& spec, const Sample& sample,
                                     const FitResult& fitres, const TestSurface& surface,
                                     const BootConfig& config) {
    if (config.M < 1) throw std::invalid_argument("strong_id_bootstrap: M must be >= 1");
    const TestComponents c = build_components(spec, sample, fitres.theta_hat);
    const int n = sample.n();
    const int k_theta = c.H_hat.rows();
    const std::vector<int> active = surface.active();
    const int L = static_cast<int>(surface.lambda.size());

    // eps_t K_theta_t(lambda) for the multiplier draws.
    Matrix eK(n, L);
    for (int l : active) {
        Vector b_theta(k_theta, 0.0);
        for (int t = 0; t < n; ++t) {
            Vector lam(spec.k_x, surface.lambda[l]);
            const double F = weight_F(spec, lam, sample.x_row(t));
            eK(t, l) = F;  // temporarily F; projected below
            for (int i = 0; i < k_theta; ++i) b_theta[i] += F * c.d_theta_rows(t, i);
        }
        for (auto& b : b_theta) b /= n;
        const Matrix coef = solve_spd(c.H_hat, Matrix::column(b_theta));
        for (int t = 0; t < n; ++t) {
            double proj = eK(t, l);
            for (int i = 0; i < k_theta; ++i) proj -= coef(i, 0) * c.d_theta_rows(t, i);
            eK(t, l) = c.eps_hat[t] * proj;
        }
    }

    StrongBootResult out;
    double sup_T = 0.0, ave_T = 0.0;
    for (int l : active) {
        sup_T = std::max(sup_T, surface.T[l]);
        ave_T += surface.T[l];
    }
    ave_T /= active.size();
    out.sup_stat = sup_T;
    out.ave_stat = ave_T;

    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    long sup_exceed = 0, ave_exceed = 0;
    for (int j = 0; j < config.M; ++j) {
        RngStream stream(config.seed, config.replication, static_cast<std::uint64_t>(j),
                         StreamPurpose::StrongBootZ);
        const Vector z = stream.gaussian_draws(static_cast<size_t>(n));
        double sup_star = 0.0, ave_star = 0.0;
        for (int l : active) {
            double s = 0.0;
            for (int t = 0; t < n; ++t) s += z[t] * eK(t, l);
            s *= inv_sqrt_n;
            const double t_star = s * s / surface.v2[l];
            sup_star = std::max(sup_star, t_star);
            ave_star += t_star;
        }
        ave_star /= active.size();
        if (sup_star > sup_T) ++sup_exceed;
        if (ave_star > ave_T) ++ave_exceed;
    }
    out.p_sup = static_cast<double>(sup_exceed) / config.M;
    out.p_ave = static_cast<double>(ave_exceed) / config.M;
    return out;
}

}  // namespace starcm

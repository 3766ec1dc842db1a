#pragma once

// Identification-robust wild bootstrap for the conditional-moment statistic:
// per-dataset component caches over the pi search grid, the bootstrap
// minimizer pi*, the projected multiplier draw Z*, the four-term statistic
// draw T*, and the p-value matrices over the (lambda, h) grid. Also the
// plain multiplier bootstrap used by the non-robust sup/average tests.

#include "starcm/cmtest.hpp"

namespace starcm {

class BootstrapDegenerateError : public std::runtime_error {
public:
    BootstrapDegenerateError() : std::runtime_error("no usable pi grid point") {}
};

class TauDegenerateError : public std::runtime_error {
public:
    TauDegenerateError() : std::runtime_error("tau* below norm tolerance after redraw limit") {}
};

struct NuisancePoint {
    Vector pi0;
    Vector b;
};

struct HGrid {
    std::vector<double> pi0_values;
    std::vector<double> b_values;

    // pi0 in {-2,-1.5,...,2}, b in {-.5,-.3,-.2,-.1,0,.1,.2,.3,.5}.
    static HGrid paper_default();
    // 5 x 5 coarse variant used at desk scale.
    static HGrid coarse();

    std::vector<NuisancePoint> cross() const;
};

struct BootConfig {
    int M = 500;
    std::uint64_t seed = 0;
    std::uint64_t replication = 0;
    int pi_star_grid = 201;
};

struct BootPValueMatrix {
    std::vector<double> lambda;
    std::vector<NuisancePoint> h;
    // p_star[l * h.size() + j]
    std::vector<double> p_star;
    int tau_redraws = 0;

    double at(int lambda_idx, int h_idx) const {
        return p_star[static_cast<size_t>(lambda_idx) * h.size() + h_idx];
    }
    // Row over h at a fixed lambda.
    std::vector<double> row(int lambda_idx) const;
};

// Everything that depends on the data and (psi_hat, pi) but not on the
// multiplier draw, tabulated at one pi.
struct PiSlice {
    double pi = 0.0;
    Matrix d_psi_rows;   // n x k_psi
    Matrix g_rows;       // n x k_beta, g(x_t, pi)
    Matrix r_rows;       // n x (k_beta*k_pi), dg/dpi flattened row-major
    Vector eps;          // eps_t(psi_hat, pi)
    Matrix H_psi;        // k_psi x k_psi
    Matrix H_psi_inv;
    Matrix H_psi_inv_sqrt;
    Matrix D_self;       // D(pi, pi) = -(1/n) sum d_psi g(pi)'
    std::vector<Matrix> D_pi0;     // per pi0 value: k_psi x k_beta
    Matrix b_psi;        // L x k_psi
    Matrix b_r;          // L x (k_beta*k_pi): (1/n) sum F * r
    Matrix G_self;       // L x k_beta: (1/n) sum F g(pi)'
    // eps^2-weighted moments for v^2 via the quadratic expansion.
    Vector e0;           // L: (1/n) sum eps^2 F^2
    Matrix e_psi;        // L x k_psi: (1/n) sum eps^2 F d_psi
    Matrix e_r;          // L x (k_beta*k_pi)
    Matrix V_psipsi;     // k_psi x k_psi
    Matrix V_psir;       // k_psi x (k_beta*k_pi)
    Matrix V_rr;         // (k_beta*k_pi) x (k_beta*k_pi)
    Matrix B_psir;       // k_psi x (k_beta*k_pi): (1/n) sum d_psi r'
    Matrix C_rr;         // (1/n) sum r r'
    bool usable = true;  // false when H_psi failed the rank check
};

class StepComponents {
public:
    StepComponents(const ModelSpec& spec, const Sample& sample, const Theta& theta_hat,
                   const std::vector<double>& pi_grid, const std::vector<double>& pi0_values,
                   const std::vector<double>& lambda_grid);

    const ModelSpec& spec() const { return *spec_; }
    const Sample& sample() const { return *sample_; }
    int n() const { return sample_->n(); }
    int lambda_count() const { return static_cast<int>(lambda_.size()); }
    const std::vector<double>& lambda() const { return lambda_; }
    const std::vector<double>& pi_grid() const { return pi_grid_; }
    const std::vector<double>& pi0_values() const { return pi0_values_; }
    const Matrix& F_table() const { return F_; }  // n x L
    const PiSlice& slice(int grid_idx) const { return slices_[grid_idx]; }
    int usable_count() const { return usable_count_; }
    int excluded_count() const { return static_cast<int>(slices_.size()) - usable_count_; }
    double sigma_hat() const { return sigma_hat_; }
    const Theta& theta_hat() const { return theta_hat_; }
    // (1/n) sum F_t(lambda) g_t(pi0)' for each pi0 value: |pi0| x L x k_beta.
    double G_pi0(int pi0_idx, int lambda_idx, int beta_idx) const;

    // Slice at an arbitrary pi (used by the off-grid refinement step).
    PiSlice make_slice(double pi) const;

private:
    const ModelSpec* spec_;
    const Sample* sample_;
    Theta theta_hat_;
    double sigma_hat_;
    std::vector<double> pi_grid_;
    std::vector<double> pi0_values_;
    std::vector<double> lambda_;
    Matrix F_;
    std::vector<Matrix> g_pi0_rows_;  // per pi0: n x k_beta
    std::vector<double> G_pi0_;       // |pi0| * L * k_beta
    std::vector<PiSlice> slices_;
    int usable_count_ = 0;
};

// sigma_hat G*(pi) before scaling: s(pi) = n^{-1/2} sum z_t d_psi_t(pi).
Vector score_draw(const PiSlice& slice, const Vector& z);

// Step 2: argmin over the pi grid of xi*(pi, pi0, b); ties take the smallest
// pi, followed by three-point parabolic refinement. Returns the minimizing
// slice (a grid slice or a freshly computed off-grid one).
struct PiStarResult {
    double pi_star = 0.0;
    int grid_index = -1;  // -1 when refined off-grid
    PiSlice refined;      // populated when grid_index < 0
};
PiStarResult step2_pi_star(const StepComponents& comps, const Vector& z, double sigma_hat,
                           const NuisancePoint& h);

// Step 3: Z*(pi, lambda) = n^{-1/2} sum z_t K_t(pi, lambda).
double step3_z_star(const StepComponents& comps, const PiSlice& slice, const Vector& z,
                    int lambda_idx);

// Step 4: the squared studentized four-term bootstrap statistic at
// pi = pi*(h). Throws TauDegenerateError when ||tau*|| < 1e-12.
double step4_T_star(const StepComponents& comps, const PiSlice& slice, const Vector& z,
                    double sigma_hat, const NuisancePoint& h, int lambda_idx);

// Steps 1-5 for the full (lambda, h) grid: one multiplier vector per draw,
// reused across the grid; p*(lambda, h) = (1/M) sum I(T*_j > T_n(lambda)).
BootPValueMatrix robust_pvalues(const ModelSpec& spec, const Sample& sample,
                                const FitResult& fitres, const TestSurface& surface,
                                const HGrid& hgrid, const BootConfig& config,
                                const ParameterSpace& space);

// Multiplier bootstrap under strong identification for the sup/average
// statistics: T*_j(lambda) = (n^{-1/2} sum z_t eps_t K_theta_t(lambda))^2 / v2.
struct StrongBootResult {
    double sup_stat = 0.0;
    double ave_stat = 0.0;
    double p_sup = 1.0;
    double p_ave = 1.0;
};
StrongBootResult strong_id_bootstrap(const ModelSpec& spec, const Sample& sample,
                                     const FitResult& fitres, const TestSurface& surface,
                                     const BootConfig& config);

constexpr double kTauNormTol = 1e-12;
constexpr int kTauRedrawLimit = 10;

}  // namespace starcm

#include "starcm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace starcm {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

const TestDecision* DecisionSummary::find(const std::string& name) const {
    for (const auto& t : tests)
        if (t.name == name) return &t;
    return nullptr;
}

std::vector<double> p_inf(const TestSurface& surface) {
    std::vector<double> p(surface.lambda.size(), kNaN);
    for (size_t l = 0; l < surface.lambda.size(); ++l)
        if (!surface.degenerate[l]) p[l] = chi2_1_sf(surface.T[l]);
    return p;
}

double lf_pvalue(const std::vector<double>& p_star_row, double p_inf_at_lambda) {
    if (p_star_row.empty()) throw std::invalid_argument("lf_pvalue: empty h grid");
    double m = p_inf_at_lambda;
    for (double p : p_star_row) m = std::max(m, p);
    return m;
}

double ics1_pvalue(double p_lf, double p_inf, const IcsDiagnostics& ics) {
    return ics.A_n <= ics.kappa_n ? p_lf : p_inf;
}

double pvot(const std::vector<double>& pvals, double alpha) {
    int total = 0, below = 0;
    for (double p : pvals) {
        if (std::isnan(p)) continue;
        ++total;
        if (p < alpha) ++below;
    }
    if (total == 0) throw std::invalid_argument("pvot: no usable grid points");
    return static_cast<double>(below) / total;
}

double sup_pvalue(const std::vector<double>& pvals) {
    double m = -1.0;
    for (double p : pvals)
        if (!std::isnan(p)) m = std::max(m, p);
    if (m < 0.0) throw std::invalid_argument("sup_pvalue: no usable grid points");
    return m;
}

LambdaStar pick_lambda_star(const std::vector<double>& grid, std::uint64_t seed,
                            std::uint64_t replication) {
    if (grid.empty()) throw std::invalid_argument("pick_lambda_star: empty grid");
    RngStream stream(seed, replication, 0, StreamPurpose::LambdaStar);
    const double u = stream.next_uniform();
    int idx = static_cast<int>(u * grid.size());
    idx = std::min(idx, static_cast<int>(grid.size()) - 1);
    LambdaStar out;
    out.lambda_star = grid[idx];
    out.index = idx;
    out.draw_seed = seed;
    return out;
}

namespace {

TestDecision p_test(const std::string& name, double stat, double p,
                    const std::vector<double>& levels) {
    TestDecision d;
    d.name = name;
    d.statistic = stat;
    d.value_per_level.assign(levels.size(), p);
    d.reject.resize(levels.size());
    for (size_t i = 0; i < levels.size(); ++i) d.reject[i] = p < levels[i];
    return d;
}

TestDecision pvot_test(const std::string& name, const std::vector<double>& pvals,
                       const std::vector<double>& levels) {
    TestDecision d;
    d.name = name;
    d.reject.resize(levels.size());
    for (size_t i = 0; i < levels.size(); ++i) {
        const double v = pvot(pvals, levels[i]);
        d.value_per_level.push_back(v);
        d.reject[i] = v > levels[i];
    }
    d.statistic = d.value_per_level.size() > 1 ? d.value_per_level[1] : d.value_per_level[0];
    return d;
}

// Advance to the next non-degenerate grid index (cyclically) so the random
// lambda always carries a p-value.
int resolve_active(int idx, const std::vector<bool>& degenerate) {
    const int L = static_cast<int>(degenerate.size());
    for (int k = 0; k < L; ++k) {
        const int j = (idx + k) % L;
        if (!degenerate[j]) return j;
    }
    throw DegenerateScaleError();
}

}  // namespace

RunResult run_all_tests(const ModelSpec& spec, const Sample& sample, const RunConfig& config) {
    RunResult r;
    r.fit = fit(spec, sample, config.space, config.fit);
    r.surface = test_surface(spec, sample, r.fit.theta_hat, config.lambda);
    r.pvals.lambda = r.surface.lambda;
    r.pvals.degenerate.assign(r.surface.degenerate.begin(), r.surface.degenerate.end());
    r.pvals.ics = ics_statistic(spec, sample, r.fit.theta_hat, config.kappa_a);
    r.pvals.p_inf = p_inf(r.surface);

    r.lambda_star =
        pick_lambda_star(r.surface.lambda, config.boot.seed, config.boot.replication);
    const int star = resolve_active(r.lambda_star.index, r.surface.degenerate);
    r.lambda_star.index = star;
    r.lambda_star.lambda_star = r.surface.lambda[star];

    const int L = static_cast<int>(r.surface.lambda.size());
    const auto& levels = config.levels;
    DecisionSummary& dec = r.decisions;
    dec.levels = levels;

    dec.tests.push_back(
        p_test("rand_T", r.surface.T[star], r.pvals.p_inf[star], levels));
    const double sup_p = sup_pvalue(r.pvals.p_inf);
    dec.tests.push_back(p_test("sup_p", sup_p, sup_p, levels));

    if (config.strong_bootstrap) {
        r.strong = strong_id_bootstrap(spec, sample, r.fit, r.surface, config.boot);
        dec.tests.push_back(p_test("sup_T", r.strong.sup_stat, r.strong.p_sup, levels));
        dec.tests.push_back(p_test("ave_T", r.strong.ave_stat, r.strong.p_ave, levels));
    }
    dec.tests.push_back(pvot_test("pvot_chi2", r.pvals.p_inf, levels));

    if (config.robust_bootstrap) {
        r.pvals.p_star = robust_pvalues(spec, sample, r.fit, r.surface, config.hgrid,
                                        config.boot, config.space);
        r.pvals.p_lf.assign(L, kNaN);
        r.pvals.p_ics1.assign(L, kNaN);
        for (int l = 0; l < L; ++l) {
            if (r.surface.degenerate[l]) continue;
            r.pvals.p_lf[l] = lf_pvalue(r.pvals.p_star.row(l), r.pvals.p_inf[l]);
            r.pvals.p_ics1[l] = ics1_pvalue(r.pvals.p_lf[l], r.pvals.p_inf[l], r.pvals.ics);
        }
        dec.tests.push_back(
            p_test("rand_LF", r.surface.T[star], r.pvals.p_lf[star], levels));
        dec.tests.push_back(
            p_test("rand_ICS1", r.surface.T[star], r.pvals.p_ics1[star], levels));
        const double sup_lf = sup_pvalue(r.pvals.p_lf);
        dec.tests.push_back(p_test("supP_LF", sup_lf, sup_lf, levels));
        const double sup_ics = sup_pvalue(r.pvals.p_ics1);
        dec.tests.push_back(p_test("supP_ICS1", sup_ics, sup_ics, levels));
        dec.tests.push_back(pvot_test("pvot_LF", r.pvals.p_lf, levels));
        dec.tests.push_back(pvot_test("pvot_ICS1", r.pvals.p_ics1, levels));
    }
    return r;
}

}  // namespace starcm

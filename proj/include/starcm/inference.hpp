#pragma once

// P-value combination across identification cases (least-favorable and
// ICS-selected), the PVOT / sup / random-lambda smoothers, and the driver
// that runs the full battery of eleven tests on one dataset.

#include <string>

#include "starcm/bootstrap.hpp"

namespace starcm {

struct PValueBundle {
    std::vector<double> lambda;
    std::vector<bool> degenerate;
    std::vector<double> p_inf;   // chi2(1) tail; NaN on degenerate lambda
    BootPValueMatrix p_star;
    std::vector<double> p_lf;    // NaN where degenerate or bootstrap disabled
    std::vector<double> p_ics1;
    IcsDiagnostics ics;
};

struct LambdaStar {
    double lambda_star = 0.0;
    int index = -1;
    std::uint64_t draw_seed = 0;
};

struct TestDecision {
    std::string name;
    double statistic = 0.0;
    // p-value for p-value tests; occupation time at each level for PVOT
    // tests (then value_per_level varies with the level).
    std::vector<double> value_per_level;
    std::vector<bool> reject;
};

struct DecisionSummary {
    std::vector<double> levels;
    std::vector<TestDecision> tests;

    const TestDecision* find(const std::string& name) const;
};

struct RunConfig {
    LambdaGrid lambda;
    FitConfig fit;
    BootConfig boot;
    HGrid hgrid = HGrid::paper_default();
    double kappa_a = 1.0;
    std::vector<double> levels = {0.01, 0.05, 0.10};
    bool robust_bootstrap = true;  // LF / ICS-1 battery
    bool strong_bootstrap = true;  // multiplier bootstrap for sup/ave T
    ParameterSpace space = ParameterSpace::lstar_default();
};

struct RunResult {
    FitResult fit;
    TestSurface surface;
    LambdaStar lambda_star;
    StrongBootResult strong;
    PValueBundle pvals;
    DecisionSummary decisions;
};

// p^inf(lambda) = chi2_1_sf(T(lambda)); NaN on degenerate lambda.
std::vector<double> p_inf(const TestSurface& surface);

// max{ sup_h p*(lambda, h), p_inf(lambda) }.
double lf_pvalue(const std::vector<double>& p_star_row, double p_inf_at_lambda);

// p_lf when A_n <= kappa_n (inclusive), else p_inf.
double ics1_pvalue(double p_lf, double p_inf, const IcsDiagnostics& ics);

// Occupation time: fraction of the non-NaN grid with p < alpha.
double pvot(const std::vector<double>& pvals, double alpha);

// Exact maximum over the non-NaN grid.
double sup_pvalue(const std::vector<double>& pvals);

// Uniform draw over the grid indices; deterministic in (seed, replication).
LambdaStar pick_lambda_star(const std::vector<double>& grid, std::uint64_t seed,
                            std::uint64_t replication = 0);

// Fit, surface, ICS, bootstraps, and the eleven decisions.
RunResult run_all_tests(const ModelSpec& spec, const Sample& sample, const RunConfig& config);

}  // namespace starcm

// Command-line front-end: `test` runs the full battery on a CSV dataset,
// `mc` runs a Monte Carlo experiment from a key=value config, and `dgp`
// simulates the reference data generating process.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "starcm_capi.h"

namespace {

int write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) {
        std::fprintf(stderr, "error: cannot open %s for writing\n", path.c_str());
        return STARCM_ERR_IO;
    }
    f << content;
    return f ? STARCM_OK : STARCM_ERR_IO;
}

int report_failure(int code) {
    std::fprintf(stderr, "error: %s\n", starcm_last_error());
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Specification tests for additively nonlinear regression models"};
    app.require_subcommand(1);

    // --- test ---
    auto* test = app.add_subcommand("test", "Run the eleven-test battery on CSV data");
    std::string data_path, test_out = "report.json", test_format = "json";
    double lambda_lo = 1.0, lambda_hi = 5.0, kappa_a = 1.0, speed = 10.0;
    int lambda_points = 25, boot_draws = 500, n_starts = 100, workers = 1;
    std::uint64_t seed = 0;
    std::vector<double> hgrid_pi, hgrid_b;
    bool intercept = false, no_robust = false, no_strong = false;
    test->add_option("data", data_path, "CSV file with header y,x1[,x2,...]")->required();
    test->add_option("--lambda-lo", lambda_lo, "Lower end of the lambda grid");
    test->add_option("--lambda-hi", lambda_hi, "Upper end of the lambda grid");
    test->add_option("--lambda-points", lambda_points, "Lambda grid size");
    test->add_option("--boot-draws", boot_draws, "Bootstrap draws M");
    test->add_option("--seed", seed, "Master seed");
    test->add_option("--hgrid-pi", hgrid_pi, "Nuisance grid for pi0");
    test->add_option("--hgrid-b", hgrid_b, "Nuisance grid for b");
    test->add_option("--kappa-a", kappa_a, "Scale a in kappa_n = a ln(ln n)");
    test->add_option("--speed", speed, "Transition speed");
    test->add_flag("--intercept", intercept, "Prepend a constant regressor");
    test->add_option("--n-starts", n_starts, "Optimizer start points");
    test->add_option("--workers", workers, "Worker cap (single dataset runs are serial)");
    test->add_option("--out", test_out, "JSON report path");
    test->add_option("--format", test_format, "Report format (json)");

    // --- mc ---
    auto* mc = app.add_subcommand("mc", "Run a Monte Carlo experiment from a config file");
    std::string mc_config_path, mc_out = "mc_table";
    int mc_workers = 0;
    bool mc_have_seed = false;
    std::uint64_t mc_seed = 0;
    mc->add_option("config", mc_config_path, "key = value config file")->required();
    mc->add_option("--out", mc_out, "Output path prefix (.csv and .json appended)");
    mc->add_option("--workers", mc_workers, "Override worker count");
    mc->add_option("--seed", mc_seed, "Override master seed")
        ->each([&](const std::string&) { mc_have_seed = true; });

    // --- dgp ---
    auto* dgp = app.add_subcommand("dgp", "Simulate the reference DGP to CSV");
    std::string dgp_out = "series.csv", beta_mode = "strong";
    int dgp_n = 100, burn_in = 100;
    double zeta0 = 0.6, pi0 = 0.0, varpi0 = 0.0, dgp_speed = 10.0;
    std::uint64_t dgp_seed = 0, dgp_rep = 0;
    bool zero_noise = false;
    dgp->add_option("--n", dgp_n, "Series length");
    dgp->add_option("--zeta0", zeta0, "Linear AR coefficient");
    dgp->add_option("--beta-mode", beta_mode, "strong|weak|none");
    dgp->add_option("--pi0", pi0, "Transition threshold");
    dgp->add_option("--varpi0", varpi0, "Omitted-nonlinearity scale");
    dgp->add_option("--speed", dgp_speed, "Transition speed");
    dgp->add_option("--burn-in", burn_in, "Burn-in length");
    dgp->add_option("--seed", dgp_seed, "Seed");
    dgp->add_option("--replication", dgp_rep, "Replication index for the noise stream");
    dgp->add_flag("--zero-noise", zero_noise, "Deterministic trajectory");
    dgp->add_option("--out", dgp_out, "Output CSV path");

    CLI11_PARSE(app, argc, argv);

    if (test->parsed()) {
        if (test_format != "json") {
            std::fprintf(stderr, "error: unsupported --format %s\n", test_format.c_str());
            return STARCM_ERR_CONFIG;
        }
        nlohmann::json opts = {{"lambda_lo", lambda_lo},
                               {"lambda_hi", lambda_hi},
                               {"lambda_points", lambda_points},
                               {"boot_draws", boot_draws},
                               {"seed", seed},
                               {"kappa_a", kappa_a},
                               {"speed", speed},
                               {"intercept", intercept},
                               {"n_starts", n_starts},
                               {"robust", !no_robust},
                               {"strong", !no_strong}};
        if (!hgrid_pi.empty()) opts["hgrid_pi"] = hgrid_pi;
        if (!hgrid_b.empty()) opts["hgrid_b"] = hgrid_b;
        (void)workers;
        starcm_result* res = nullptr;
        const int rc = starcm_test_file(data_path.c_str(), opts.dump().c_str(), &res);
        if (rc != STARCM_OK) return report_failure(rc);
        std::fputs(starcm_result_text(res), stdout);
        const int wrc = write_file(test_out, starcm_result_json(res));
        starcm_result_free(res);
        return wrc;
    }

    if (mc->parsed()) {
        std::ifstream f(mc_config_path);
        if (!f) {
            std::fprintf(stderr, "error: cannot open %s\n", mc_config_path.c_str());
            return STARCM_ERR_IO;
        }
        std::ostringstream buf;
        buf << f.rdbuf();
        std::string config = buf.str();
        if (mc_workers > 0) config += "\nworkers = " + std::to_string(mc_workers) + "\n";
        if (mc_have_seed) config += "\nseed = " + std::to_string(mc_seed) + "\n";
        std::fprintf(stderr, "running experiment from %s ...\n", mc_config_path.c_str());
        starcm_result* res = nullptr;
        const int rc = starcm_mc(config.c_str(), &res);
        if (rc != STARCM_OK) return report_failure(rc);
        int wrc = write_file(mc_out + ".csv", starcm_result_text(res));
        if (wrc == STARCM_OK) wrc = write_file(mc_out + ".json", starcm_result_json(res));
        starcm_result_free(res);
        std::fprintf(stderr, "wrote %s.csv and %s.json\n", mc_out.c_str(), mc_out.c_str());
        return wrc;
    }

    // dgp
    nlohmann::json opts = {{"n", dgp_n},
                           {"zeta0", zeta0},
                           {"beta_mode", beta_mode},
                           {"pi0", pi0},
                           {"varpi0", varpi0},
                           {"speed", dgp_speed},
                           {"burn_in", burn_in},
                           {"seed", dgp_seed},
                           {"replication", dgp_rep},
                           {"zero_noise", zero_noise}};
    starcm_result* res = nullptr;
    const int rc = starcm_dgp(opts.dump().c_str(), &res);
    if (rc != STARCM_OK) return report_failure(rc);
    const int wrc = write_file(dgp_out, starcm_result_text(res));
    starcm_result_free(res);
    return wrc;
}

#include "starcm_capi.h"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "starcm/io.hpp"
#include "starcm/montecarlo.hpp"

using nlohmann::json;

struct starcm_result {
    std::string json_text;
    std::string plain_text;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& message) {
    g_last_error = message;
    return code;
}

json number_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

std::vector<double> as_doubles(const json& j, const char* key) {
    if (!j.is_array()) throw std::invalid_argument(std::string(key) + " must be an array");
    std::vector<double> out;
    for (const auto& v : j) out.push_back(v.get<double>());
    return out;
}

starcm::ParameterSpace generic_space(int k_beta, int k_x) {
    constexpr double iota = 1e-10;
    starcm::ParameterSpace space;
    space.beta_box.assign(k_beta, starcm::Interval{-1.0 + iota, 1.0 - iota});
    std::vector<starcm::Interval> zbox(k_x, starcm::Interval{-10.0, 10.0});
    space.zeta_box_fn = [zbox](const starcm::Vector&) { return zbox; };
    space.pi_box = {starcm::Interval{-2.0, 2.0}};
    return space;
}

json decisions_json(const starcm::DecisionSummary& dec) {
    json out;
    out["levels"] = dec.levels;
    out["tests"] = json::array();
    for (const auto& t : dec.tests) {
        json jt;
        jt["name"] = t.name;
        jt["statistic"] = number_or_null(t.statistic);
        jt["values"] = json::array();
        for (double v : t.value_per_level) jt["values"].push_back(number_or_null(v));
        jt["reject"] = json::array();
        for (bool b : t.reject) jt["reject"].push_back(b);
        out["tests"].push_back(jt);
    }
    return out;
}

std::string decisions_text(const starcm::DecisionSummary& dec) {
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-11s %12s", "test", "statistic");
    os << buf;
    for (double a : dec.levels) {
        std::snprintf(buf, sizeof buf, "  %9s", ("p/occ(" + std::to_string(a).substr(1, 3) + ")").c_str());
        os << buf;
    }
    os << "  reject\n";
    for (const auto& t : dec.tests) {
        std::snprintf(buf, sizeof buf, "%-11s %12.4f", t.name.c_str(), t.statistic);
        os << buf;
        for (double v : t.value_per_level) {
            std::snprintf(buf, sizeof buf, "  %9.4f", v);
            os << buf;
        }
        os << "  ";
        for (bool b : t.reject) os << (b ? 'R' : '.');
        os << "\n";
    }
    return os.str();
}

json vec_json(const std::vector<double>& v) {
    json out = json::array();
    for (double x : v) out.push_back(number_or_null(x));
    return out;
}

int run_test_on_sample(starcm::Sample sample, const std::string& options_json,
                       starcm_result** out) {
    using namespace starcm;
    ModelSpec spec;
    RunConfig rc;
    bool intercept = false;
    try {
        const json opts =
            options_json.empty() ? json::object() : json::parse(options_json);
        if (!opts.is_object()) return fail(STARCM_ERR_CONFIG, "options must be a JSON object");
        for (auto it = opts.begin(); it != opts.end(); ++it) {
            const std::string& k = it.key();
            const json& v = it.value();
            if (k == "lambda_lo")
                rc.lambda.lo = v.get<double>();
            else if (k == "lambda_hi")
                rc.lambda.hi = v.get<double>();
            else if (k == "lambda_points")
                rc.lambda.points = v.get<int>();
            else if (k == "boot_draws")
                rc.boot.M = v.get<int>();
            else if (k == "seed") {
                rc.boot.seed = v.get<std::uint64_t>();
                rc.fit.start_seed = rc.boot.seed;
            } else if (k == "hgrid_pi")
                rc.hgrid.pi0_values = as_doubles(v, "hgrid_pi");
            else if (k == "hgrid_b")
                rc.hgrid.b_values = as_doubles(v, "hgrid_b");
            else if (k == "kappa_a")
                rc.kappa_a = v.get<double>();
            else if (k == "speed")
                spec.speed = v.get<double>();
            else if (k == "intercept")
                intercept = v.get<bool>();
            else if (k == "robust")
                rc.robust_bootstrap = v.get<bool>();
            else if (k == "strong")
                rc.strong_bootstrap = v.get<bool>();
            else if (k == "n_starts")
                rc.fit.n_starts = v.get<int>();
            else if (k == "pi_star_grid")
                rc.boot.pi_star_grid = v.get<int>();
            else
                return fail(STARCM_ERR_CONFIG, "unknown option key: " + k);
        }
    } catch (const std::exception& e) {
        return fail(STARCM_ERR_CONFIG, std::string("bad options: ") + e.what());
    }

    try {
        if (sample.n() < 30) return fail(STARCM_ERR_IO, "need at least 30 data rows");
        if (intercept) {
            Matrix X(sample.n(), sample.X.cols() + 1);
            for (int t = 0; t < sample.n(); ++t) {
                X(t, 0) = 1.0;
                for (int j = 0; j < sample.X.cols(); ++j) X(t, j + 1) = sample.X(t, j);
            }
            sample.X = X;
            spec.include_constant = true;
        }
        spec.k_x = sample.X.cols();
        spec.k_beta = intercept ? spec.k_x - 1 : spec.k_x;
        if (spec.k_x == 1 && !intercept)
            rc.space = ParameterSpace::lstar_default();
        else
            rc.space = generic_space(spec.k_beta, spec.k_x);

        const RunResult r = run_all_tests(spec, sample, rc);

        json rep;
        rep["fit"] = {{"zeta", r.fit.theta_hat.zeta},
                      {"beta", r.fit.theta_hat.beta},
                      {"pi", r.fit.theta_hat.pi},
                      {"criterion", r.fit.criterion},
                      {"sigma2", r.fit.sigma2_hat},
                      {"converged", r.fit.converged},
                      {"starts_used", r.fit.starts_used}};
        rep["surface"] = {{"lambda", r.surface.lambda},
                          {"T", vec_json(r.surface.T)},
                          {"v2", vec_json(r.surface.v2)},
                          {"numerator", vec_json(r.surface.numerator)},
                          {"degenerate", r.surface.degenerate}};
        rep["ics"] = {{"A_n", r.pvals.ics.A_n},
                      {"kappa_n", r.pvals.ics.kappa_n},
                      {"weak_selected", r.pvals.ics.weak_selected}};
        rep["lambda_star"] = {{"value", r.lambda_star.lambda_star},
                              {"index", r.lambda_star.index}};
        json pv;
        pv["p_inf"] = vec_json(r.pvals.p_inf);
        if (rc.strong_bootstrap)
            rep["strong"] = {{"sup_stat", r.strong.sup_stat},
                             {"ave_stat", r.strong.ave_stat},
                             {"p_sup", r.strong.p_sup},
                             {"p_ave", r.strong.p_ave}};
        if (rc.robust_bootstrap) {
            pv["p_lf"] = vec_json(r.pvals.p_lf);
            pv["p_ics1"] = vec_json(r.pvals.p_ics1);
            json ps;
            ps["tau_redraws"] = r.pvals.p_star.tau_redraws;
            ps["h_pi0"] = json::array();
            ps["h_b"] = json::array();
            for (const auto& h : r.pvals.p_star.h) {
                ps["h_pi0"].push_back(h.pi0[0]);
                ps["h_b"].push_back(h.b[0]);
            }
            ps["values"] = json::array();
            for (size_t l = 0; l < r.pvals.p_star.lambda.size(); ++l)
                ps["values"].push_back(r.pvals.p_star.row(static_cast<int>(l)));
            pv["p_star"] = ps;
        }
        rep["pvalues"] = pv;
        rep["decisions"] = decisions_json(r.decisions);

        auto* res = new starcm_result;
        res->json_text = rep.dump(2) + "\n";
        res->plain_text = decisions_text(r.decisions);
        *out = res;
        g_last_error.clear();
        return STARCM_OK;
    } catch (const EstimationFailedError& e) {
        return fail(STARCM_ERR_ESTIMATION, e.what());
    } catch (const NearSingularError& e) {
        return fail(STARCM_ERR_ESTIMATION, e.what());
    } catch (const std::exception& e) {
        return fail(STARCM_ERR_INTERNAL, e.what());
    }
}

std::vector<double> parse_list(const std::string& s, const std::string& key) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string field;
    while (std::getline(is, field, ',')) {
        try {
            size_t pos = 0;
            out.push_back(std::stod(field, &pos));
            while (pos < field.size() && std::isspace(static_cast<unsigned char>(field[pos])))
                ++pos;
            if (pos != field.size()) throw std::invalid_argument(field);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad numeric list for key " + key);
        }
    }
    if (out.empty()) throw std::invalid_argument("empty list for key " + key);
    return out;
}

}  // namespace

extern "C" {

int starcm_test_csv(const char* csv_text, const char* options_json, starcm_result** out) {
    if (out == nullptr || csv_text == nullptr)
        return fail(STARCM_ERR_CONFIG, "null argument");
    *out = nullptr;
    starcm::Sample sample;
    try {
        sample = starcm::read_sample_csv(csv_text);
    } catch (const starcm::CsvError& e) {
        return fail(STARCM_ERR_IO, e.what());
    }
    return run_test_on_sample(std::move(sample),
                              options_json != nullptr ? options_json : "", out);
}

int starcm_test_file(const char* csv_path, const char* options_json, starcm_result** out) {
    if (out == nullptr || csv_path == nullptr)
        return fail(STARCM_ERR_CONFIG, "null argument");
    *out = nullptr;
    starcm::Sample sample;
    try {
        sample = starcm::read_sample_csv_file(csv_path);
    } catch (const starcm::CsvError& e) {
        return fail(STARCM_ERR_IO, e.what());
    }
    return run_test_on_sample(std::move(sample),
                              options_json != nullptr ? options_json : "", out);
}

int starcm_mc(const char* config_text, starcm_result** out) {
    if (out == nullptr || config_text == nullptr)
        return fail(STARCM_ERR_CONFIG, "null argument");
    *out = nullptr;
    using namespace starcm;
    ExperimentConfig config;
    std::vector<std::string> beta_modes = {"strong"};
    std::vector<double> varpi0s = {0.0};
    try {
        std::istringstream is(config_text);
        std::string line;
        while (std::getline(is, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                bool blank = true;
                for (char c : line)
                    if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
                if (blank) continue;
                throw std::invalid_argument("expected key = value: " + line);
            }
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                const auto b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            const std::string key = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            if (key == "replications")
                config.replications = std::stoi(val);
            else if (key == "n")
                config.dgp.n = std::stoi(val);
            else if (key == "zeta0")
                config.dgp.zeta0 = std::stod(val);
            else if (key == "pi0")
                config.dgp.pi0 = std::stod(val);
            else if (key == "speed")
                config.dgp.speed = std::stod(val);
            else if (key == "burn_in")
                config.dgp.burn_in = std::stoi(val);
            else if (key == "beta_modes") {
                beta_modes.clear();
                std::istringstream ms(val);
                std::string m;
                while (std::getline(ms, m, ',')) beta_modes.push_back(trim(m));
            } else if (key == "varpi0s")
                varpi0s = parse_list(val, key);
            else if (key == "lambda_lo")
                config.lambda_lo = std::stod(val);
            else if (key == "lambda_hi")
                config.lambda_hi = std::stod(val);
            else if (key == "lambda_points")
                config.lambda_points = std::stoi(val);
            else if (key == "boot_draws")
                config.boot.M = std::stoi(val);
            else if (key == "seed")
                config.master_seed = std::stoull(val);
            else if (key == "levels")
                config.levels = parse_list(val, key);
            else if (key == "workers")
                config.parallel_workers = std::stoi(val);
            else if (key == "robust")
                config.robust_bootstrap = (val == "true" || val == "1");
            else if (key == "strong")
                config.strong_bootstrap = (val == "true" || val == "1");
            else if (key == "hgrid_pi")
                config.hgrid.pi0_values = parse_list(val, key);
            else if (key == "hgrid_b")
                config.hgrid.b_values = parse_list(val, key);
            else if (key == "kappa_a")
                config.kappa_a = std::stod(val);
            else if (key == "n_starts")
                config.fit.n_starts = std::stoi(val);
            else if (key == "pi_star_grid")
                config.boot.pi_star_grid = std::stoi(val);
            else
                throw std::invalid_argument("unknown config key: " + key);
        }
        config.cases.clear();
        for (const std::string& m : beta_modes)
            for (double w : varpi0s) config.cases.push_back({beta_mode_from_string(m), w});
    } catch (const std::exception& e) {
        return fail(STARCM_ERR_CONFIG, e.what());
    }
    try {
        const RejectionTable table = run_experiment(config);
        auto* res = new starcm_result;
        res->json_text = emit_table(table, "json");
        res->plain_text = emit_table(table, "csv");
        *out = res;
        g_last_error.clear();
        return STARCM_OK;
    } catch (const ReplicationFailureError& e) {
        return fail(STARCM_ERR_ESTIMATION, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(STARCM_ERR_CONFIG, e.what());
    } catch (const std::exception& e) {
        return fail(STARCM_ERR_INTERNAL, e.what());
    }
}

int starcm_dgp(const char* options_json, starcm_result** out) {
    if (out == nullptr) return fail(STARCM_ERR_CONFIG, "null argument");
    *out = nullptr;
    using namespace starcm;
    DgpConfig config;
    try {
        const json opts = (options_json == nullptr || options_json[0] == '\0')
                              ? json::object()
                              : json::parse(options_json);
        for (auto it = opts.begin(); it != opts.end(); ++it) {
            const std::string& k = it.key();
            const json& v = it.value();
            if (k == "n")
                config.n = v.get<int>();
            else if (k == "zeta0")
                config.zeta0 = v.get<double>();
            else if (k == "beta_mode")
                config.beta_mode = beta_mode_from_string(v.get<std::string>());
            else if (k == "pi0")
                config.pi0 = v.get<double>();
            else if (k == "varpi0")
                config.varpi0 = v.get<double>();
            else if (k == "speed")
                config.speed = v.get<double>();
            else if (k == "burn_in")
                config.burn_in = v.get<int>();
            else if (k == "seed")
                config.seed = v.get<std::uint64_t>();
            else if (k == "replication")
                config.replication = v.get<std::uint64_t>();
            else if (k == "zero_noise")
                config.zero_noise = v.get<bool>();
            else
                throw std::invalid_argument("unknown option key: " + k);
        }
        config.validate();
    } catch (const std::exception& e) {
        return fail(STARCM_ERR_CONFIG, e.what());
    }
    try {
        const Sample sample = simulate_dgp(config);
        auto* res = new starcm_result;
        res->plain_text = write_sample_csv(sample);
        json echo = {{"n", config.n},
                     {"zeta0", config.zeta0},
                     {"beta_mode", to_string(config.beta_mode)},
                     {"pi0", config.pi0},
                     {"varpi0", config.varpi0},
                     {"speed", config.speed},
                     {"burn_in", config.burn_in},
                     {"seed", config.seed},
                     {"replication", config.replication},
                     {"zero_noise", config.zero_noise}};
        res->json_text = echo.dump(2) + "\n";
        *out = res;
        g_last_error.clear();
        return STARCM_OK;
    } catch (const std::exception& e) {
        return fail(STARCM_ERR_INTERNAL, e.what());
    }
}

const char* starcm_result_json(const starcm_result* r) {
    return r != nullptr ? r->json_text.c_str() : "";
}

const char* starcm_result_text(const starcm_result* r) {
    return r != nullptr ? r->plain_text.c_str() : "";
}

void starcm_result_free(starcm_result* r) { delete r; }

const char* starcm_last_error(void) { return g_last_error.c_str(); }

}  // extern "C"

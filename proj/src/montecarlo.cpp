#include "starcm/montecarlo.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace starcm {

double beta_value(BetaMode mode, int n) {
    switch (mode) {
        case BetaMode::Strong: return 0.3;
        case BetaMode::Weak: return 0.3 / std::sqrt(static_cast<double>(n));
        case BetaMode::None: return 0.0;
    }
    throw std::invalid_argument("beta_value: bad mode");
}

std::string to_string(BetaMode mode) {
    switch (mode) {
        case BetaMode::Strong: return "strong";
        case BetaMode::Weak: return "weak";
        case BetaMode::None: return "none";
    }
    throw std::invalid_argument("to_string: bad mode");
}

BetaMode beta_mode_from_string(const std::string& s) {
    if (s == "strong") return BetaMode::Strong;
    if (s == "weak") return BetaMode::Weak;
    if (s == "none") return BetaMode::None;
    throw std::invalid_argument("beta_mode_from_string: " + s);
}

void DgpConfig::validate() const {
    if (n < 1) throw std::invalid_argument("DgpConfig: n must be >= 1");
    if (burn_in < 0) throw std::invalid_argument("DgpConfig: burn_in must be >= 0");
    const double b = beta_value(beta_mode, n);
    if (!(std::fabs(zeta0 + b) < 1.0))
        throw std::invalid_argument("DgpConfig: |zeta0 + beta| must be < 1");
}

Sample simulate_dgp(const DgpConfig& config) {
    config.validate();
    const int total = config.burn_in + config.n;
    Vector eps(total, 0.0);
    if (!config.zero_noise) {
        RngStream stream(config.seed, config.replication, 0, StreamPurpose::DgpNoise);
        eps = stream.gaussian_draws(static_cast<size_t>(total));
    }
    const double beta = beta_value(config.beta_mode, config.n);

    Sample s;
    s.y.reserve(config.n);
    s.X = Matrix(config.n, 1);
    double y = 0.0;
    int kept = 0;
    for (int t = 0; t < total; ++t) {
        const double prev = y;
        y = config.zeta0 * prev + beta * prev * logistic(config.speed * (prev - config.pi0)) +
            config.varpi0 / (1.0 + prev * prev) + eps[t];
        if (t >= config.burn_in) {
            s.X(kept, 0) = prev;
            s.y.push_back(y);
            ++kept;
        }
    }
    return s;
}

void ExperimentConfig::validate() const {
    if (replications < 1) throw std::invalid_argument("ExperimentConfig: replications >= 1");
    if (cases.empty()) throw std::invalid_argument("ExperimentConfig: no cases");
    if (lambda_points < 2) throw std::invalid_argument("ExperimentConfig: lambda_points >= 2");
    if (parallel_workers < 1) throw std::invalid_argument("ExperimentConfig: workers >= 1");
    for (double a : levels)
        if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("ExperimentConfig: bad level");
}

const TableCell* RejectionTable::find(const std::string& test, const std::string& beta_mode,
                                      double varpi0, double level) const {
    for (const auto& c : cells)
        if (c.test == test && c.beta_mode == beta_mode &&
            std::fabs(c.varpi0 - varpi0) < 1e-12 && std::fabs(c.level - level) < 1e-12)
            return &c;
    return nullptr;
}

bool RejectionTable::same_cells(const RejectionTable& other, double tol) const {
    if (cells.size() != other.cells.size()) return false;
    for (size_t i = 0; i < cells.size(); ++i) {
        const TableCell& a = cells[i];
        const TableCell& b = other.cells[i];
        if (a.test != b.test || a.beta_mode != b.beta_mode) return false;
        if (std::fabs(a.varpi0 - b.varpi0) > tol || std::fabs(a.level - b.level) > tol ||
            std::fabs(a.freq - b.freq) > tol || std::fabs(a.mc_se - b.mc_se) > tol)
            return false;
    }
    return true;
}

namespace {

struct RepOutcome {
    bool ok = false;
    std::string error;
    // flags[test_index][level_index], in DecisionSummary order
    std::vector<std::string> names;
    std::vector<std::vector<char>> flags;
};

RepOutcome one_replication(const ExperimentConfig& config, const ExperimentCase& cs,
                           std::uint64_t rep_offset) {
    RepOutcome out;
    DgpConfig dgp = config.dgp;
    dgp.beta_mode = cs.beta_mode;
    dgp.varpi0 = cs.varpi0;
    dgp.seed = config.master_seed;
    dgp.replication = rep_offset;

    RunConfig rc;
    rc.lambda = LambdaGrid{config.lambda_lo, config.lambda_hi, config.lambda_points};
    rc.fit = config.fit;
    rc.fit.start_seed = config.master_seed;
    rc.fit.replication = rep_offset;
    rc.boot = config.boot;
    rc.boot.seed = config.master_seed;
    rc.boot.replication = rep_offset;
    rc.hgrid = config.hgrid;
    rc.levels = config.levels;
    rc.kappa_a = config.kappa_a;
    rc.robust_bootstrap = config.robust_bootstrap;
    rc.strong_bootstrap = config.strong_bootstrap;

    ModelSpec spec;  // k_x = k_beta = k_pi = 1, no intercept, per the design
    spec.speed = config.dgp.speed;

    try {
        const Sample sample = simulate_dgp(dgp);
        const RunResult r = run_all_tests(spec, sample, rc);
        for (const TestDecision& t : r.decisions.tests) {
            out.names.push_back(t.name);
            out.flags.emplace_back(t.reject.begin(), t.reject.end());
        }
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

RejectionTable run_experiment(const ExperimentConfig& config) {
    config.validate();
    const int R = config.replications;
    const int C = static_cast<int>(config.cases.size());
    std::vector<RepOutcome> outcomes(static_cast<size_t>(R) * C);

    // Replication sub-streams are keyed by a global (case, rep) offset, so
    // scheduling cannot change any draw.
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int idx = next.fetch_add(1);
            if (idx >= R * C) return;
            const int c = idx / R;
            const int r = idx % R;
            outcomes[idx] = one_replication(config, config.cases[c],
                                            static_cast<std::uint64_t>(c) * R + r);
        }
    };
    if (config.parallel_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < config.parallel_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    RejectionTable table;
    int failures = 0;
    std::string first_error;
    for (int c = 0; c < C; ++c) {
        const ExperimentCase& cs = config.cases[c];
        // Count per test name in first-seen order.
        std::vector<std::string> names;
        std::vector<std::vector<long>> counts;
        int ok_count = 0;
        for (int r = 0; r < R; ++r) {
            const RepOutcome& o = outcomes[static_cast<size_t>(c) * R + r];
            if (!o.ok) {
                ++failures;
                if (first_error.empty()) first_error = o.error;
                continue;
            }
            ++ok_count;
            for (size_t t = 0; t < o.names.size(); ++t) {
                size_t pos = 0;
                while (pos < names.size() && names[pos] != o.names[t]) ++pos;
                if (pos == names.size()) {
                    names.push_back(o.names[t]);
                    counts.emplace_back(config.levels.size(), 0);
                }
                for (size_t a = 0; a < config.levels.size(); ++a)
                    counts[pos][a] += o.flags[t][a] ? 1 : 0;
            }
        }
        if (ok_count == 0) continue;
        for (size_t t = 0; t < names.size(); ++t)
            for (size_t a = 0; a < config.levels.size(); ++a) {
                TableCell cell;
                cell.test = names[t];
                cell.beta_mode = to_string(cs.beta_mode);
                cell.varpi0 = cs.varpi0;
                cell.level = config.levels[a];
                cell.freq = static_cast<double>(counts[t][a]) / ok_count;
                cell.mc_se = std::sqrt(cell.freq * (1.0 - cell.freq) / ok_count);
                table.cells.push_back(cell);
            }
    }

    const int total = R * C;
    if (failures * 100 > total)
        throw ReplicationFailureError("run_experiment: " + std::to_string(failures) + "/" +
                                      std::to_string(total) +
                                      " replications failed (>1%); first error: " + first_error);
    table.metadata["replications"] = std::to_string(R);
    table.metadata["failures"] = std::to_string(failures);
    table.metadata["master_seed"] = std::to_string(config.master_seed);
    table.metadata["n"] = std::to_string(config.dgp.n);
    table.metadata["boot_draws"] = std::to_string(config.boot.M);
    table.metadata["lambda_points"] = std::to_string(config.lambda_points);
    return table;
}

std::string emit_table(const RejectionTable& table, const std::string& format) {
    if (format == "csv") {
        std::ostringstream os;
        for (const auto& [k, v] : table.metadata) os << "# " << k << "=" << v << "\n";
        os << "test,beta_mode,varpi0,level,freq,mc_se\n";
        for (const TableCell& c : table.cells)
            os << c.test << "," << c.beta_mode << "," << fmt_double(c.varpi0) << ","
               << fmt_double(c.level) << "," << fmt_double(c.freq) << ","
               << fmt_double(c.mc_se) << "\n";
        return os.str();
    }
    if (format == "json") {
        nlohmann::json j;
        j["metadata"] = table.metadata;
        j["cells"] = nlohmann::json::array();
        for (const TableCell& c : table.cells)
            j["cells"].push_back({{"test", c.test},
                                  {"beta_mode", c.beta_mode},
                                  {"varpi0", c.varpi0},
                                  {"level", c.level},
                                  {"freq", c.freq},
                                  {"mc_se", c.mc_se}});
        return j.dump(2) + "\n";
    }
    throw std::invalid_argument("emit_table: unknown format " + format);
}

RejectionTable parse_table(const std::string& text, const std::string& format) {
    RejectionTable table;
    if (format == "csv") {
        std::istringstream is(text);
        std::string line;
        bool header_seen = false;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            if (line[0] == '#') {
                const auto sp = line.find(' ');
                const auto eq = line.find('=', sp);
                if (eq != std::string::npos)
                    table.metadata[line.substr(sp + 1, eq - sp - 1)] = line.substr(eq + 1);
                continue;
            }
            if (!header_seen) {
                header_seen = true;  // column row
                continue;
            }
            std::istringstream ls(line);
            std::string field;
            TableCell c;
            std::getline(ls, c.test, ',');
            std::getline(ls, c.beta_mode, ',');
            std::getline(ls, field, ',');
            c.varpi0 = std::stod(field);
            std::getline(ls, field, ',');
            c.level = std::stod(field);
            std::getline(ls, field, ',');
            c.freq = std::stod(field);
            std::getline(ls, field, ',');
            c.mc_se = std::stod(field);
            table.cells.push_back(c);
        }
        return table;
    }
    if (format == "json") {
        const nlohmann::json j = nlohmann::json::parse(text);
        for (auto it = j.at("metadata").begin(); it != j.at("metadata").end(); ++it)
            table.metadata[it.key()] = it.value().get<std::string>();
        for (const auto& jc : j.at("cells")) {
            TableCell c;
            c.test = jc.at("test").get<std::string>();
            c.beta_mode = jc.at("beta_mode").get<std::string>();
            c.varpi0 = jc.at("varpi0").get<double>();
            c.level = jc.at("level").get<double>();
            c.freq = jc.at("freq").get<double>();
            c.mc_se = jc.at("mc_se").get<double>();
            table.cells.push_back(c);
        }
        return table;
    }
    throw std::invalid_argument("parse_table: unknown format " + format);
}

}  // namespace starcm

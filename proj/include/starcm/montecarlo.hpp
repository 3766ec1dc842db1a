#pragma once

// Simulation harness: the self-exciting threshold-style data generating
// process, replication loops over identification cases and alternatives,
// and rejection-frequency tables.

#include <map>

#include "starcm/inference.hpp"

namespace starcm {

enum class BetaMode { Strong, Weak, None };

// Strong -> .3, Weak -> .3/sqrt(n), None -> 0.
double beta_value(BetaMode mode, int n);
std::string to_string(BetaMode mode);
BetaMode beta_mode_from_string(const std::string& s);

struct DgpConfig {
    int n = 100;
    double zeta0 = 0.6;
    BetaMode beta_mode = BetaMode::Strong;
    double pi0 = 0.0;
    double varpi0 = 0.0;
    double speed = 10.0;
    int burn_in = 100;
    std::uint64_t seed = 0;
    std::uint64_t replication = 0;
    bool zero_noise = false;  // deterministic trajectory, for checks

    void validate() const;
};

// y_t = zeta0 y_{t-1} + beta_n y_{t-1} logistic(speed (y_{t-1} - pi0))
//       + varpi0 / (1 + y_{t-1}^2) + eps_t, y_0 = 0, x_t = y_{t-1}.
Sample simulate_dgp(const DgpConfig& config);

struct ExperimentCase {
    BetaMode beta_mode = BetaMode::Strong;
    double varpi0 = 0.0;
};

struct ExperimentConfig {
    int replications = 100;
    DgpConfig dgp;  // n, zeta0, pi0, speed, burn_in shared across cases
    std::vector<ExperimentCase> cases = {{BetaMode::Strong, 0.0}};
    FitConfig fit;
    BootConfig boot;
    HGrid hgrid = HGrid::paper_default();
    double lambda_lo = 1.0;
    double lambda_hi = 5.0;
    int lambda_points = 25;
    std::vector<double> levels = {0.01, 0.05, 0.10};
    std::uint64_t master_seed = 0;
    int parallel_workers = 1;
    bool robust_bootstrap = true;
    bool strong_bootstrap = true;
    double kappa_a = 1.0;

    void validate() const;
};

struct TableCell {
    std::string test;
    std::string beta_mode;
    double varpi0 = 0.0;
    double level = 0.0;
    double freq = 0.0;
    double mc_se = 0.0;
};

struct RejectionTable {
    std::vector<TableCell> cells;
    std::map<std::string, std::string> metadata;

    const TableCell* find(const std::string& test, const std::string& beta_mode,
                          double varpi0, double level) const;
    bool same_cells(const RejectionTable& other, double tol = 0.0) const;
};

class ReplicationFailureError : public std::runtime_error {
public:
    explicit ReplicationFailureError(const std::string& what) : std::runtime_error(what) {}
};

// Runs every (case, replication) cell; per-replication failures are counted
// and excluded, and more than 1% of them fails the run. Deterministic in
// master_seed regardless of parallel_workers.
RejectionTable run_experiment(const ExperimentConfig& config);

// format: "csv" or "json". Round-trips through parse_table.
std::string emit_table(const RejectionTable& table, const std::string& format);
RejectionTable parse_table(const std::string& text, const std::string& format);

}  // namespace starcm

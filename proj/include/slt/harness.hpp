#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "slt/builders.hpp"
#include "slt/checkpoint.hpp"
#include "slt/config.hpp"
#include "slt/tickets.hpp"

namespace slt {

struct RunResult {
    TicketReport report;
    double final_test_acc = 0.0;
    std::filesystem::path out_dir;
};

// Dispatches to the configured ticket pipeline and writes metrics.csv
// (one row per epoch plus a baseline row 0), report.json, config.txt and
// checkpoint.sltc under run.out_dir.
RunResult run_experiment(const ExperimentConfig& config);

struct SweepRow {
    double value = 0.0;
    int n_seeds = 0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    int errors = 0;
};

// Cross product of values x seeds on one axis (pr_c, pr_p, T, lambda); runs
// execute on a worker pool bounded by SLT_THREADS. Per-run failures are
// recorded and the sweep continues. Writes summary.csv under out_root.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<double>& values,
                                const std::vector<uint64_t>& seeds,
                                const std::filesystem::path& out_root);

std::string format_double(double v);

}  // namespace slt

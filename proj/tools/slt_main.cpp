#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slt/harness.hpp"

namespace {

slt::ExperimentConfig make_config(const std::string& config_path,
                                  const std::vector<std::string>& overrides) {
    slt::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = slt::load_config(config_path);
    for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) throw slt::ConfigError("--set expects key=value, got " + kv);
        slt::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos <= csv.size()) {
        const size_t comma = csv.find(',', pos);
        const std::string item = csv.substr(pos, comma == std::string::npos ? csv.size() - pos
                                                                            : comma - pos);
        if (!item.empty()) out.push_back(std::stod(item));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::vector<uint64_t> parse_seeds(const std::string& csv) {
    std::vector<uint64_t> out;
    for (double v : parse_doubles(csv)) out.push_back(static_cast<uint64_t>(v));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spiking lottery ticket experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (key = value lines)");
        cmd->add_option("--set", overrides, "override a config key, e.g. --set ticket.pr_c=0.5");
    };

    CLI::App* run = app.add_subcommand("run", "run one experiment");
    add_common(run);

    CLI::App* sweep = app.add_subcommand("sweep", "sweep one axis over values x seeds");
    add_common(sweep);
    std::string axis = "pr_c", values_csv, seeds_csv = "1", sweep_out = "runs/sweep";
    sweep->add_option("--axis", axis, "pr_c | pr_p | T | lambda")->required();
    sweep->add_option("--values", values_csv, "comma-separated values")->required();
    sweep->add_option("--seeds", seeds_csv, "comma-separated seeds");
    sweep->add_option("--out", sweep_out, "sweep output root");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a saved checkpoint");
    std::string eval_ckpt;
    eval->add_option("checkpoint", eval_ckpt, "checkpoint.sltc path")->required();

    CLI::App* inspect = app.add_subcommand("inspect-checkpoint", "list checkpoint sections");
    std::string inspect_ckpt;
    inspect->add_option("checkpoint", inspect_ckpt, "checkpoint.sltc path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            slt::RunResult res = slt::run_experiment(make_config(config_path, overrides));
            std::cout << slt::report_to_json(res.report) << "\n";
            std::cout << "artifacts: " << res.out_dir.string() << "\n";
        } else if (sweep->parsed()) {
            slt::ExperimentConfig cfg = make_config(config_path, overrides);
            const auto rows =
                slt::run_sweep(cfg, axis, parse_doubles(values_csv), parse_seeds(seeds_csv), sweep_out);
            for (const slt::SweepRow& r : rows)
                std::cout << axis << "=" << slt::format_double(r.value)
                          << " mean_acc=" << slt::format_double(r.mean_acc)
                          << " std=" << slt::format_double(r.std_acc) << " n=" << r.n_seeds
                          << (r.errors ? " errors=" + std::to_string(r.errors) : "") << "\n";
        } else if (eval->parsed()) {
            slt::LoadedCheckpoint ck = slt::load_checkpoint(eval_ckpt);
            const slt::Dataset test = slt::build_dataset(ck.config, "test");
            const slt::PatchTicket* ticket = ck.ticket ? &*ck.ticket : nullptr;
            slt::EvalResult ev = slt::evaluate(*ck.model, test, ck.config.timesteps,
                                               ck.config.eval_batch, ticket);
            std::cout << "accuracy=" << slt::format_double(ev.accuracy)
                      << " loss=" << slt::format_double(ev.loss)
                      << " spike_rate=" << slt::format_double(ev.spike_rate)
                      << " synops_per_sample=" << slt::format_double(ev.synops_per_sample) << "\n";
        } else if (inspect->parsed()) {
            std::cout << slt::inspect_checkpoint(inspect_ckpt) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

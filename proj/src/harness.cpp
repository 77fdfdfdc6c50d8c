#include "slt/harness.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace slt {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

struct MetricsWriter {
    std::string body;
    int rows = 0;

    static std::string header() {
        return "epoch,loss,train_acc,test_acc,spike_rate,synops,sparsity_conn,sparsity_patch\n";
    }

    void add(int epoch, double loss, double train_acc, const EvalResult& test, double sp_conn,
             double sp_patch) {
        body += std::to_string(epoch);
        for (double v : {loss, train_acc, test.accuracy, test.spike_rate, test.synops_per_sample,
                         sp_conn, sp_patch}) {
            body += ",";
            body += format_double(v);
        }
        body += "\n";
        ++rows;
    }

    void write(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << header() << body;
    }
};

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const std::filesystem::path out_dir(config.out_dir);
    std::filesystem::create_directories(out_dir);

    RngStream init(derive_seed(config.seed, "init.model"));
    std::unique_ptr<Model> model = build_model(config, init);
    const Dataset train = build_dataset(config, "train");
    const Dataset test = build_dataset(config, "test");

    MetricsWriter metrics;
    PatchTicket ticket;
    bool have_ticket = false;
    auto* former = dynamic_cast<SpikeformerToy*>(model.get());

    auto test_eval = [&]() {
        return evaluate(*model, test, config.timesteps, config.eval_batch,
                        have_ticket ? &ticket : nullptr);
    };
    auto conn_sparsity = [&]() {
        if (config.ticket_mode == "conn") return sparsity_over(model->masked_layers());
        if (config.ticket_mode == "ecpt" && former) return sparsity_over(former->cpm_layers());
        return 0.0;
    };
    auto patch_sparsity = [&]() {
        if (!have_ticket) return 0.0;
        return 1.0 - static_cast<double>(ticket.indices.size()) / static_cast<double>(ticket.n_p);
    };
    int epoch_counter = 0;
    auto log_epoch = [&](int, double loss, double train_acc) {
        metrics.add(++epoch_counter, loss, train_acc, test_eval(), conn_sparsity(),
                    patch_sparsity());
    };

    // Row 0: the untrained baseline.
    {
        EvalResult tr = evaluate(*model, train, config.timesteps, config.eval_batch);
        metrics.add(0, tr.loss, tr.accuracy, test_eval(), conn_sparsity(), patch_sparsity());
    }

    TrainOptions dense;
    dense.optim = config.weight_optim();
    dense.batch = config.batch;
    dense.model_timesteps = config.timesteps;
    dense.shuffle_seed = derive_seed(config.seed, "shuffle.dense");
    dense.on_epoch = log_epoch;

    TicketReport report;
    report.seed = config.seed;

    if (config.ticket_mode == "none") {
        report.mode = "none";
        report.acc_before = evaluate(*model, test, config.timesteps, config.eval_batch).accuracy;
        if (config.train_epochs > 0) {
            set_weight_training(*model);
            TrainOptions t = dense;
            t.epochs = config.train_epochs;
            train_weights(*model, train, t);
            set_inert(*model);
        }
        report.epochs_train = config.train_epochs;
        report.layers = layer_rows(model->masked_layers());
    } else if (config.ticket_mode == "conn") {
        TrainOptions t;
        t.optim = config.score_optim();
        t.batch = config.batch;
        t.model_timesteps = config.timesteps;
        t.shuffle_seed = derive_seed(config.seed, "shuffle.conn");
        t.epochs = config.epochs_conn;
        t.on_epoch = log_epoch;
        prepare_score_search(*model, train, config.pr_c, config.batch, config.timesteps);
        report = find_connection_tickets(*model, train, test, config.pr_c, t);
        report.seed = config.seed;
        set_inert(*model);
    } else if (config.ticket_mode == "patch") {
        report.mode = "patch";
        if (!former) throw ConfigError("field ticket.mode: patch tickets need model.arch = spikeformer");
        report.acc_before = evaluate(*model, test, config.timesteps, config.eval_batch).accuracy;
        set_weight_training(*model);
        TrainOptions warm = dense;
        warm.shuffle_seed = derive_seed(config.seed, "shuffle.warmup");
        ticket = select_patch_tickets(*former, train, config.pr_p, config.epochs_warmup, warm);
        have_ticket = true;
        if (config.train_epochs > 0) {
            TrainOptions t = dense;
            t.epochs = config.train_epochs;
            t.shuffle_seed = derive_seed(config.seed, "shuffle.phase3");
            train_weights(*model, train, t, &ticket);
        }
        set_inert(*model);
        report.epochs_warmup = config.epochs_warmup;
        report.epochs_train = config.train_epochs;
        report.layers = layer_rows(model->masked_layers());
        report.sparsity_patch =
            1.0 - static_cast<double>(ticket.indices.size()) / static_cast<double>(ticket.n_p);
    } else {  // ecpt
        if (!former) throw ConfigError("field ticket.mode: ecpt needs model.arch = spikeformer");
        EcptOptions opt;
        opt.pr_c = config.pr_c;
        opt.pr_p = config.pr_p;
        opt.epochs_conn = config.epochs_conn;
        opt.epochs_warmup = config.epochs_warmup;
        opt.epochs_train = config.train_epochs;
        opt.init_seed = config.seed;
        opt.conn.optim = config.score_optim();
        opt.conn.batch = config.batch;
        opt.conn.model_timesteps = config.timesteps;
        opt.conn.shuffle_seed = derive_seed(config.seed, "shuffle.conn");
        opt.conn.on_epoch = log_epoch;
        opt.dense = dense;
        opt.dense.shuffle_seed = derive_seed(config.seed, "shuffle.warmup");
        opt.dense.on_epoch = log_epoch;
        // make phase-3 epoch rows evaluate through the selected ticket
        opt.on_ticket = [&](const PatchTicket& t) {
            ticket = t;
            have_ticket = true;
        };
        EcptResult res = run_ecpt(*former, train, test, opt);
        report = res.report;
        report.seed = config.seed;
        set_inert(*model);
    }

    EvalResult fin = test_eval();
    report.acc_after = fin.accuracy;
    report.spike_rate = fin.spike_rate;
    report.synops_per_sample = fin.synops_per_sample;
    if (metrics.rows == 1) {
        // 0-epoch run: the baseline row is the whole story
    }

    RngRegistry rng;
    rng["init.model"] = init.state();
    save_checkpoint(out_dir / "checkpoint.sltc", *model, config, have_ticket ? &ticket : nullptr,
                    rng);
    metrics.write(out_dir / "metrics.csv");
    write_text(out_dir / "report.json", report_to_json(report) + "\n");
    write_text(out_dir / "config.txt", config_to_text(config));

    return RunResult{report, fin.accuracy, out_dir};
}

namespace {

void apply_axis(ExperimentConfig& c, const std::string& axis, double value) {
    if (axis == "pr_c")
        c.pr_c = static_cast<float>(value);
    else if (axis == "pr_p")
        c.pr_p = static_cast<float>(value);
    else if (axis == "T")
        c.timesteps = static_cast<int>(value);
    else if (axis == "lambda")
        c.lif_decay = static_cast<float>(value);
    else
        throw ConfigError("sweep axis must be one of pr_c, pr_p, T, lambda");
}

int worker_count(size_t jobs) {
    if (const char* env = std::getenv("SLT_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return static_cast<int>(std::min<size_t>(jobs, static_cast<size_t>(n)));
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return static_cast<int>(std::min<size_t>(jobs, hc == 0 ? 1 : hc));
}

}  // namespace

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<double>& values,
                                const std::vector<uint64_t>& seeds,
                                const std::filesystem::path& out_root) {
    if (values.empty()) throw ConfigError("sweep: values must be non-empty");
    if (seeds.empty()) throw ConfigError("sweep: seeds must be non-empty");
    std::filesystem::create_directories(out_root);

    struct Job {
        ExperimentConfig config;
        size_t value_idx;
        double acc = 0.0;
        bool failed = false;
        std::string error;
    };
    std::vector<Job> jobs;
    for (size_t vi = 0; vi < values.size(); ++vi)
        for (uint64_t seed : seeds) {
            Job j;
            j.config = base;
            apply_axis(j.config, axis, values[vi]);
            j.config.seed = seed;
            j.config.out_dir = (out_root / (axis + "_" + format_double(values[vi])) /
                                ("seed_" + std::to_string(seed)))
                                   .string();
            j.value_idx = vi;
            jobs.push_back(std::move(j));
        }

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                jobs[i].acc = run_experiment(jobs[i].config).final_test_acc;
            } catch (const std::exception& e) {
                jobs[i].failed = true;
                jobs[i].error = e.what();
            }
        }
    };
    const int workers = worker_count(jobs.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    std::vector<SweepRow> rows(values.size());
    for (size_t vi = 0; vi < values.size(); ++vi) {
        rows[vi].value = values[vi];
        std::vector<double> accs;
        for (const Job& j : jobs) {
            if (j.value_idx != vi) continue;
            if (j.failed)
                rows[vi].errors++;
            else
                accs.push_back(j.acc);
        }
        rows[vi].n_seeds = static_cast<int>(accs.size());
        if (!accs.empty()) {
            double mean = 0.0;
            for (double a : accs) mean += a;
            mean /= static_cast<double>(accs.size());
            double var = 0.0;
            for (double a : accs) var += (a - mean) * (a - mean);
            var = accs.size() > 1 ? var / static_cast<double>(accs.size() - 1) : 0.0;
            rows[vi].mean_acc = mean;
            rows[vi].std_acc = std::sqrt(var);
        }
    }

    std::string csv = "axis,value,n_seeds,mean_acc,std_acc,errors\n";
    for (const SweepRow& r : rows) {
        csv += axis + "," + format_double(r.value) + "," + std::to_string(r.n_seeds) + "," +
               format_double(r.mean_acc) + "," + format_double(r.std_acc) + "," +
               std::to_string(r.errors) + "\n";
    }
    write_text(out_root / "summary.csv", csv);

    for (const Job& j : jobs)
        if (j.failed)
            write_text(out_root / ("error_" + std::to_string(&j - jobs.data()) + ".txt"), j.error);
    return rows;
}

}  // namespace slt

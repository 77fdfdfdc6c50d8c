#include "slt/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace slt {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string float_str(float v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

float parse_float(const std::string& key, const std::string& v) {
    float out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("field " + key + ": expected a number, got '" + v + "'");
    return out;
}

int64_t parse_int(const std::string& key, const std::string& v) {
    int64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("field " + key + ": expected an integer, got '" + v + "'");
    return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("field " + key + ": expected an unsigned integer, got '" + v + "'");
    return out;
}

std::vector<int64_t> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int64_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("field " + key + ": empty list element");
        out.push_back(parse_int(key, item));
    }
    if (out.empty()) throw ConfigError("field " + key + ": empty list");
    return out;
}

std::string int_list_str(const std::vector<int64_t>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

struct Field {
    std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::map<std::string, Field>& field_table() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        auto str = [&](const char* key, std::string ExperimentConfig::*member) {
            t[key] = {[member](ExperimentConfig& c, const std::string&, const std::string& v) {
                          c.*member = v;
                      },
                      [member](const ExperimentConfig& c) { return c.*member; }};
        };
        auto f32 = [&](const char* key, float ExperimentConfig::*member) {
            t[key] = {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          c.*member = parse_float(k, v);
                      },
                      [member](const ExperimentConfig& c) { return float_str(c.*member); }};
        };
        auto i64 = [&](const char* key, int64_t ExperimentConfig::*member) {
            t[key] = {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          c.*member = parse_int(k, v);
                      },
                      [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
        };
        auto i32 = [&](const char* key, int ExperimentConfig::*member) {
            t[key] = {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          c.*member = static_cast<int>(parse_int(k, v));
                      },
                      [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
        };

        str("model.arch", &ExperimentConfig::arch);
        str("model.variant", &ExperimentConfig::variant);
        i64("model.hidden", &ExperimentConfig::hidden);
        i64("model.embed_dim", &ExperimentConfig::embed_dim);
        i32("model.patch", &ExperimentConfig::patch);
        i32("model.heads", &ExperimentConfig::heads);
        i32("model.blocks", &ExperimentConfig::blocks);
        t["model.channels"] = {
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.channels = parse_int_list(k, v);
            },
            [](const ExperimentConfig& c) { return int_list_str(c.channels); }};

        f32("lif.decay", &ExperimentConfig::lif_decay);
        f32("lif.v_th", &ExperimentConfig::v_th);
        f32("lif.v_reset", &ExperimentConfig::v_reset);
        f32("lif.surrogate_width", &ExperimentConfig::surrogate_width);
        str("lif.input_gain", &ExperimentConfig::input_gain);

        str("ticket.mode", &ExperimentConfig::ticket_mode);
        f32("ticket.pr_c", &ExperimentConfig::pr_c);
        f32("ticket.pr_p", &ExperimentConfig::pr_p);
        i32("ticket.epochs_conn", &ExperimentConfig::epochs_conn);
        i32("ticket.epochs_warmup", &ExperimentConfig::epochs_warmup);

        i32("train.epochs", &ExperimentConfig::train_epochs);
        i64("train.batch", &ExperimentConfig::batch);

        i32("sim.timesteps", &ExperimentConfig::timesteps);

        str("optim.kind", &ExperimentConfig::optim_kind);
        str("optim.weight_kind", &ExperimentConfig::weight_optim_kind);
        f32("optim.lr", &ExperimentConfig::lr);
        f32("optim.weight_lr", &ExperimentConfig::weight_lr);

        str("data.kind", &ExperimentConfig::data_kind);
        i32("data.classes", &ExperimentConfig::classes);
        i64("data.n_train", &ExperimentConfig::n_train);
        i64("data.n_test", &ExperimentConfig::n_test);
        i32("data.hw", &ExperimentConfig::hw);
        f32("data.noise", &ExperimentConfig::noise);
        i32("data.signal_quadrant", &ExperimentConfig::signal_quadrant);
        str("data.idx_images", &ExperimentConfig::idx_images);
        str("data.idx_labels", &ExperimentConfig::idx_labels);
        str("data.idx_test_images", &ExperimentConfig::idx_test_images);
        str("data.idx_test_labels", &ExperimentConfig::idx_test_labels);

        t["run.seed"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                             c.seed = parse_u64(k, v);
                         },
                         [](const ExperimentConfig& c) { return std::to_string(c.seed); }};
        str("run.out_dir", &ExperimentConfig::out_dir);
        i64("run.eval_batch", &ExperimentConfig::eval_batch);
        return t;
    }();
    return table;
}

}  // namespace

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value) {
    auto it = field_table().find(key);
    if (it == field_table().end()) throw ConfigError("unknown key: " + key);
    it->second.set(c, key, trim(value));
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        apply_override(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string config_to_text(const ExperimentConfig& c) {
    std::string out;
    for (const auto& [key, field] : field_table()) {
        out += key;
        out += " = ";
        out += field.get(c);
        out += "\n";
    }
    return out;
}

void ExperimentConfig::validate() const {
    if (arch != "mlp" && arch != "convnet" && arch != "spikeformer")
        throw ConfigError("field model.arch: unknown architecture '" + arch + "'");
    if (variant != "ann" && variant != "bnn" && variant != "bin_act_bnn" && variant != "snn" &&
        variant != "bin_w_snn")
        throw ConfigError("field model.variant: unknown variant '" + variant + "'");
    if (arch == "spikeformer" && variant != "snn")
        throw ConfigError("field model.variant: spikeformer is spiking only");
    if (!(lif_decay > 0.0f && lif_decay <= 1.0f))
        throw ConfigError("field lif.decay: must lie in (0, 1]");
    if (!(v_reset < v_th)) throw ConfigError("field lif.v_reset: must be below lif.v_th");
    if (!(surrogate_width > 0.0f)) throw ConfigError("field lif.surrogate_width: must be positive");
    if (input_gain != "unit" && input_gain != "coupled")
        throw ConfigError("field lif.input_gain: must be unit or coupled");
    if (ticket_mode != "none" && ticket_mode != "conn" && ticket_mode != "patch" &&
        ticket_mode != "ecpt")
        throw ConfigError("field ticket.mode: unknown mode '" + ticket_mode + "'");
    if (!(pr_c >= 0.0f && pr_c < 1.0f)) throw ConfigError("field ticket.pr_c: must lie in [0, 1)");
    if (!(pr_p >= 0.0f && pr_p < 1.0f)) throw ConfigError("field ticket.pr_p: must lie in [0, 1)");
    if (epochs_conn < 0) throw ConfigError("field ticket.epochs_conn: must be >= 0");
    if (epochs_warmup < 0) throw ConfigError("field ticket.epochs_warmup: must be >= 0");
    if (train_epochs < 0) throw ConfigError("field train.epochs: must be >= 0");
    if (batch < 1) throw ConfigError("field train.batch: must be >= 1");
    if (timesteps < 1) throw ConfigError("field sim.timesteps: must be >= 1");
    const bool spiking = variant == "snn" || variant == "bin_w_snn";
    if (arch != "spikeformer" && !spiking && timesteps != 1)
        throw ConfigError("field sim.timesteps: variant " + variant + " requires 1");
    if (optim_kind != "sgd" && optim_kind != "adam")
        throw ConfigError("field optim.kind: must be sgd or adam");
    if (weight_optim_kind != "sgd" && weight_optim_kind != "adam")
        throw ConfigError("field optim.weight_kind: must be sgd or adam");
    if (!(lr > 0.0f)) throw ConfigError("field optim.lr: must be positive");
    if (!(weight_lr > 0.0f)) throw ConfigError("field optim.weight_lr: must be positive");
    if (data_kind != "synthetic_rgb" && data_kind != "synthetic_dvs" && data_kind != "idx")
        throw ConfigError("field data.kind: unknown kind '" + data_kind + "'");
    if (data_kind == "idx" &&
        (idx_images.empty() || idx_labels.empty() || idx_test_images.empty() ||
         idx_test_labels.empty()))
        throw ConfigError("field data.idx_images: idx data needs all four file paths");
    if (data_kind != "idx") {
        if (classes < 2) throw ConfigError("field data.classes: must be >= 2");
        if (n_train < 1) throw ConfigError("field data.n_train: must be >= 1");
        if (n_test < 1) throw ConfigError("field data.n_test: must be >= 1");
        if (hw < 8) throw ConfigError("field data.hw: must be >= 8");
    }
    if (!(noise >= 0.0f)) throw ConfigError("field data.noise: must be >= 0");
    if (signal_quadrant < -1 || signal_quadrant > 3)
        throw ConfigError("field data.signal_quadrant: must lie in [-1, 3]");
    if (arch == "spikeformer") {
        if (patch < 2 || (patch & (patch - 1)) != 0)
            throw ConfigError("field model.patch: must be a power of two >= 2");
        if (hw % patch != 0) throw ConfigError("field model.patch: must divide data.hw");
        if (embed_dim % heads != 0)
            throw ConfigError("field model.heads: must divide model.embed_dim");
    }
    if (arch == "convnet" && channels.empty())
        throw ConfigError("field model.channels: must be non-empty");
    if (eval_batch < 1) throw ConfigError("field run.eval_batch: must be >= 1");
}

LifParams ExperimentConfig::lif_params() const {
    LifParams p;
    p.lambda_decay = lif_decay;
    p.v_th = v_th;
    p.v_reset = v_reset;
    p.surrogate_width = surrogate_width;
    p.input_gain = input_gain == "coupled" ? LifParams::Gain::coupled : LifParams::Gain::unit;
    return p;
}

OptimConfig ExperimentConfig::score_optim() const {
    OptimConfig o;
    o.kind = optim_kind == "sgd" ? OptimKind::sgd : OptimKind::adam;
    o.lr = lr;
    return o;
}

OptimConfig ExperimentConfig::weight_optim() const {
    OptimConfig o;
    o.kind = weight_optim_kind == "sgd" ? OptimKind::sgd : OptimKind::adam;
    o.lr = weight_lr;
    return o;
}

}  // namespace slt

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slt/lif.hpp"
#include "slt/optim.hpp"

namespace slt {

// Declarative run description. Parsed from flat `key = value` text with
// dotted key paths; unknown keys are hard errors.
struct ExperimentConfig {
    // model.*
    std::string arch = "convnet";  // mlp | convnet | spikeformer
    std::string variant = "snn";
    int64_t hidden = 128;
    int64_t embed_dim = 64;
    int patch = 8;
    int heads = 2;
    int blocks = 2;
    std::vector<int64_t> channels = {16, 32, 64, 64};

    // lif.*
    float lif_decay = 0.99f;
    float v_th = 1.0f;
    float v_reset = 0.0f;
    float surrogate_width = 1.0f;
    std::string input_gain = "unit";  // unit | coupled

    // ticket.*
    std::string ticket_mode = "none";  // none | conn | patch | ecpt
    float pr_c = 0.5f;
    float pr_p = 0.3f;
    int epochs_conn = 30;
    int epochs_warmup = 10;

    // train.*
    int train_epochs = 0;
    int64_t batch = 32;

    // sim.*
    int timesteps = 4;

    // optim.*
    std::string optim_kind = "sgd";         // score search
    std::string weight_optim_kind = "adam"; // dense / warm-up / phase-3
    float lr = 0.05f;                       // score search
    float weight_lr = 0.01f;                // weight training

    // data.*
    std::string data_kind = "synthetic_dvs";  // synthetic_rgb | synthetic_dvs | idx
    int classes = 4;
    int64_t n_train = 512;
    int64_t n_test = 256;
    int hw = 16;
    float noise = 0.01f;
    int signal_quadrant = -1;
    std::string idx_images, idx_labels, idx_test_images, idx_test_labels;

    // run.*
    uint64_t seed = 1;
    std::string out_dir = "runs/out";
    int64_t eval_batch = 64;

    void validate() const;  // throws ConfigError naming the field
    LifParams lif_params() const;
    OptimConfig score_optim() const;
    OptimConfig weight_optim() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical sorted key=value rendering; parse(render(c)) == c.
std::string config_to_text(const ExperimentConfig& c);
// Applies one `key=value` override in place.
void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value);

}  // namespace slt

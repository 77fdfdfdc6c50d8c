#include "slt/builders.hpp"

namespace slt {

int64_t data_channels(const ExperimentConfig& c) {
    if (c.data_kind == "synthetic_rgb") return 3;
    if (c.data_kind == "synthetic_dvs") return 2;
    return 1;  // idx
}

std::unique_ptr<Model> build_model(const ExperimentConfig& c, RngStream& init) {
    c.validate();
    const int64_t in_ch = data_channels(c);
    if (c.arch == "mlp") {
        MlpSpec s;
        s.in_dim = in_ch * c.hw * c.hw;
        s.hidden = c.hidden;
        s.classes = c.classes;
        s.variant = parse_variant(c.variant);
        s.lif = c.lif_params();
        return std::make_unique<SpikingMlp>(s, init);
    }
    if (c.arch == "convnet") {
        ConvNetSpec s;
        s.in_ch = in_ch;
        s.hw = c.hw;
        s.classes = c.classes;
        s.channels = c.channels;
        s.hidden = c.hidden;
        s.variant = parse_variant(c.variant);
        s.lif = c.lif_params();
        return std::make_unique<SpikingConvNet>(s, init);
    }
    SpikeformerSpec s;
    s.in_ch = in_ch;
    s.hw = c.hw;
    s.patch = c.patch;
    s.embed_dim = c.embed_dim;
    s.heads = c.heads;
    s.blocks = c.blocks;
    s.classes = c.classes;
    s.lif = c.lif_params();
    return std::make_unique<SpikeformerToy>(s, init);
}

Dataset build_dataset(const ExperimentConfig& c, const std::string& split) {
    const uint64_t seed = derive_seed(c.seed, "data." + split);
    const int64_t n = split == "train" ? c.n_train : c.n_test;
    if (c.data_kind == "synthetic_rgb")
        return gen_synthetic_rgb(c.classes, n, c.hw, seed, c.noise, split);
    if (c.data_kind == "synthetic_dvs")
        return gen_synthetic_dvs(c.classes, n, c.hw, c.timesteps, seed, c.noise,
                                 c.signal_quadrant, split);
    if (split == "train") return load_idx(c.idx_images, c.idx_labels, split);
    return load_idx(c.idx_test_images, c.idx_test_labels, split);
}

}  // namespace slt

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "slt/lif.hpp"
#include "slt/masked.hpp"
#include "slt/telemetry.hpp"
#include "slt/tensor.hpp"

namespace slt {

// Table-style model variants: which of {spiking, binary weights, binary
// activations} are active.
enum class Variant { ann, bnn, bin_act_bnn, snn, bin_w_snn };

Variant parse_variant(const std::string& s);
std::string variant_name(Variant v);
bool variant_spiking(Variant v);
bool variant_binary_weights(Variant v);

class Model {
  public:
    virtual ~Model() = default;

    // frames[T, B, C, H, W] -> logits[B, classes].
    virtual Tensor forward(const Tensor& frames, Telemetry* tel = nullptr) = 0;
    virtual std::vector<MaskedLayer*> masked_layers() = 0;
    // Trainable parameters that are not layer weights (position embeddings).
    virtual std::vector<Tensor> extra_weight_params() { return {}; }
    virtual int num_classes() const = 0;
    virtual std::string arch() const = 0;
};

// Parameter collections for the two training regimes.
std::vector<Tensor> score_params(Model& m);
std::vector<Tensor> weight_params(Model& m);

// Puts every layer into score-search (frozen w, trainable s), weight
// training, or inert evaluation state.
void set_score_training(Model& m);
void set_weight_training(Model& m);
void set_inert(Model& m);

struct MlpSpec {
    int64_t in_dim = 0;
    int64_t hidden = 128;
    int classes = 2;
    Variant variant = Variant::snn;
    LifParams lif;
};

class SpikingMlp : public Model {
  public:
    SpikingMlp(MlpSpec spec, RngStream& init);
    Tensor forward(const Tensor& frames, Telemetry* tel = nullptr) override;
    std::vector<MaskedLayer*> masked_layers() override { return {&fc1_, &fc2_}; }
    int num_classes() const override { return spec_.classes; }
    std::string arch() const override { return "mlp"; }
    const MlpSpec& spec() const { return spec_; }

  private:
    MlpSpec spec_;
    MaskedLayer fc1_, fc2_;
};

struct ConvNetSpec {
    int64_t in_ch = 2;
    int hw = 16;
    int classes = 4;
    std::vector<int64_t> channels = {16, 32, 64, 64};
    int64_t hidden = 128;
    Variant variant = Variant::snn;
    LifParams lif;
};

// Conv blocks of (masked conv -> activation -> optional 2x2 avg-pool)
// followed by a two-layer masked classifier; logits are the time mean.
class SpikingConvNet : public Model {
  public:
    SpikingConvNet(ConvNetSpec spec, RngStream& init);
    Tensor forward(const Tensor& frames, Telemetry* tel = nullptr) override;
    std::vector<MaskedLayer*> masked_layers() override;
    int num_classes() const override { return spec_.classes; }
    std::string arch() const override { return "convnet"; }
    const ConvNetSpec& spec() const { return spec_; }

  private:
    ConvNetSpec spec_;
    std::vector<MaskedLayer> convs_;
    std::vector<bool> pool_;
    MaskedLayer fc1_, fc2_;
    int64_t flat_dim_ = 0;
};

// Binary q/k/v attention: LIF((q k^T v) / sqrt(d_h n)) per timestep and head.
Tensor spiking_attention(const Tensor& q, const Tensor& k, const Tensor& v, const LifParams& p,
                         Telemetry* tel = nullptr);

struct SpikeformerSpec {
    int64_t in_ch = 2;
    int hw = 32;
    int patch = 8;  // power of two
    int64_t embed_dim = 64;
    int heads = 2;
    int blocks = 2;
    int classes = 4;
    LifParams lif;
};

struct PatchTicket;

// Conv-projection patch embedding (binary spikes), learned position
// embedding, spiking encoder blocks, time/token-mean classifier head.
class SpikeformerToy : public Model {
  public:
    SpikeformerToy(SpikeformerSpec spec, RngStream& init);

    // Per-timestep binary patch embedding [T, B, n_p, d].
    Tensor sps_embed(const Tensor& frames, Telemetry* tel = nullptr);

    Tensor forward(const Tensor& frames, Telemetry* tel = nullptr) override;
    Tensor forward_with_ticket(const Tensor& frames, const PatchTicket* ticket,
                               Telemetry* tel = nullptr);

    // Output of the first encoder block (position-aware), for saliency.
    Tensor first_block_output(const Tensor& frames, Telemetry* tel = nullptr);

    std::vector<MaskedLayer*> masked_layers() override;
    std::vector<MaskedLayer*> cpm_layers();
    std::vector<MaskedLayer*> encoder_layers();  // encoders + head
    std::vector<Tensor> extra_weight_params() override { return {pos_embed_}; }
    Tensor& pos_embed() { return pos_embed_; }
    int num_classes() const override { return spec_.classes; }
    std::string arch() const override { return "spikeformer"; }
    const SpikeformerSpec& spec() const { return spec_; }
    int64_t patch_count() const { return n_p_; }

    bool probe_attached() const { return probe_attached_; }
    void set_probe_attached(bool a) { probe_attached_ = a; }

  private:
    struct EncoderBlock {
        MaskedLayer wq, wk, wv, wo, fc1, fc2;
    };
    Tensor encode_tokens(const Tensor& frames, const PatchTicket* ticket, Telemetry* tel);
    Tensor run_block(EncoderBlock& blk, const Tensor& x, Telemetry* tel);

    SpikeformerSpec spec_;
    int64_t n_p_ = 0;
    std::vector<MaskedLayer> cpm_;
    Tensor pos_embed_;
    std::vector<EncoderBlock> blocks_;
    MaskedLayer head_;
    bool probe_attached_ = false;
};

}  // namespace slt

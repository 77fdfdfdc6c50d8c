#include "slt/models.hpp"

#include <cmath>

#include "slt/ops.hpp"
#include "slt/tickets.hpp"

namespace slt {

Variant parse_variant(const std::string& s) {
    if (s == "ann") return Variant::ann;
    if (s == "bnn") return Variant::bnn;
    if (s == "bin_act_bnn") return Variant::bin_act_bnn;
    if (s == "snn") return Variant::snn;
    if (s == "bin_w_snn") return Variant::bin_w_snn;
    throw ConfigError("unknown variant: " + s);
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::ann: return "ann";
        case Variant::bnn: return "bnn";
        case Variant::bin_act_bnn: return "bin_act_bnn";
        case Variant::snn: return "snn";
        case Variant::bin_w_snn: return "bin_w_snn";
    }
    return "?";
}

bool variant_spiking(Variant v) { return v == Variant::snn || v == Variant::bin_w_snn; }

bool variant_binary_weights(Variant v) {
    return v == Variant::bnn || v == Variant::bin_act_bnn || v == Variant::bin_w_snn;
}

std::vector<Tensor> score_params(Model& m) {
    std::vector<Tensor> out;
    for (MaskedLayer* l : m.masked_layers())
        if (l->s().requires_grad()) out.push_back(l->s());
    return out;
}

std::vector<Tensor> weight_params(Model& m) {
    std::vector<Tensor> out;
    for (MaskedLayer* l : m.masked_layers())
        if (l->w().requires_grad()) out.push_back(l->w());
    for (Tensor& t : m.extra_weight_params())
        if (t.requires_grad()) out.push_back(t);
    return out;
}

void set_score_training(Model& m) {
    for (MaskedLayer* l : m.masked_layers()) l->set_frozen(true);
    for (Tensor& t : m.extra_weight_params()) t.set_requires_grad(false);
}

void set_weight_training(Model& m) {
    for (MaskedLayer* l : m.masked_layers()) l->set_frozen(false);
    for (Tensor& t : m.extra_weight_params()) t.set_requires_grad(true);
}

void set_inert(Model& m) {
    for (MaskedLayer* l : m.masked_layers()) l->set_inert();
    for (Tensor& t : m.extra_weight_params()) t.set_requires_grad(false);
}

namespace {

void check_frames(const Tensor& frames) {
    if (frames.rank() != 5) throw DimensionError("model forward: frames must be [T,B,C,H,W]");
    if (frames.dim(0) < 1) throw ContractError("model forward: T must be >= 1");
}

void check_variant_timesteps(Variant v, int64_t T) {
    if (!variant_spiking(v) && T != 1)
        throw ContractError("variant " + variant_name(v) + " requires T = 1, got " +
                            std::to_string(T));
}

// Variant-selected nonlinearity over [T, ...]; LIF folds over the time axis.
Tensor apply_activation(const Tensor& x, Variant v, const LifParams& p, Telemetry* tel) {
    if (variant_spiking(v)) return lif_run(x, p, tel);
    if (v == Variant::bin_act_bnn) return binarize_activations(x);
    return relu(x);
}

WeightMode variant_mode(Variant v) {
    return variant_binary_weights(v) ? WeightMode::binary_weight : WeightMode::full_precision;
}

Tensor merge_tb(const Tensor& x) {
    Shape s(x.shape());
    Shape out;
    out.push_back(s[0] * s[1]);
    out.insert(out.end(), s.begin() + 2, s.end());
    return reshape(x, out);
}

Tensor split_tb(const Tensor& x, int64_t T, int64_t B) {
    Shape s(x.shape());
    Shape out;
    out.push_back(T);
    out.push_back(B);
    out.insert(out.end(), s.begin() + 1, s.end());
    return reshape(x, out);
}

}  // namespace

// --- SpikingMlp -------------------------------------------------------------

SpikingMlp::SpikingMlp(MlpSpec spec, RngStream& init)
    : spec_(spec),
      fc1_(MaskedLayer::make_linear("fc1", spec.hidden, spec.in_dim, init)),
      fc2_(MaskedLayer::make_linear("fc2", spec.classes, spec.hidden, init)) {
    fc1_.set_mode(variant_mode(spec.variant));
    fc2_.set_mode(variant_mode(spec.variant));
    fc1_.set_inert();
    fc2_.set_inert();
}

Tensor SpikingMlp::forward(const Tensor& frames, Telemetry* tel) {
    check_frames(frames);
    const int64_t T = frames.dim(0), B = frames.dim(1);
    check_variant_timesteps(spec_.variant, T);
    Tensor x = reshape(frames, {T, B, frames.numel() / (T * B)});
    if (x.dim(2) != spec_.in_dim) throw DimensionError("mlp forward: flattened input dim mismatch");
    Tensor h = apply_activation(fc1_.forward(x, tel), spec_.variant, spec_.lif, tel);
    Tensor o = fc2_.forward(h, tel);
    return mean_axis(o, 0);
}

// --- SpikingConvNet ---------------------------------------------------------

SpikingConvNet::SpikingConvNet(ConvNetSpec spec, RngStream& init) : spec_(spec) {
    int64_t in_ch = spec.in_ch;
    int64_t h = spec.hw;
    for (size_t i = 0; i < spec.channels.size(); ++i) {
        convs_.push_back(MaskedLayer::make_conv("conv" + std::to_string(i + 1), spec.channels[i],
                                                in_ch, 3, 3, 1, 1, init));
        in_ch = spec.channels[i];
        const bool pool = h >= 4;
        pool_.push_back(pool);
        if (pool) h /= 2;
    }
    flat_dim_ = in_ch * h * h;
    fc1_ = MaskedLayer::make_linear("fc1", spec.hidden, flat_dim_, init);
    fc2_ = MaskedLayer::make_linear("fc2", spec.classes, spec.hidden, init);
    for (MaskedLayer* l : masked_layers()) {
        l->set_mode(variant_mode(spec.variant));
        l->set_inert();
    }
}

std::vector<MaskedLayer*> SpikingConvNet::masked_layers() {
    std::vector<MaskedLayer*> out;
    for (MaskedLayer& l : convs_) out.push_back(&l);
    out.push_back(&fc1_);
    out.push_back(&fc2_);
    return out;
}

Tensor SpikingConvNet::forward(const Tensor& frames, Telemetry* tel) {
    check_frames(frames);
    const int64_t T = frames.dim(0), B = frames.dim(1);
    check_variant_timesteps(spec_.variant, T);
    Tensor x = frames;
    for (size_t i = 0; i < convs_.size(); ++i) {
        Tensor c = convs_[i].forward(merge_tb(x), tel);
        Tensor a = apply_activation(split_tb(c, T, B), spec_.variant, spec_.lif, tel);
        if (pool_[i]) a = split_tb(avg_pool2(merge_tb(a)), T, B);
        x = a;
    }
    x = reshape(x, {T, B, x.numel() / (T * B)});
    Tensor h = apply_activation(fc1_.forward(x, tel), spec_.variant, spec_.lif, tel);
    Tensor o = fc2_.forward(h, tel);
    return mean_axis(o, 0);
}

// --- spiking attention ------------------------------------------------------

Tensor spiking_attention(const Tensor& q, const Tensor& k, const Tensor& v, const LifParams& p,
                         Telemetry* tel) {
    if (q.rank() != 5) throw DimensionError("spiking_attention: expects [T,B,h,n,dh]");
    if (q.shape() != k.shape() || q.shape() != v.shape())
        throw DimensionError("spiking_attention: q/k/v shapes must agree");
    if (!is_binary(q) || !is_binary(k) || !is_binary(v))
        throw ContractError("spiking_attention: q, k, v must be binary spike tensors");
    const int64_t n = q.dim(3), dh = q.dim(4);
    Tensor scores = batched_matmul(q, k, false, true);           // [T,B,h,n,n]
    Tensor mixed = batched_matmul(scores, v, false, false);      // [T,B,h,n,dh]
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh * n));
    return lif_run(mul_scalar(mixed, scale), p, tel);
}

// --- SpikeformerToy ---------------------------------------------------------

namespace {

int pool_stages(int patch) {
    if (patch < 1 || (patch & (patch - 1)) != 0)
        throw ConfigError("spikeformer: patch size must be a power of two");
    int q = 0;
    while ((1 << q) < patch) ++q;
    return q;
}

}  // namespace

SpikeformerToy::SpikeformerToy(SpikeformerSpec spec, RngStream& init) : spec_(spec) {
    if (spec.hw % spec.patch != 0)
        throw DimensionError("spikeformer: hw must be divisible by patch size");
    if (spec.embed_dim % spec.heads != 0)
        throw ConfigError("spikeformer: embed_dim must be divisible by heads");
    const int64_t grid = spec.hw / spec.patch;
    n_p_ = grid * grid;
    const int q = pool_stages(spec.patch);
    if (q < 1) throw ConfigError("spikeformer: patch size must be >= 2");
    int64_t in_ch = spec.in_ch;
    for (int i = 0; i < q; ++i) {
        const int64_t out_ch = spec.embed_dim >> (q - 1 - i);
        cpm_.push_back(
            MaskedLayer::make_conv("cpm.conv" + std::to_string(i + 1), out_ch, in_ch, 3, 3, 1, 1, init));
        in_ch = out_ch;
    }
    ArrayXf pe(n_p_ * spec.embed_dim);
    for (int64_t i = 0; i < pe.size(); ++i) pe[i] = init.normal(0.0f, 0.02f);
    pos_embed_ = Tensor::from_array({n_p_, spec.embed_dim}, std::move(pe));
    const int64_t d = spec.embed_dim;
    for (int b = 0; b < spec.blocks; ++b) {
        const std::string base = "enc" + std::to_string(b + 1) + ".";
        blocks_.push_back(EncoderBlock{
            MaskedLayer::make_linear(base + "wq", d, d, init),
            MaskedLayer::make_linear(base + "wk", d, d, init),
            MaskedLayer::make_linear(base + "wv", d, d, init),
            MaskedLayer::make_linear(base + "wo", d, d, init),
            MaskedLayer::make_linear(base + "fc1", 2 * d, d, init),
            MaskedLayer::make_linear(base + "fc2", d, 2 * d, init),
        });
    }
    head_ = MaskedLayer::make_linear("head", spec.classes, d, init);
    set_inert(*this);
}

std::vector<MaskedLayer*> SpikeformerToy::masked_layers() {
    std::vector<MaskedLayer*> out = cpm_layers();
    for (MaskedLayer* l : encoder_layers()) out.push_back(l);
    return out;
}

std::vector<MaskedLayer*> SpikeformerToy::cpm_layers() {
    std::vector<MaskedLayer*> out;
    for (MaskedLayer& l : cpm_) out.push_back(&l);
    return out;
}

std::vector<MaskedLayer*> SpikeformerToy::encoder_layers() {
    std::vector<MaskedLayer*> out;
    for (EncoderBlock& b : blocks_) {
        out.push_back(&b.wq);
        out.push_back(&b.wk);
        out.push_back(&b.wv);
        out.push_back(&b.wo);
        out.push_back(&b.fc1);
        out.push_back(&b.fc2);
    }
    out.push_back(&head_);
    return out;
}

Tensor SpikeformerToy::sps_embed(const Tensor& frames, Telemetry* tel) {
    check_frames(frames);
    const int64_t T = frames.dim(0), B = frames.dim(1);
    if (frames.dim(3) % spec_.patch != 0 || frames.dim(4) % spec_.patch != 0)
        throw DimensionError("sps_embed: spatial dims must be divisible by patch size");
    Tensor x = frames;
    for (MaskedLayer& conv : cpm_) {
        Tensor c = conv.forward(merge_tb(x), tel);
        Tensor s = lif_run(split_tb(c, T, B), spec_.lif, tel);
        // max of binary spikes stays binary
        x = split_tb(max_pool2(merge_tb(s)), T, B);
    }
    // [T,B,d,g,g] -> [T,B,n_p,d]
    const int64_t d = spec_.embed_dim;
    Tensor flat = reshape(x, {T, B, d, n_p_});
    return permute(flat, {0, 1, 3, 2});
}

Tensor SpikeformerToy::encode_tokens(const Tensor& frames, const PatchTicket* ticket,
                                     Telemetry* tel) {
    Tensor pat = sps_embed(frames, tel);
    const int64_t T = pat.dim(0), B = pat.dim(1);
    const int64_t d = spec_.embed_dim;
    // token embeddings + position rows, broadcast over T and B
    Tensor flat = reshape(pat, {T * B, n_p_ * d});
    Tensor pos_flat = reshape(pos_embed_, {n_p_ * d});
    Tensor x = reshape(add_bias(flat, pos_flat), {T, B, n_p_, d});
    if (ticket) {
        ticket->validate(n_p_);
        x = gather_axis(x, 2, ticket->indices);
    }
    return x;
}

Tensor SpikeformerToy::run_block(EncoderBlock& blk, const Tensor& x, Telemetry* tel) {
    const int64_t T = x.dim(0), B = x.dim(1), n = x.dim(2), d = x.dim(3);
    const int64_t h = spec_.heads, dh = d / h;
    auto heads = [&](const Tensor& t) {
        return permute(reshape(t, {T, B, n, h, dh}), {0, 1, 3, 2, 4});
    };
    Tensor q = heads(lif_run(blk.wq.forward(x, tel), spec_.lif, tel));
    Tensor k = heads(lif_run(blk.wk.forward(x, tel), spec_.lif, tel));
    Tensor v = heads(lif_run(blk.wv.forward(x, tel), spec_.lif, tel));
    Tensor attn = spiking_attention(q, k, v, spec_.lif, tel);
    Tensor merged = reshape(permute(attn, {0, 1, 3, 2, 4}), {T, B, n, d});
    Tensor x1 = add(x, blk.wo.forward(merged, tel));
    Tensor u = lif_run(blk.fc1.forward(x1, tel), spec_.lif, tel);
    return add(x1, blk.fc2.forward(u, tel));
}

Tensor SpikeformerToy::forward_with_ticket(const Tensor& frames, const PatchTicket* ticket,
                                           Telemetry* tel) {
    Tensor x = encode_tokens(frames, ticket, tel);
    for (EncoderBlock& b : blocks_) x = run_block(b, x, tel);
    Tensor feats = mean_axis(mean_axis(x, 0), 1);  // [B, d]
    return head_.forward(feats, tel);
}

Tensor SpikeformerToy::forward(const Tensor& frames, Telemetry* tel) {
    return forward_with_ticket(frames, nullptr, tel);
}

Tensor SpikeformerToy::first_block_output(const Tensor& frames, Telemetry* tel) {
    Tensor x = encode_tokens(frames, nullptr, tel);
    return run_block(blocks_.front(), x, tel);
}

}  // namespace slt

#include "slt/masked.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slt/lif.hpp"
#include "slt/ops.hpp"

namespace slt {

namespace {

// Kaiming-uniform with an enlarged gain: the gain-scaled masked weights
// alpha*(m.w) must drive membrane potentials to threshold scale without any
// normalization layers at these widths.
constexpr float kInitGain = 4.0f;

Tensor kaiming_uniform(const Shape& shape, int64_t fan_in, RngStream& rng) {
    const float bound = kInitGain * std::sqrt(6.0f / static_cast<float>(fan_in));
    ArrayXf v(shape_numel(shape));
    for (int64_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
    return Tensor::from_array(shape, std::move(v));
}

Tensor score_init(const Shape& shape, int64_t fan_in, RngStream& rng) {
    const float scale = 1.0f / std::sqrt(static_cast<float>(fan_in));
    ArrayXf v(shape_numel(shape));
    for (int64_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(0.0f, 1.0f) * scale;
    return Tensor::from_array(shape, std::move(v));
}

ArrayXf sign_pos(const ArrayXf& w) {
    // sign(0) = +1
    return (w >= 0.0f).cast<float>() * 2.0f - 1.0f;
}

}  // namespace

uint64_t hash_bytes(const void* data, size_t len, uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

MaskedLayer MaskedLayer::make_linear(std::string name, int64_t out_dim, int64_t in_dim,
                                     RngStream& init) {
    MaskedLayer l;
    l.name_ = std::move(name);
    l.kind_ = LayerKind::linear;
    l.w_ = kaiming_uniform({out_dim, in_dim}, in_dim, init);
    l.s_ = score_init({out_dim, in_dim}, in_dim, init);
    l.m_ = Tensor::ones({out_dim, in_dim});
    return l;
}

MaskedLayer MaskedLayer::make_conv(std::string name, int64_t out_ch, int64_t in_ch, int kh, int kw,
                                   int stride, int padding, RngStream& init) {
    MaskedLayer l;
    l.name_ = std::move(name);
    l.kind_ = LayerKind::conv;
    l.stride_ = stride;
    l.padding_ = padding;
    const int64_t fan_in = in_ch * kh * kw;
    l.w_ = kaiming_uniform({out_ch, in_ch, kh, kw}, fan_in, init);
    l.s_ = score_init({out_ch, in_ch, kh, kw}, fan_in, init);
    l.m_ = Tensor::ones({out_ch, in_ch, kh, kw});
    return l;
}

Tensor MaskedLayer::effective_weight() const {
    if (weight_frozen_) {
        // Value from frozen w, m, alpha; gradient straight-through to s.
        const bool binary = mode_ == WeightMode::binary_weight;
        const float alpha = alpha_;
        auto wn = w_.node();
        auto mn = m_.node();
        auto fwd = [wn, mn, alpha, binary](const std::vector<Tensor>&) -> ArrayXf {
            if (binary) return alpha * sign_pos(wn->value) * mn->value;
            return alpha * wn->value * mn->value;
        };
        auto bwd = [wn, alpha, binary](const ArrayXf& upstream, const std::vector<Tensor>&,
                                       const ArrayXf&) -> std::vector<ArrayXf> {
            if (binary) return {upstream * (alpha * sign_pos(wn->value))};
            return {upstream * (alpha * wn->value)};
        };
        return custom_grad(w_.shape(), fwd, bwd, {s_});
    }
    if (mode_ == WeightMode::binary_weight) return binarize_weights(w_, m_);
    // Unfrozen full precision: grads reach w through the mask and gain.
    Tensor e = mul(w_, m_);
    if (alpha_ != 1.0f) e = mul_scalar(e, alpha_);
    return e;
}

Tensor MaskedLayer::forward(const Tensor& x, Telemetry* tel) const {
    if (tel && is_binary(x)) tel->synops += static_cast<double>(synops(x));
    Tensor e = effective_weight();
    Tensor out = kind_ == LayerKind::linear ? linear(x, e) : conv2d(x, e, stride_, padding_);
    if (tel && tel->layer_stats) {
        LayerStats& st = (*tel->layer_stats)[name_];
        const ArrayXf& v = out.array();
        st.sum += static_cast<double>(v.sum());
        st.sumsq += static_cast<double>(v.square().sum());
        st.count += v.size();
    }
    return out;
}

void MaskedLayer::score_grad_update(const Tensor& g_eff, float eta) {
    if (g_eff.shape() != s_.shape())
        throw DimensionError("score_grad_update: gradient " + shape_str(g_eff.shape()) +
                             " vs scores " + shape_str(s_.shape()));
    const ArrayXf carrier = mode_ == WeightMode::binary_weight ? ArrayXf(alpha_ * sign_pos(w_.array()))
                                                               : ArrayXf(alpha_ * w_.array());
    s_.mutable_array() -= eta * g_eff.array() * carrier;
    ensure_finite(s_.array(), "score_grad_update");
}

void MaskedLayer::set_prune_rate(float pr) {
    if (!(pr >= 0.0f && pr < 1.0f)) throw ContractError("prune rate must lie in [0, 1)");
    prune_rate_ = pr;
}

int64_t MaskedLayer::target_active() const {
    const double keep = (1.0 - static_cast<double>(prune_rate_)) * static_cast<double>(numel());
    return static_cast<int64_t>(std::ceil(keep));
}

void MaskedLayer::project_topk() {
    const int64_t n = numel();
    const int64_t k = target_active();
    if (k <= 0) throw DegenerateMaskError("project_topk: mask would be empty");
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const float* sd = s_.array().data();
    std::sort(order.begin(), order.end(), [sd](int64_t a, int64_t b) {
        if (sd[a] != sd[b]) return sd[a] > sd[b];
        return a < b;
    });
    ArrayXf& m = m_.mutable_array();
    m.setZero();
    for (int64_t i = 0; i < k; ++i) m[order[static_cast<size_t>(i)]] = 1.0f;
}

void MaskedLayer::gain_update() {
    const float msum = m_.array().sum();
    if (msum <= 0.0f) throw DegenerateMaskError("gain_update: all-zero mask");
    alpha_ = (m_.array() * w_.array()).abs().sum() / msum;
}

int64_t MaskedLayer::synops(const Tensor& input_spikes) const {
    if (!is_binary(input_spikes)) throw ContractError("synops: input must be a binary spike tensor");
    const ArrayXf& m = m_.array();
    if (kind_ == LayerKind::linear) {
        const int64_t in = w_.dim(1), out = w_.dim(0);
        if (input_spikes.dim(input_spikes.rank() - 1) != in)
            throw DimensionError("synops: feature dim mismatch");
        // Active fan-out per input column.
        std::vector<int64_t> fan(static_cast<size_t>(in), 0);
        for (int64_t o = 0; o < out; ++o)
            for (int64_t j = 0; j < in; ++j)
                if (m[o * in + j] != 0.0f) fan[static_cast<size_t>(j)]++;
        const float* xd = input_spikes.array().data();
        const int64_t rows = input_spikes.numel() / in;
        int64_t total = 0;
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < in; ++j)
                if (xd[r * in + j] != 0.0f) total += fan[static_cast<size_t>(j)];
        return total;
    }
    // conv: accumulate active-mask hits over every output position.
    if (input_spikes.rank() != 4) throw DimensionError("synops: conv input must be [B,C,H,W]");
    const int64_t B = input_spikes.dim(0), C = input_spikes.dim(1), H = input_spikes.dim(2),
                  W = input_spikes.dim(3);
    const int64_t O = w_.dim(0), kh = w_.dim(2), kw = w_.dim(3);
    if (C != w_.dim(1)) throw DimensionError("synops: channel mismatch");
    const int64_t hnum = H + 2 * padding_ - kh, wnum = W + 2 * padding_ - kw;
    if (hnum < 0 || wnum < 0 || hnum % stride_ != 0 || wnum % stride_ != 0)
        throw DimensionError("synops: non-integral output size");
    const int64_t Ho = hnum / stride_ + 1, Wo = wnum / stride_ + 1;
    const int64_t K = C * kh * kw;
    // Active fan-out of each (c, i, j) kernel position across output channels.
    std::vector<int64_t> fan(static_cast<size_t>(K), 0);
    for (int64_t o = 0; o < O; ++o)
        for (int64_t q = 0; q < K; ++q)
            if (m[o * K + q] != 0.0f) fan[static_cast<size_t>(q)]++;
    const float* xd = input_spikes.array().data();
    int64_t total = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < kh; ++i)
                for (int64_t j = 0; j < kw; ++j) {
                    const int64_t q = (c * kh + i) * kw + j;
                    if (fan[static_cast<size_t>(q)] == 0) continue;
                    for (int64_t oy = 0; oy < Ho; ++oy) {
                        const int64_t y = oy * stride_ - padding_ + i;
                        if (y < 0 || y >= H) continue;
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            const int64_t xx = ox * stride_ - padding_ + j;
                            if (xx < 0 || xx >= W) continue;
                            if (xd[((b * C + c) * H + y) * W + xx] != 0.0f)
                                total += fan[static_cast<size_t>(q)];
                        }
                    }
                }
    return total;
}

void MaskedLayer::set_frozen(bool frozen) {
    weight_frozen_ = frozen;
    w_.set_requires_grad(!frozen);
    s_.set_requires_grad(frozen);
}

void MaskedLayer::set_inert() {
    weight_frozen_ = true;
    w_.set_requires_grad(false);
    s_.set_requires_grad(false);
}

int64_t MaskedLayer::active_count() const {
    const ArrayXf& m = m_.array();
    int64_t c = 0;
    for (int64_t i = 0; i < m.size(); ++i)
        if (m[i] != 0.0f) ++c;
    return c;
}

double MaskedLayer::sparsity() const {
    return 1.0 - static_cast<double>(active_count()) / static_cast<double>(numel());
}

uint64_t MaskedLayer::weight_hash() const {
    return hash_bytes(w_.array().data(), static_cast<size_t>(w_.numel()) * sizeof(float));
}

int64_t synops_count(const MaskedLayer& l, const Tensor& input_spikes) {
    return l.synops(input_spikes);
}

}  // namespace slt

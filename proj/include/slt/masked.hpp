#pragma once

#include <cstdint>
#include <string>

#include "slt/rng.hpp"
#include "slt/telemetry.hpp"
#include "slt/tensor.hpp"

namespace slt {

enum class WeightMode { full_precision, binary_weight };
enum class LayerKind { linear, conv };

// A linear or conv layer carrying frozen random weights w, a pruning score s
// of the same shape, a binary mask m selected as the top scores, and a gain
// term alpha rescaling the surviving weights. While searching, gradients
// reach s straight-through; while weight-training they reach w.
class MaskedLayer {
  public:
    static MaskedLayer make_linear(std::string name, int64_t out_dim, int64_t in_dim,
                                   RngStream& init);
    static MaskedLayer make_conv(std::string name, int64_t out_ch, int64_t in_ch, int kh, int kw,
                                 int stride, int padding, RngStream& init);

    // alpha * (m.w) in full precision, alpha * (m.sign(w)) in binary mode.
    // Frozen: straight-through gradient to every score entry. Unfrozen:
    // gradient to w (binary mode recomputes alpha from the live weights).
    Tensor effective_weight() const;

    // linear: x[..., in] -> [..., out]; conv: x[B,C,H,W] -> [B,O,H',W'].
    // Records synops into tel when the input is binary spikes.
    Tensor forward(const Tensor& x, Telemetry* tel = nullptr) const;

    // s <- s - eta * (dL/dw_eff . alpha*w)   (alpha*sign(w) in binary mode).
    void score_grad_update(const Tensor& upstream_grad_wrt_effective_weight, float eta);

    // m <- indicator of the k = ceil((1-prune_rate)*n) largest scores, ties
    // broken toward the lower flat index.
    void project_topk();

    // alpha <- |m.w|_1 / |m|_1.
    void gain_update();

    // Accumulate-operation count for a binary input.
    int64_t synops(const Tensor& input_spikes) const;

    void set_prune_rate(float pr);
    void set_mode(WeightMode m) { mode_ = m; }
    // Frozen: w fixed, s trainable. Unfrozen: w trainable, s inert.
    void set_frozen(bool frozen);
    // Drops requires_grad from both w and s (evaluation / hard freeze).
    void set_inert();

    const std::string& name() const { return name_; }
    LayerKind kind() const { return kind_; }
    WeightMode mode() const { return mode_; }
    bool weight_frozen() const { return weight_frozen_; }
    float alpha() const { return alpha_; }
    float prune_rate() const { return prune_rate_; }
    int stride() const { return stride_; }
    int padding() const { return padding_; }
    int64_t numel() const { return w_.numel(); }
    int64_t active_count() const;
    int64_t target_active() const;
    double sparsity() const;
    uint64_t weight_hash() const;

    Tensor& w() { return w_; }
    Tensor& s() { return s_; }
    Tensor& m() { return m_; }
    const Tensor& w() const { return w_; }
    const Tensor& s() const { return s_; }
    const Tensor& m() const { return m_; }
    void set_alpha(float a) { alpha_ = a; }

  private:
    std::string name_;
    LayerKind kind_ = LayerKind::linear;
    WeightMode mode_ = WeightMode::full_precision;
    bool weight_frozen_ = true;
    float alpha_ = 1.0f;
    float prune_rate_ = 0.0f;
    int stride_ = 1, padding_ = 0;
    Tensor w_, s_, m_;
};

// Free-function forms of the layer operations.
inline Tensor effective_weight(const MaskedLayer& l) { return l.effective_weight(); }
int64_t synops_count(const MaskedLayer& l, const Tensor& input_spikes);

uint64_t hash_bytes(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace slt

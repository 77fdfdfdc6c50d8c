#include "slt/lif.hpp"

#include <cmath>

#include "slt/ops.hpp"

namespace slt {

void LifParams::validate() const {
    if (!(lambda_decay > 0.0f && lambda_decay <= 1.0f))
        throw ContractError("lif: decay must lie in (0, 1]");
    if (!(v_reset < v_th)) throw ContractError("lif: v_reset must be below v_th");
    if (!(surrogate_width > 0.0f)) throw ContractError("lif: surrogate width must be positive");
}

LifState lif_initial_state(const Shape& per_step_shape, const LifParams& p) {
    p.validate();
    return LifState{Tensor::full(per_step_shape, p.v_reset), 0};
}

Tensor surrogate_grad(const Tensor& u, const LifParams& p) {
    ArrayXf v = (1.0f - (u.array() - p.v_th).abs() / p.surrogate_width).max(0.0f);
    return Tensor::from_array(u.shape(), std::move(v));
}

Tensor spike_function(const Tensor& u, const LifParams& p) {
    const float v_th = p.v_th, width = p.surrogate_width;
    auto fwd = [v_th](const std::vector<Tensor>& in) -> ArrayXf {
        return (in[0].array() >= v_th).cast<float>();
    };
    auto bwd = [v_th, width](const ArrayXf& upstream, const std::vector<Tensor>& in,
                             const ArrayXf&) -> std::vector<ArrayXf> {
        ArrayXf tri = (1.0f - (in[0].array() - v_th).abs() / width).max(0.0f);
        return {upstream * tri};
    };
    return custom_grad(u.shape(), fwd, bwd, {u});
}

LifStepResult lif_step(const LifState& state, const Tensor& input, const LifParams& p) {
    p.validate();
    if (state.v.shape() != input.shape())
        throw DimensionError("lif_step: state " + shape_str(state.v.shape()) + " vs input " +
                             shape_str(input.shape()));
    Tensor u = add(mul_scalar(state.v, p.lambda_decay), mul_scalar(input, p.gain()));
    Tensor s = spike_function(u, p);
    // v' = u - u*s + v_reset*s
    Tensor v_next = sub(u, mul(u, s));
    if (p.v_reset != 0.0f) v_next = add(v_next, mul_scalar(s, p.v_reset));
    return LifStepResult{s, u, LifState{v_next, state.step + 1}};
}

Tensor lif_run(const Tensor& inputs, const LifParams& p, Telemetry* tel) {
    p.validate();
    if (inputs.rank() < 2) throw ContractError("lif_run: expects [T, ...]");
    const int64_t T = inputs.dim(0);
    if (T < 1) throw ContractError("lif_run: T must be >= 1");
    Shape step_shape(inputs.shape().begin() + 1, inputs.shape().end());
    LifState st = lif_initial_state(step_shape, p);
    std::vector<Tensor> spikes;
    spikes.reserve(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t) {
        LifStepResult r = lif_step(st, slice0(inputs, t), p);
        st = std::move(r.state);
        spikes.push_back(std::move(r.spikes));
    }
    Tensor out = stack0(spikes);
    if (tel) {
        tel->spikes += static_cast<double>(out.array().sum());
        tel->spike_slots += static_cast<double>(out.numel());
    }
    return out;
}

Tensor binarize_weights(const Tensor& w, const Tensor& mask) {
    if (w.shape() != mask.shape())
        throw DimensionError("binarize_weights: w " + shape_str(w.shape()) + " vs mask " +
                             shape_str(mask.shape()));
    if (!is_binary(mask)) throw ContractError("binarize_weights: mask must be 0/1");
    const float msum = mask.array().sum();
    if (msum <= 0.0f) throw DegenerateMaskError("binarize_weights: all-zero mask");
    auto fwd = [msum](const std::vector<Tensor>& in) -> ArrayXf {
        const ArrayXf& wv = in[0].array();
        const ArrayXf& mv = in[1].array();
        const float alpha = (mv * wv).abs().sum() / msum;
        // sign(0) = +1
        ArrayXf sign = (wv >= 0.0f).cast<float>() * 2.0f - 1.0f;
        return alpha * sign * mv;
    };
    auto bwd = [](const ArrayXf& upstream, const std::vector<Tensor>& in,
                  const ArrayXf&) -> std::vector<ArrayXf> {
        return {upstream * in[1].array(), ArrayXf::Zero(in[1].numel())};
    };
    return custom_grad(w.shape(), fwd, bwd, {w, mask});
}

Tensor binarize_activations(const Tensor& x) {
    auto fwd = [](const std::vector<Tensor>& in) -> ArrayXf {
        return (in[0].array() >= 0.0f).cast<float>();
    };
    auto bwd = [](const ArrayXf& upstream, const std::vector<Tensor>& in,
                  const ArrayXf&) -> std::vector<ArrayXf> {
        ArrayXf tri = (1.0f - in[0].array().abs()).max(0.0f);
        return {upstream * tri};
    };
    return custom_grad(x.shape(), fwd, bwd, {x});
}

}  // namespace slt

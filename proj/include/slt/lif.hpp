#pragma once

#include "slt/telemetry.hpp"
#include "slt/tensor.hpp"

namespace slt {

// Leaky integrate-and-fire cell parameters. The decay multiplies the carried
// membrane potential each step; input gain is either 1 (unit) or 1 - decay
// (coupled), selecting how strongly the input current couples in.
struct LifParams {
    float lambda_decay = 0.99f;
    float v_th = 1.0f;
    float v_reset = 0.0f;
    float surrogate_width = 1.0f;
    enum class Gain { unit, coupled };
    Gain input_gain = Gain::unit;

    void validate() const;
    float gain() const { return input_gain == Gain::unit ? 1.0f : 1.0f - lambda_decay; }
};

// Membrane potential after reset, carried between steps. v participates in
// the tape so gradients flow through time.
struct LifState {
    Tensor v;
    int64_t step = 0;
};

LifState lif_initial_state(const Shape& per_step_shape, const LifParams& p);

struct LifStepResult {
    Tensor spikes;  // binary
    Tensor u;       // membrane potential before reset
    LifState state;
};

// One step: u = decay*v + gain*input; spikes = Theta(u - v_th) with the
// triangular surrogate backward; v' = u*(1-spikes) + v_reset*spikes.
LifStepResult lif_step(const LifState& state, const Tensor& input, const LifParams& p);

// Folds lif_step over axis 0 of inputs[T, ...] from the reset state.
Tensor lif_run(const Tensor& inputs, const LifParams& p, Telemetry* tel = nullptr);

// Triangular surrogate value max(0, 1 - |u - v_th|/width); plain elementwise
// function of u (no tape), exposed for inspection and tests.
Tensor surrogate_grad(const Tensor& u, const LifParams& p);

// Theta(u - v_th) forward with the surrogate backward; the node lif_step
// installs.
Tensor spike_function(const Tensor& u, const LifParams& p);

// alpha*sign(w) on the mask support, alpha = |mask.w|_1 / |mask|_1, with
// straight-through backward restricted to the mask. sign(0) is +1.
Tensor binarize_weights(const Tensor& w, const Tensor& mask);

// Theta(x) forward, straight-through triangle (center 0, width 1) backward.
Tensor binarize_activations(const Tensor& x);

}  // namespace slt

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "slt/ops.hpp"
#include "slt/rng.hpp"
#include "slt/tensor.hpp"

namespace sltt {

inline slt::Tensor random_tensor(const slt::Shape& shape, slt::RngStream& rng, float lo = -1.0f,
                                 float hi = 1.0f) {
    slt::ArrayXf v(slt::shape_numel(shape));
    for (int64_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
    return slt::Tensor::from_array(shape, std::move(v));
}

// Weighted-sum loss with fixed weights; double accumulation keeps the
// finite-difference signal clean in f32.
struct LossProbe {
    slt::ArrayXf weights;

    explicit LossProbe(int64_t n, slt::RngStream& rng) : weights(n) {
        for (int64_t i = 0; i < n; ++i) weights[i] = rng.uniform(-1.0f, 1.0f);
    }

    double value_of(const slt::Tensor& out) const {
        double acc = 0.0;
        for (int64_t i = 0; i < out.numel(); ++i)
            acc += static_cast<double>(out.array()[i]) * static_cast<double>(weights[i]);
        return acc;
    }

    // Scalar loss tensor usable for backward: sum(out .* weights).
    slt::Tensor loss_of(const slt::Tensor& out) const {
        return slt::sum_all(slt::mul(out, slt::Tensor::from_array(out.shape(), weights)));
    }
};

// Central finite differences of `forward` against tape gradients on the given
// leaves. `forward` must recompute the op output from the live leaf values.
// Returns the max elementwise error |ad - fd| / max(1, |fd|).
inline double check_gradients(const std::function<slt::Tensor()>& forward,
                              std::vector<slt::Tensor> leaves, slt::RngStream& rng,
                              float h = 1e-3f) {
    for (slt::Tensor& l : leaves) {
        l.set_requires_grad(true);
        l.zero_grad();
    }
    slt::Tensor out = forward();
    LossProbe probe(out.numel(), rng);
    slt::backward(probe.loss_of(out));

    double max_err = 0.0;
    for (slt::Tensor& leaf : leaves) {
        for (int64_t i = 0; i < leaf.numel(); ++i) {
            const float saved = leaf.array()[i];
            double plus, minus;
            {
                slt::NoGradGuard ng;
                leaf.mutable_array()[i] = saved + h;
                plus = probe.value_of(forward());
                leaf.mutable_array()[i] = saved - h;
                minus = probe.value_of(forward());
                leaf.mutable_array()[i] = saved;
            }
            const double fd = (plus - minus) / (2.0 * static_cast<double>(h));
            const double ad = static_cast<double>(leaf.grad_array()[i]);
            const double err = std::abs(ad - fd) / std::max(1.0, std::abs(fd));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace sltt

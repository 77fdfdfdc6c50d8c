#include "slt/optim.hpp"

#include <cmath>

namespace slt {

Optimizer::Optimizer(OptimConfig cfg, std::vector<Tensor> params)
    : cfg_(cfg), params_(std::move(params)) {
    if (cfg_.kind == OptimKind::adam) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i] = ArrayXf::Zero(params_[i].numel());
            v_[i] = ArrayXf::Zero(params_[i].numel());
        }
    }
}

void Optimizer::step() {
    ++step_count_;
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad())
            throw ContractError("optimizer step: parameter " + std::to_string(i) + " has no gradient");
        const ArrayXf& g = p.grad_array();
        if (g.size() != p.numel()) throw ContractError("optimizer step: gradient shape mismatch");
        if (cfg_.kind == OptimKind::sgd) {
            p.mutable_array() -= cfg_.lr * g;
        } else {
            m_[i] = cfg_.beta1 * m_[i] + (1.0f - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0f - cfg_.beta2) * g.square();
            const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(step_count_));
            const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(step_count_));
            p.mutable_array() -= cfg_.lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + cfg_.eps);
        }
        ensure_finite(p.array(), "optimizer step");
    }
}

void Optimizer::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace slt

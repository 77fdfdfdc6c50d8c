#pragma once

#include <cstdint>
#include <vector>

#include "slt/tensor.hpp"

namespace slt {

enum class OptimKind { sgd, adam };

struct OptimConfig {
    OptimKind kind = OptimKind::adam;
    float lr = 0.1f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// In-place SGD/Adam over a fixed parameter list. Adam moments are allocated
// shape-matched on first step; the step counter is shared across parameters.
class Optimizer {
  public:
    Optimizer(OptimConfig cfg, std::vector<Tensor> params);

    void step();
    void zero_grad();
    int64_t step_count() const { return step_count_; }
    const std::vector<Tensor>& params() const { return params_; }
    float lr() const { return cfg_.lr; }
    void set_lr(float lr) { cfg_.lr = lr; }

  private:
    OptimConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<ArrayXf> m_, v_;
    int64_t step_count_ = 0;
};

}  // namespace slt

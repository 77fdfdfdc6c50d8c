#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slt/ops.hpp"
#include "slt/optim.hpp"

using namespace slt;

TEST_CASE("sgd step") {
    Tensor w = Tensor::from_data({1}, {1.0f});
    w.set_requires_grad(true);
    w.zero_grad();
    w.node()->grad[0] = 0.5f;
    Optimizer opt({OptimKind::sgd, 0.1f}, {w});
    opt.step();
    CHECK(w.item() == doctest::Approx(0.95f));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adam first step moves by about -lr") {
    Tensor w = Tensor::from_data({1}, {0.0f});
    w.set_requires_grad(true);
    w.zero_grad();
    w.node()->grad[0] = 1.0f;
    OptimConfig cfg;
    cfg.kind = OptimKind::adam;
    cfg.lr = 0.1f;
    Optimizer opt(cfg, {w});
    opt.step();
    // bias-corrected m-hat = v-hat = 1 at t=1, so dw = -lr / (1 + eps)
    CHECK(w.item() == doctest::Approx(-0.1f).epsilon(1e-4));
}

TEST_CASE("zero gradient leaves sgd parameters unchanged") {
    Tensor w = Tensor::from_data({3}, {1, 2, 3});
    w.set_requires_grad(true);
    w.zero_grad();
    Optimizer opt({OptimKind::sgd, 0.5f}, {w});
    opt.step();
    CHECK(w.at({0}) == 1.0f);
    CHECK(w.at({1}) == 2.0f);
    CHECK(w.at({2}) == 3.0f);
}

TEST_CASE("missing gradient is a contract error") {
    Tensor w = Tensor::from_data({2}, {1, 2});
    w.set_requires_grad(true);
    Optimizer opt({OptimKind::sgd, 0.1f}, {w});
    CHECK_THROWS_AS(opt.step(), ContractError);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    Tensor w = Tensor::from_data({2}, {2.0f, -3.0f});
    w.set_requires_grad(true);
    OptimConfig cfg;
    cfg.kind = OptimKind::adam;
    cfg.lr = 0.1f;
    Optimizer opt(cfg, {w});
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        backward(sum_all(mul(w, w)));
        opt.step();
    }
    CHECK(std::abs(w.at({0})) < 0.05f);
    CHECK(std::abs(w.at({1})) < 0.05f);
}

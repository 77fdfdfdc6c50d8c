#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "slt/ops.hpp"
#include "slt/tensor.hpp"
#include "testutil.hpp"

using namespace slt;
using sltt::check_gradients;
using sltt::random_tensor;

TEST_CASE("matmul identity and projector") {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor r = matmul(eye, a);
    CHECK(r.at({0, 0}) == 1);
    CHECK(r.at({0, 1}) == 2);
    CHECK(r.at({1, 0}) == 3);
    CHECK(r.at({1, 1}) == 4);

    Tensor proj = Tensor::from_data({2, 2}, {1, 0, 0, 0});
    Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
    Tensor p = matmul(proj, b);
    CHECK(p.at({0, 0}) == 5);
    CHECK(p.at({0, 1}) == 6);
    CHECK(p.at({1, 0}) == 0);
    CHECK(p.at({1, 1}) == 0);

    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("matmul gradient vs finite differences") {
    RngStream rng(7);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    const double err = check_gradients([&] { return matmul(a, b); }, {a, b}, rng);
    CHECK(err < 1e-3);
}

TEST_CASE("conv2d all-ones and impulse response") {
    Tensor x = Tensor::ones({1, 1, 3, 3});
    Tensor k = Tensor::ones({1, 1, 3, 3});
    Tensor y = conv2d(x, k, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == doctest::Approx(9.0f));

    // delta at the center of a 5x5 input recovers the kernel as a window
    Tensor delta = Tensor::zeros({1, 1, 5, 5});
    delta.mutable_data()[2 * 5 + 2] = 1.0f;
    Tensor kk = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor out = conv2d(delta, kk, 1, 0);  // [1,1,3,3]
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j)
            CHECK(out.at({0, 0, i, j}) == doctest::Approx(kk.at({0, 0, 2 - i, 2 - j})));

    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), 2, 0),
                    DimensionError);
}

TEST_CASE("conv2d gradients vs finite differences") {
    RngStream rng(11);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor k = random_tensor({4, 3, 3, 3}, rng, -0.5f, 0.5f);
    const double err = check_gradients([&] { return conv2d(x, k, 1, 1); }, {x, k}, rng);
    CHECK(err < 1e-3);
    RngStream rng2(13);
    Tensor x2 = random_tensor({1, 2, 7, 7}, rng2);
    Tensor k2 = random_tensor({3, 2, 3, 3}, rng2, -0.5f, 0.5f);
    const double err2 = check_gradients([&] { return conv2d(x2, k2, 2, 1); }, {x2, k2}, rng2);
    CHECK(err2 < 1e-3);
}

TEST_CASE("custom_grad straight-through round") {
    Tensor x = Tensor::from_data({4}, {0.2f, 0.7f, 1.4f, -0.6f});
    x.set_requires_grad(true);
    auto fwd = [](const std::vector<Tensor>& in) -> ArrayXf { return in[0].array().round(); };
    auto bwd = [](const ArrayXf& up, const std::vector<Tensor>&,
                  const ArrayXf&) -> std::vector<ArrayXf> { return {up}; };
    Tensor y = custom_grad(x.shape(), fwd, bwd, {x});
    CHECK(y.at({0}) == 0.0f);
    CHECK(y.at({1}) == 1.0f);
    backward(sum_all(y));
    for (int64_t i = 0; i < 4; ++i) CHECK(x.grad_array()[i] == 1.0f);
}

TEST_CASE("custom_grad theta forward with triangle backward") {
    Tensor u = Tensor::from_data({2}, {1.0f, 2.5f});
    u.set_requires_grad(true);
    auto fwd = [](const std::vector<Tensor>& in) -> ArrayXf {
        return (in[0].array() >= 1.0f).cast<float>();
    };
    auto bwd = [](const ArrayXf& up, const std::vector<Tensor>& in,
                  const ArrayXf&) -> std::vector<ArrayXf> {
        return {up * (1.0f - (in[0].array() - 1.0f).abs()).max(0.0f)};
    };
    Tensor s = custom_grad(u.shape(), fwd, bwd, {u});
    backward(sum_all(s));
    CHECK(u.grad_array()[0] == doctest::Approx(1.0f));
    CHECK(u.grad_array()[1] == doctest::Approx(0.0f));
}

TEST_CASE("custom_grad chains in reverse order") {
    std::vector<int> calls;
    Tensor x = Tensor::ones({2});
    x.set_requires_grad(true);
    auto identity = [](const std::vector<Tensor>& in) -> ArrayXf { return in[0].array(); };
    auto tag = [&calls](int id) {
        return [&calls, id](const ArrayXf& up, const std::vector<Tensor>&,
                            const ArrayXf&) -> std::vector<ArrayXf> {
            calls.push_back(id);
            return {up};
        };
    };
    Tensor inner = custom_grad(x.shape(), identity, tag(1), {x});
    Tensor outer = custom_grad(inner.shape(), identity, tag(2), {inner});
    backward(sum_all(outer));
    REQUIRE(calls.size() == 2);
    CHECK(calls[0] == 2);
    CHECK(calls[1] == 1);
}

TEST_CASE("custom_grad rejects wrong gradient shapes") {
    Tensor x = Tensor::ones({3});
    x.set_requires_grad(true);
    auto fwd = [](const std::vector<Tensor>& in) -> ArrayXf { return in[0].array(); };
    auto bad = [](const ArrayXf&, const std::vector<Tensor>&,
                  const ArrayXf&) -> std::vector<ArrayXf> { return {ArrayXf::Zero(2)}; };
    Tensor y = custom_grad(x.shape(), fwd, bad, {x});
    CHECK_THROWS_AS(backward(sum_all(y)), GradientError);
}

TEST_CASE("backward basics and accumulation") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3});
    x.set_requires_grad(true);
    backward(sum_all(x));
    for (int64_t i = 0; i < 3; ++i) CHECK(x.grad_array()[i] == 1.0f);

    x.zero_grad();
    Tensor loss = sum_all(mul(x, x));
    backward(loss);
    CHECK(x.grad_array()[0] == doctest::Approx(2.0f));
    CHECK(x.grad_array()[1] == doctest::Approx(4.0f));
    CHECK(x.grad_array()[2] == doctest::Approx(6.0f));

    backward(loss);  // repeated call accumulates
    CHECK(x.grad_array()[0] == doctest::Approx(4.0f));
    CHECK(x.grad_array()[1] == doctest::Approx(8.0f));
    CHECK(x.grad_array()[2] == doctest::Approx(12.0f));

    CHECK_THROWS_AS(backward(mul(x, x)), ContractError);
}

TEST_CASE("DAG with shared subexpressions sums gradients over all paths") {
    RngStream rng(3);
    Tensor x = random_tensor({5}, rng, 0.5f, 1.5f);
    x.set_requires_grad(true);
    Tensor a = mul(x, x);
    Tensor b = add(a, x);
    Tensor c = mul(b, a);
    sltt::LossProbe probe(5, rng);
    backward(probe.loss_of(c));

    // Brute-force path enumeration over the same graph. Elementwise edges:
    //   a<-x (deriv x, twice), b<-a (1), b<-x (1), c<-b (a), c<-a (b),
    //   loss<-c (w).
    struct Edge {
        int parent;
        ArrayXf deriv;
    };
    const ArrayXf xv = x.array(), av = a.array(), bv = b.array();
    // node ids: 0=x, 1=a, 2=b, 3=c
    std::vector<std::vector<Edge>> edges(4);
    edges[1] = {{0, xv}, {0, xv}};
    edges[2] = {{1, ArrayXf::Ones(5)}, {0, ArrayXf::Ones(5)}};
    edges[3] = {{2, av}, {1, bv}};
    ArrayXf total = ArrayXf::Zero(5);
    std::function<void(int, ArrayXf)> walk = [&](int node, ArrayXf prod) {
        if (node == 0) {
            total += prod;
            return;
        }
        for (const Edge& e : edges[static_cast<size_t>(node)]) walk(e.parent, prod * e.deriv);
    };
    walk(3, probe.weights);
    for (int64_t i = 0; i < 5; ++i)
        CHECK(x.grad_array()[i] == doctest::Approx(total[i]).epsilon(1e-4));
}

TEST_CASE("elementwise and shape op gradients") {
    RngStream rng(19);
    SUBCASE("add/sub/mul/scalar") {
        Tensor a = random_tensor({2, 3}, rng);
        Tensor b = random_tensor({2, 3}, rng);
        CHECK(check_gradients([&] { return mul(add(a, b), sub(a, b)); }, {a, b}, rng) < 1e-3);
        CHECK(check_gradients([&] { return add_scalar(mul_scalar(a, 1.7f), 0.3f); }, {a}, rng) <
              1e-3);
    }
    SUBCASE("add_bias") {
        Tensor x = random_tensor({4, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        CHECK(check_gradients([&] { return add_bias(x, b); }, {x, b}, rng) < 1e-3);
    }
    SUBCASE("linear") {
        Tensor x = random_tensor({2, 3, 4}, rng);
        Tensor w = random_tensor({5, 4}, rng);
        CHECK(check_gradients([&] { return linear(x, w); }, {x, w}, rng) < 1e-3);
    }
    SUBCASE("batched_matmul with transposes") {
        Tensor a = random_tensor({2, 2, 3, 4}, rng);
        Tensor b = random_tensor({2, 2, 3, 4}, rng);
        CHECK(check_gradients([&] { return batched_matmul(a, b, false, true); }, {a, b}, rng) <
              1e-3);
        Tensor c = random_tensor({2, 2, 4, 3}, rng);
        CHECK(check_gradients([&] { return batched_matmul(a, c, true, true); }, {a, c}, rng) <
              1e-3);
    }
    SUBCASE("pools") {
        Tensor x = random_tensor({2, 2, 4, 4}, rng);
        CHECK(check_gradients([&] { return avg_pool2(x); }, {x}, rng) < 1e-3);
        // keep pool windows free of near-ties so the argmax is FD-stable
        Tensor y = Tensor::zeros({1, 1, 4, 4});
        for (int64_t i = 0; i < 16; ++i)
            y.mutable_data()[i] = 0.1f * static_cast<float>((i * 7) % 16);
        CHECK(check_gradients([&] { return max_pool2(y); }, {y}, rng) < 1e-3);
    }
    SUBCASE("relu away from the kink") {
        Tensor x = random_tensor({3, 3}, rng);
        for (int64_t i = 0; i < 9; ++i) {
            float& v = x.mutable_data()[i];
            if (std::abs(v) < 0.05f) v = 0.1f;
        }
        CHECK(check_gradients([&] { return relu(x); }, {x}, rng) < 1e-3);
    }
    SUBCASE("reshape/permute/slice/stack/gather/mean") {
        Tensor x = random_tensor({2, 3, 4}, rng);
        CHECK(check_gradients([&] { return reshape(x, {4, 6}); }, {x}, rng) < 1e-3);
        CHECK(check_gradients([&] { return permute(x, {2, 0, 1}); }, {x}, rng) < 1e-3);
        CHECK(check_gradients([&] { return slice0(x, 1); }, {x}, rng) < 1e-3);
        CHECK(check_gradients([&] { return stack0({slice0(x, 1), slice0(x, 0)}); }, {x}, rng) <
              1e-3);
        CHECK(check_gradients([&] { return gather_axis(x, 1, {2, 0, 2}); }, {x}, rng) < 1e-3);
        CHECK(check_gradients([&] { return mean_axis(x, 1); }, {x}, rng) < 1e-3);
    }
    SUBCASE("cross entropy") {
        Tensor logits = random_tensor({4, 3}, rng);
        std::vector<int> labels = {0, 2, 1, 2};
        CHECK(check_gradients([&] { return cross_entropy(logits, labels); }, {logits}, rng) < 1e-3);
    }
}

TEST_CASE("permute round trip and gather values") {
    RngStream rng(23);
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor p = permute(x, {1, 2, 0});
    CHECK(p.shape() == Shape{3, 4, 2});
    CHECK(p.at({2, 3, 1}) == x.at({1, 2, 3}));
    Tensor back = permute(p, {2, 0, 1});
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(back.array()[i] == x.array()[i]);

    Tensor g = gather_axis(x, 2, {3, 1});
    CHECK(g.shape() == Shape{2, 3, 2});
    CHECK(g.at({1, 2, 0}) == x.at({1, 2, 3}));
    CHECK_THROWS_AS(gather_axis(x, 2, {4}), IndexError);
}

TEST_CASE("ops are deterministic") {
    RngStream rng(29);
    Tensor a = random_tensor({16, 16}, rng);
    Tensor b = random_tensor({16, 16}, rng);
    Tensor c1 = matmul(a, b);
    Tensor c2 = matmul(a, b);
    for (int64_t i = 0; i < c1.numel(); ++i) CHECK(c1.array()[i] == c2.array()[i]);
}

TEST_CASE("non-finite results are rejected") {
    Tensor big = Tensor::full({2}, 3e38f);
    CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("no-grad mode skips the tape") {
    Tensor x = Tensor::ones({2});
    x.set_requires_grad(true);
    NoGradGuard ng;
    Tensor y = mul(x, x);
    CHECK(y.node()->parents.empty());
}

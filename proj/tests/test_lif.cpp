#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slt/lif.hpp"
#include "slt/ops.hpp"
#include "testutil.hpp"

using namespace slt;

namespace {
LifParams params(float decay, float v_th = 1.0f, float v_reset = 0.0f,
                 LifParams::Gain gain = LifParams::Gain::unit) {
    LifParams p;
    p.lambda_decay = decay;
    p.v_th = v_th;
    p.v_reset = v_reset;
    p.input_gain = gain;
    return p;
}
}  // namespace

TEST_CASE("lif_step zero input stays silent") {
    LifParams p = params(0.7f);
    LifState st = lif_initial_state({1, 3}, p);
    auto r = lif_step(st, Tensor::zeros({1, 3}), p);
    for (int64_t i = 0; i < 3; ++i) {
        CHECK(r.spikes.array()[i] == 0.0f);
        CHECK(r.u.array()[i] == 0.0f);
        CHECK(r.state.v.array()[i] == 0.0f);
    }
}

TEST_CASE("lif_step immediate threshold crossing") {
    LifParams p = params(0.5f);
    LifState st = lif_initial_state({1, 1}, p);
    auto r = lif_step(st, Tensor::full({1, 1}, 1.5f), p);
    CHECK(r.u.item() == doctest::Approx(1.5f));
    CHECK(r.spikes.item() == 1.0f);
    CHECK(r.state.v.item() == doctest::Approx(0.0f));
}

TEST_CASE("three-step recurrence matches the hand trace") {
    LifParams p = params(0.5f);
    LifState st = lif_initial_state({1, 1}, p);
    const float expected_u[3] = {0.6f, 0.9f, 1.05f};
    const float expected_s[3] = {0.0f, 0.0f, 1.0f};
    for (int i = 0; i < 3; ++i) {
        auto r = lif_step(st, Tensor::full({1, 1}, 0.6f), p);
        CHECK(r.u.item() == doctest::Approx(expected_u[i]).epsilon(1e-6));
        CHECK(r.spikes.item() == expected_s[i]);
        st = r.state;
    }
    CHECK(st.v.item() == doctest::Approx(0.0f));
    CHECK(st.step == 3);
}

TEST_CASE("coupled input gain scales the current by 1 - decay") {
    LifParams p = params(0.75f, 10.0f, 0.0f, LifParams::Gain::coupled);
    LifState st = lif_initial_state({1, 1}, p);
    auto r = lif_step(st, Tensor::full({1, 1}, 2.0f), p);
    CHECK(r.u.item() == doctest::Approx(0.5f));  // (1 - 0.75) * 2
}

TEST_CASE("surrogate triangle values") {
    LifParams p = params(0.5f);  // v_th = 1, width = 1
    Tensor u = Tensor::from_data({4}, {1.0f, 0.0f, 2.0f, 1.5f});
    Tensor g = surrogate_grad(u, p);
    CHECK(g.at({0}) == doctest::Approx(1.0f));
    CHECK(g.at({1}) == doctest::Approx(0.0f));
    CHECK(g.at({2}) == doctest::Approx(0.0f));
    CHECK(g.at({3}) == doctest::Approx(0.5f));
}

TEST_CASE("lif_run basics") {
    LifParams p = params(0.5f);
    SUBCASE("zero input, zero spikes") {
        Tensor out = lif_run(Tensor::zeros({4, 2, 3}), p);
        CHECK(out.shape() == Shape{4, 2, 3});
        CHECK(out.array().abs().sum() == 0.0f);
    }
    SUBCASE("T=1 equals a single step from reset") {
        RngStream rng(5);
        Tensor in = sltt::random_tensor({1, 2, 4}, rng, -2.0f, 2.0f);
        Tensor run = lif_run(in, p);
        LifState st = lif_initial_state({2, 4}, p);
        auto r = lif_step(st, slice0(in, 0), p);
        for (int64_t i = 0; i < 8; ++i) CHECK(run.array()[i] == r.spikes.array()[i]);
    }
    SUBCASE("spikes are exactly binary for random input") {
        RngStream rng(17);
        for (int trial = 0; trial < 10; ++trial) {
            Tensor in = sltt::random_tensor({3, 2, 5}, rng, -3.0f, 3.0f);
            CHECK(is_binary(lif_run(in, p)));
        }
    }
    SUBCASE("T = 0 rejected") {
        CHECK_THROWS_AS(lif_run(Tensor::zeros({2}), params(0.5f)), ContractError);
    }
}

TEST_CASE("reset identity: wherever S=1, V equals v_reset") {
    RngStream rng(23);
    LifParams p = params(0.8f, 1.0f, -0.25f);
    LifState st = lif_initial_state({4, 4}, p);
    for (int t = 0; t < 5; ++t) {
        auto r = lif_step(st, sltt::random_tensor({4, 4}, rng, -1.0f, 2.5f), p);
        for (int64_t i = 0; i < 16; ++i)
            if (r.spikes.array()[i] == 1.0f) CHECK(r.state.v.array()[i] == p.v_reset);
        st = r.state;
    }
}

TEST_CASE("subthreshold potential converges to I / (1 - decay)") {
    RngStream rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const float lambda = rng.uniform(0.3f, 0.85f);
        const float current = rng.uniform(0.05f, 0.3f);
        LifParams p = params(lambda, 1e30f);  // threshold out of reach
        LifState st = lif_initial_state({1, 1}, p);
        for (int n = 0; n < 100; ++n) st = lif_step(st, Tensor::full({1, 1}, current), p).state;
        CHECK(st.v.item() == doctest::Approx(current / (1.0f - lambda)).epsilon(1e-4));
    }
}

TEST_CASE("gradient propagates through time with the surrogate") {
    // Two steps, hand chain rule: dS2/dI1 via V1 including the reset term.
    LifParams p = params(0.5f);
    Tensor in = Tensor::from_data({2, 1, 1}, {0.6f, 0.6f});
    in.set_requires_grad(true);
    Tensor spikes = lif_run(in, p);
    backward(sum_all(spikes));
    // tri(0.6) = 0.6; tri(0.9) = 0.9; dV1/dU1 = (1 - S1) - U1 tri(U1) = 1 - 0.36
    const float g1 = 0.6f + 0.9f * 0.5f * (1.0f - 0.36f);
    CHECK(in.grad_array()[0] == doctest::Approx(g1).epsilon(1e-5));
    CHECK(in.grad_array()[1] == doctest::Approx(0.9f).epsilon(1e-5));
}

TEST_CASE("binarize_weights formula and straight-through support") {
    SUBCASE("masked example") {
        Tensor w = Tensor::from_data({3}, {2, -3, 4});
        Tensor m = Tensor::from_data({3}, {1, 0, 1});
        Tensor out = binarize_weights(w, m);
        CHECK(out.at({0}) == doctest::Approx(3.0f));
        CHECK(out.at({1}) == 0.0f);
        CHECK(out.at({2}) == doctest::Approx(3.0f));
    }
    SUBCASE("all-positive full mask gives the mean magnitude") {
        Tensor w = Tensor::from_data({4}, {1, 2, 3, 6});
        Tensor out = binarize_weights(w, Tensor::ones({4}));
        for (int64_t i = 0; i < 4; ++i) CHECK(out.array()[i] == doctest::Approx(3.0f));
    }
    SUBCASE("sign(0) is +1") {
        Tensor w = Tensor::from_data({3}, {-1, 0, 1});
        Tensor out = binarize_weights(w, Tensor::ones({3}));
        const float a = 2.0f / 3.0f;
        CHECK(out.at({0}) == doctest::Approx(-a));
        CHECK(out.at({1}) == doctest::Approx(a));
        CHECK(out.at({2}) == doctest::Approx(a));
    }
    SUBCASE("gradient passes only on mask support") {
        Tensor w = Tensor::from_data({3}, {2, -3, 4});
        w.set_requires_grad(true);
        Tensor m = Tensor::from_data({3}, {1, 0, 1});
        backward(sum_all(binarize_weights(w, m)));
        CHECK(w.grad_array()[0] == 1.0f);
        CHECK(w.grad_array()[1] == 0.0f);
        CHECK(w.grad_array()[2] == 1.0f);
    }
    SUBCASE("all-zero mask is degenerate") {
        CHECK_THROWS_AS(binarize_weights(Tensor::ones({3}), Tensor::zeros({3})),
                        DegenerateMaskError);
    }
}

TEST_CASE("gain is the least-squares optimal rescale on the mask support") {
    RngStream rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor w = sltt::random_tensor({12}, rng, -2.0f, 2.0f);
        ArrayXf m(12);
        for (int64_t i = 0; i < 12; ++i) m[i] = rng.below(2) ? 1.0f : 0.0f;
        m[0] = 1.0f;
        Tensor mask = Tensor::from_array({12}, m);
        Tensor out = binarize_weights(w, mask);
        float alpha = 0.0f;
        for (int64_t i = 0; i < 12; ++i)
            if (m[i] == 1.0f && w.array()[i] != 0.0f) {
                alpha = std::abs(out.array()[i]);
                break;
            }
        // grid-search the 1-D rescale over the squared error
        double best = 1e30, best_a = -1.0;
        for (int g = 0; g <= 4000; ++g) {
            const double a = 2.0 * g / 4000.0;
            double err = 0.0;
            for (int64_t i = 0; i < 12; ++i) {
                if (m[i] == 0.0f) continue;
                const double s = w.array()[i] >= 0.0f ? 1.0 : -1.0;
                const double d = w.array()[i] - a * s;
                err += d * d;
            }
            if (err < best) {
                best = err;
                best_a = a;
            }
        }
        CHECK(alpha == doctest::Approx(best_a).epsilon(2e-3));
    }
}

TEST_CASE("binarize_activations forward and triangle backward") {
    Tensor x = Tensor::from_data({3}, {-1.0f, 0.2f, 3.0f});
    Tensor y = binarize_activations(x);
    CHECK(y.at({0}) == 0.0f);
    CHECK(y.at({1}) == 1.0f);
    CHECK(y.at({2}) == 1.0f);

    Tensor z = Tensor::from_data({3}, {0.0f, 1.0f, -2.0f});
    z.set_requires_grad(true);
    backward(sum_all(binarize_activations(z)));
    CHECK(z.grad_array()[0] == doctest::Approx(1.0f));
    CHECK(z.grad_array()[1] == doctest::Approx(0.0f));
    CHECK(z.grad_array()[2] == doctest::Approx(0.0f));
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(params(0.0f).validate(), ContractError);
    CHECK_THROWS_AS(params(1.2f).validate(), ContractError);
    CHECK_THROWS_AS(params(0.5f, 1.0f, 1.5f).validate(), ContractError);
    LifParams p = params(0.5f);
    p.surrogate_width = 0.0f;
    CHECK_THROWS_AS(p.validate(), ContractError);
    CHECK_THROWS_AS(lif_step(lif_initial_state({1, 2}, params(0.5f)), Tensor::zeros({1, 3}),
                             params(0.5f)),
                    DimensionError);
}

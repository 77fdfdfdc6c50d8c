#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slt/data.hpp"
#include "slt/models.hpp"
#include "slt/ops.hpp"
#include "slt/tickets.hpp"
#include "testutil.hpp"

using namespace slt;

namespace {

Tensor random_binary(const Shape& s, RngStream& rng) {
    ArrayXf v(shape_numel(s));
    for (int64_t i = 0; i < v.size(); ++i) v[i] = rng.below(2) ? 1.0f : 0.0f;
    return Tensor::from_array(s, v);
}

}  // namespace

TEST_CASE("zero input gives equal logits") {
    RngStream init(3);
    ConvNetSpec spec;
    spec.in_ch = 2;
    spec.hw = 8;
    spec.classes = 3;
    spec.channels = {4, 8};
    spec.hidden = 16;
    SpikingConvNet net(spec, init);
    Tensor logits = net.forward(Tensor::zeros({4, 2, 2, 8, 8}));
    CHECK(logits.shape() == Shape{2, 3});
    for (int64_t i = 0; i < logits.numel(); ++i) CHECK(logits.array()[i] == 0.0f);
}

TEST_CASE("T=1 spiking mlp equals one Heaviside feedforward pass") {
    RngStream init(11);
    MlpSpec spec;
    spec.in_dim = 12;
    spec.hidden = 6;
    spec.classes = 3;
    spec.variant = Variant::snn;
    SpikingMlp mlp(spec, init);
    RngStream rng(5);
    Tensor frames = sltt::random_tensor({1, 4, 1, 3, 4}, rng, -1.0f, 3.0f);
    Tensor logits = mlp.forward(frames);

    // manual pass: u = x w1^T; s = theta(u - 1); logits = s w2^T
    std::vector<MaskedLayer*> ls = mlp.masked_layers();
    const Tensor& w1 = ls[0]->w();
    const Tensor& w2 = ls[1]->w();
    for (int64_t b = 0; b < 4; ++b)
        for (int64_t c = 0; c < 3; ++c) {
            double acc = 0;
            for (int64_t h = 0; h < 6; ++h) {
                double u = 0;
                for (int64_t i = 0; i < 12; ++i)
                    u += static_cast<double>(frames.array()[b * 12 + i]) * w1.at({h, i});
                const double s = u >= 1.0 ? 1.0 : 0.0;
                acc += s * w2.at({c, h});
            }
            CHECK(logits.at({b, c}) == doctest::Approx(acc).epsilon(1e-5));
        }
}

TEST_CASE("ann convnet with full masks matches a straight-line loop oracle") {
    RngStream init(17);
    ConvNetSpec spec;
    spec.in_ch = 1;
    spec.hw = 4;
    spec.classes = 2;
    spec.channels = {3};
    spec.hidden = 4;
    spec.variant = Variant::ann;
    SpikingConvNet net(spec, init);
    RngStream rng(23);
    Tensor frames = sltt::random_tensor({1, 2, 1, 4, 4}, rng);
    Tensor logits = net.forward(frames);

    std::vector<MaskedLayer*> ls = net.masked_layers();
    const Tensor& kw = ls[0]->w();   // [3,1,3,3]
    const Tensor& w1 = ls[1]->w();   // [4,12]
    const Tensor& w2 = ls[2]->w();   // [2,4]
    for (int64_t b = 0; b < 2; ++b) {
        double conv[3][4][4];
        for (int64_t o = 0; o < 3; ++o)
            for (int64_t y = 0; y < 4; ++y)
                for (int64_t x = 0; x < 4; ++x) {
                    double acc = 0;
                    for (int64_t i = 0; i < 3; ++i)
                        for (int64_t j = 0; j < 3; ++j) {
                            const int64_t yy = y - 1 + i, xx = x - 1 + j;
                            if (yy < 0 || yy >= 4 || xx < 0 || xx >= 4) continue;
                            acc += static_cast<double>(frames.at({0, b, 0, yy, xx})) *
                                   kw.at({o, 0, i, j});
                        }
                    conv[o][y][x] = std::max(0.0, acc);
                }
        double flat[12];
        for (int64_t o = 0; o < 3; ++o)
            for (int64_t y = 0; y < 2; ++y)
                for (int64_t x = 0; x < 2; ++x)
                    flat[(o * 2 + y) * 2 + x] =
                        0.25 * (conv[o][2 * y][2 * x] + conv[o][2 * y][2 * x + 1] +
                                conv[o][2 * y + 1][2 * x] + conv[o][2 * y + 1][2 * x + 1]);
        double hidden[4];
        for (int64_t h = 0; h < 4; ++h) {
            double acc = 0;
            for (int64_t i = 0; i < 12; ++i) acc += flat[i] * w1.at({h, i});
            hidden[h] = std::max(0.0, acc);
        }
        for (int64_t c = 0; c < 2; ++c) {
            double acc = 0;
            for (int64_t h = 0; h < 4; ++h) acc += hidden[h] * w2.at({c, h});
            CHECK(logits.at({b, c}) == doctest::Approx(acc).epsilon(1e-5));
        }
    }
}

TEST_CASE("non-spiking variants require T = 1") {
    RngStream init(29);
    ConvNetSpec spec;
    spec.in_ch = 1;
    spec.hw = 8;
    spec.classes = 2;
    spec.channels = {4};
    spec.variant = Variant::ann;
    SpikingConvNet net(spec, init);
    CHECK_THROWS_AS(net.forward(Tensor::zeros({2, 1, 1, 8, 8})), ContractError);
}

TEST_CASE("every variant runs forward and backward") {
    for (Variant v : {Variant::ann, Variant::bnn, Variant::bin_act_bnn, Variant::snn,
                      Variant::bin_w_snn}) {
        RngStream init(31);
        ConvNetSpec spec;
        spec.in_ch = 2;
        spec.hw = 8;
        spec.classes = 2;
        spec.channels = {4};
        spec.hidden = 8;
        spec.variant = v;
        SpikingConvNet net(spec, init);
        set_weight_training(net);
        const int64_t T = variant_spiking(v) ? 2 : 1;
        RngStream rng(37);
        Tensor frames = random_binary({T, 3, 2, 8, 8}, rng);
        Tensor logits = net.forward(frames);
        CHECK(logits.shape() == Shape{3, 2});
        backward(cross_entropy(logits, {0, 1, 0}));
        for (Tensor& p : weight_params(net)) CHECK(p.has_grad());
    }
}

TEST_CASE("sps_embed shape, silence and binarity") {
    RngStream init(41);
    SpikeformerSpec spec;
    spec.in_ch = 2;
    spec.hw = 32;
    spec.patch = 8;
    spec.embed_dim = 64;
    spec.classes = 4;
    SpikeformerToy model(spec, init);
    CHECK(model.patch_count() == 16);

    Tensor silent = model.sps_embed(Tensor::zeros({4, 2, 2, 32, 32}));
    CHECK(silent.shape() == Shape{4, 2, 16, 64});
    CHECK(silent.array().abs().sum() == 0.0f);

    RngStream rng(43);
    Tensor pat = model.sps_embed(random_binary({4, 2, 2, 32, 32}, rng));
    CHECK(pat.shape() == Shape{4, 2, 16, 64});
    CHECK(is_binary(pat));

    CHECK_THROWS_AS(model.sps_embed(Tensor::zeros({4, 2, 2, 30, 30})), DimensionError);
}

TEST_CASE("spiking attention") {
    LifParams p;
    p.lambda_decay = 0.5f;
    RngStream rng(47);
    SUBCASE("zero queries give zero output") {
        Tensor q = Tensor::zeros({2, 1, 2, 4, 8});
        Tensor k = random_binary({2, 1, 2, 4, 8}, rng);
        Tensor v = random_binary({2, 1, 2, 4, 8}, rng);
        Tensor out = spiking_attention(q, k, v, p);
        CHECK(out.array().abs().sum() == 0.0f);
    }
    SUBCASE("single-token scalar case fires at the scale value") {
        Tensor one = Tensor::ones({1, 1, 1, 1, 1});
        // dh = n = 1 so scale = 1 and U = 1 = v_th: spike
        Tensor out = spiking_attention(one, one, one, p);
        CHECK(out.item() == 1.0f);
    }
    SUBCASE("shapes preserved and outputs binary") {
        Tensor q = random_binary({3, 2, 2, 5, 4}, rng);
        Tensor k = random_binary({3, 2, 2, 5, 4}, rng);
        Tensor v = random_binary({3, 2, 2, 5, 4}, rng);
        Tensor out = spiking_attention(q, k, v, p);
        CHECK(out.shape() == Shape{3, 2, 2, 5, 4});
        CHECK(is_binary(out));
    }
    SUBCASE("non-binary inputs rejected") {
        Tensor q = Tensor::full({1, 1, 1, 2, 2}, 0.5f);
        Tensor b = Tensor::ones({1, 1, 1, 2, 2});
        CHECK_THROWS_AS(spiking_attention(q, b, b, p), ContractError);
    }
    SUBCASE("token permutation equivariance") {
        Tensor q = random_binary({2, 1, 2, 6, 4}, rng);
        Tensor k = random_binary({2, 1, 2, 6, 4}, rng);
        Tensor v = random_binary({2, 1, 2, 6, 4}, rng);
        const std::vector<int64_t> perm = {3, 0, 5, 1, 4, 2};
        Tensor base = spiking_attention(q, k, v, p);
        Tensor permuted = spiking_attention(gather_axis(q, 3, perm), gather_axis(k, 3, perm),
                                            gather_axis(v, 3, perm), p);
        Tensor expect = gather_axis(base, 3, perm);
        for (int64_t i = 0; i < expect.numel(); ++i)
            CHECK(permuted.array()[i] == expect.array()[i]);
    }
}

TEST_CASE("identity patch ticket reproduces the full forward bit-exactly") {
    RngStream init(53);
    SpikeformerSpec spec;
    spec.in_ch = 2;
    spec.hw = 16;
    spec.patch = 4;
    spec.embed_dim = 16;
    spec.heads = 2;
    spec.blocks = 2;
    spec.classes = 3;
    SpikeformerToy model(spec, init);
    RngStream rng(59);
    Tensor frames = random_binary({4, 2, 2, 16, 16}, rng);

    PatchTicket all;
    all.n_p = 16;
    all.source_pr_p = 0.0f;
    for (int64_t i = 0; i < 16; ++i) all.indices.push_back(i);
    all.scores.assign(16, 0.0f);

    Tensor with = model.forward_with_ticket(frames, &all);
    Tensor without = model.forward(frames);
    for (int64_t i = 0; i < with.numel(); ++i) CHECK(with.array()[i] == without.array()[i]);

    SUBCASE("subset ticket runs and out-of-range indices are rejected") {
        PatchTicket sub;
        sub.n_p = 16;
        sub.source_pr_p = 0.5f;
        sub.indices = {0, 3, 5, 7, 8, 9, 12, 15};
        sub.scores.assign(16, 0.0f);
        Tensor logits = model.forward_with_ticket(frames, &sub);
        CHECK(logits.shape() == Shape{2, 3});

        PatchTicket bad = sub;
        bad.indices.back() = 16;
        CHECK_THROWS_AS(model.forward_with_ticket(frames, &bad), IndexError);
    }
}

TEST_CASE("score gradients reach every masked layer within a 10-batch probe") {
    SUBCASE("convnet") {
        RngStream init(61);
        ConvNetSpec spec;
        spec.in_ch = 2;
        spec.hw = 8;
        spec.classes = 4;
        spec.channels = {8, 16};
        spec.hidden = 16;
        SpikingConvNet net(spec, init);
        set_score_training(net);
        for (MaskedLayer* l : net.masked_layers()) {
            l->set_prune_rate(0.5f);
            l->project_topk();
            l->gain_update();
        }
        Dataset ds = gen_synthetic_dvs(4, 40, 8, 4, 67);
        BatchIter it(ds, 4, 71, 4);
        Tensor frames;
        std::vector<int> labels;
        std::vector<bool> touched(net.masked_layers().size(), false);
        int batches = 0;
        while (it.next(frames, labels) && batches < 10) {
            for (MaskedLayer* l : net.masked_layers()) l->s().zero_grad();
            backward(cross_entropy(net.forward(frames), labels));
            auto layers = net.masked_layers();
            for (size_t i = 0; i < layers.size(); ++i)
                if (layers[i]->s().grad_array().abs().sum() > 0.0f) touched[i] = true;
            ++batches;
        }
        for (size_t i = 0; i < touched.size(); ++i) CHECK(touched[i]);
    }
    SUBCASE("spikeformer") {
        RngStream init(73);
        SpikeformerSpec spec;
        spec.in_ch = 2;
        spec.hw = 8;
        spec.patch = 2;
        spec.embed_dim = 16;
        spec.heads = 2;
        spec.blocks = 1;
        spec.classes = 4;
        SpikeformerToy model(spec, init);
        set_score_training(model);
        for (MaskedLayer* l : model.masked_layers()) {
            l->set_prune_rate(0.3f);
            l->project_topk();
            l->gain_update();
        }
        Dataset ds = gen_synthetic_dvs(4, 40, 8, 4, 79);
        BatchIter it(ds, 4, 83, 4);
        Tensor frames;
        std::vector<int> labels;
        std::vector<bool> touched(model.masked_layers().size(), false);
        int batches = 0;
        while (it.next(frames, labels) && batches < 10) {
            for (MaskedLayer* l : model.masked_layers()) l->s().zero_grad();
            backward(cross_entropy(model.forward(frames), labels));
            auto layers = model.masked_layers();
            for (size_t i = 0; i < layers.size(); ++i)
                if (layers[i]->s().grad_array().abs().sum() > 0.0f) touched[i] = true;
            ++batches;
        }
        for (size_t i = 0; i < touched.size(); ++i) CHECK(touched[i]);
    }
}

TEST_CASE("telemetry counts spikes during spiking forwards") {
    RngStream init(89);
    ConvNetSpec spec;
    spec.in_ch = 2;
    spec.hw = 8;
    spec.classes = 2;
    spec.channels = {4};
    spec.hidden = 8;
    SpikingConvNet net(spec, init);
    RngStream rng(97);
    Telemetry tel;
    net.forward(random_binary({4, 2, 2, 8, 8}, rng), &tel);
    CHECK(tel.spike_slots > 0.0);
    CHECK(tel.spikes >= 0.0);
    CHECK(tel.synops >= 0.0);
}

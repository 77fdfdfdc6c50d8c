#include "slt/tickets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "slt/ops.hpp"

namespace slt {

void PatchTicket::validate(int64_t expected_n_p) const {
    if (indices.empty()) throw DegenerateMaskError("patch ticket: empty index set");
    if (n_p != expected_n_p)
        throw IndexError("patch ticket: built for " + std::to_string(n_p) + " patches, model has " +
                         std::to_string(expected_n_p));
    for (size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= expected_n_p)
            throw IndexError("patch ticket: index " + std::to_string(indices[i]) + " out of range");
        if (i > 0 && indices[i] <= indices[i - 1])
            throw IndexError("patch ticket: indices must be strictly increasing");
    }
}

std::string report_to_json(const TicketReport& r) {
    nlohmann::json j;
    j["mode"] = r.mode;
    j["sparsity_conn"] = r.sparsity_conn;
    j["sparsity_patch"] = r.sparsity_patch;
    j["acc_before"] = r.acc_before;
    j["acc_after"] = r.acc_after;
    j["spike_rate"] = r.spike_rate;
    j["synops_per_sample"] = r.synops_per_sample;
    j["seed"] = r.seed;
    j["epochs"] = {{"conn", r.epochs_conn}, {"warmup", r.epochs_warmup}, {"train", r.epochs_train}};
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerSparsityRow& l : r.layers) {
        layers.push_back({{"name", l.name},
                          {"numel", l.numel},
                          {"active", l.active},
                          {"sparsity", 1.0 - static_cast<double>(l.active) / static_cast<double>(l.numel)}});
    }
    j["layers"] = layers;
    return j.dump(2);
}

double sparsity_over(const std::vector<MaskedLayer*>& layers) {
    int64_t total = 0, active = 0;
    for (const MaskedLayer* l : layers) {
        total += l->numel();
        active += l->active_count();
    }
    return total > 0 ? 1.0 - static_cast<double>(active) / static_cast<double>(total) : 0.0;
}

std::vector<LayerSparsityRow> layer_rows(const std::vector<MaskedLayer*>& layers) {
    std::vector<LayerSparsityRow> rows;
    rows.reserve(layers.size());
    for (const MaskedLayer* l : layers) rows.push_back({l->name(), l->numel(), l->active_count()});
    return rows;
}

EvalResult evaluate(Model& model, const Dataset& ds, int64_t model_timesteps, int64_t batch,
                    const PatchTicket* ticket) {
    if (ds.size() == 0) throw ContractError("evaluate: empty split");
    auto* former = dynamic_cast<SpikeformerToy*>(&model);
    if (ticket && !former) throw ContractError("evaluate: patch ticket on a non-transformer model");
    NoGradGuard ng;
    Telemetry tel;
    BatchIter it(ds, batch, 0, model_timesteps, /*shuffle=*/false);
    Tensor frames;
    std::vector<int> labels;
    int64_t correct = 0;
    double loss_acc = 0.0;
    while (it.next(frames, labels)) {
        Tensor logits = ticket ? former->forward_with_ticket(frames, ticket, &tel)
                               : model.forward(frames, &tel);
        loss_acc += static_cast<double>(cross_entropy(logits, labels).item()) *
                    static_cast<double>(labels.size());
        const std::vector<int> pred = argmax_rows(logits);
        for (size_t i = 0; i < labels.size(); ++i)
            if (pred[i] == labels[i]) ++correct;
    }
    EvalResult r;
    const double n = static_cast<double>(ds.size());
    r.accuracy = static_cast<double>(correct) / n;
    r.loss = loss_acc / n;
    r.spike_rate = tel.spike_rate();
    r.synops_total = tel.synops;
    r.synops_per_sample = tel.synops / n;
    return r;
}

namespace {

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

EpochStats run_train_epoch(Model& model, const Dataset& train, Optimizer& optim,
                           const TrainOptions& opt, int epoch, const PatchTicket* ticket) {
    auto* former = dynamic_cast<SpikeformerToy*>(&model);
    if (ticket && !former) throw ContractError("train: patch ticket on a non-transformer model");
    BatchIter it(train, opt.batch, derive_seed(opt.shuffle_seed, "epoch" + std::to_string(epoch)),
                 opt.model_timesteps);
    Tensor frames;
    std::vector<int> labels;
    double loss_acc = 0.0;
    int64_t correct = 0;
    while (it.next(frames, labels)) {
        Tensor logits = ticket ? former->forward_with_ticket(frames, ticket, nullptr)
                               : model.forward(frames, nullptr);
        Tensor loss = cross_entropy(logits, labels);
        optim.zero_grad();
        backward(loss);
        optim.step();
        loss_acc += static_cast<double>(loss.item()) * static_cast<double>(labels.size());
        const std::vector<int> pred = argmax_rows(logits);
        for (size_t i = 0; i < labels.size(); ++i)
            if (pred[i] == labels[i]) ++correct;
    }
    const double n = static_cast<double>(train.size());
    return {loss_acc / n, static_cast<double>(correct) / n};
}

}  // namespace

void calibrate_layer_scales(Model& model, const Tensor& probe_frames, float target_std) {
    NoGradGuard ng;
    for (MaskedLayer* layer : model.masked_layers()) {
        std::map<std::string, LayerStats> stats;
        Telemetry tel;
        tel.layer_stats = &stats;
        model.forward(probe_frames, &tel);
        const double sd = stats[layer->name()].stddev();
        if (sd < 1e-9) continue;  // upstream silent; later layers fix it first
        const float r = target_std / static_cast<float>(sd);
        // full-precision frozen output goes as w^2 (gain term tracks |w|);
        // sign-binarized weights respond only through the gain, so linearly
        const bool quadratic =
            layer->weight_frozen() && layer->mode() == WeightMode::full_precision;
        const float c = quadratic ? std::sqrt(r) : r;
        layer->w().mutable_array() *= c;
        if (layer->weight_frozen()) layer->gain_update();
    }
}

void prepare_score_search(Model& model, const Dataset& train, float pr_c, int64_t batch,
                          int64_t model_timesteps) {
    set_score_training(model);
    for (MaskedLayer* l : model.masked_layers()) {
        l->set_prune_rate(pr_c);
        l->project_topk();
        l->gain_update();
    }
    BatchIter it(train, batch, 0, model_timesteps, /*shuffle=*/false);
    Tensor frames;
    std::vector<int> labels;
    if (it.next(frames, labels)) calibrate_layer_scales(model, frames);
}

void train_weights(Model& model, const Dataset& train, const TrainOptions& opt,
                   const PatchTicket* ticket) {
    std::vector<Tensor> params = weight_params(model);
    if (params.empty()) throw ContractError("train_weights: nothing is unfrozen");
    Optimizer optim(opt.optim, params);
    for (int e = 1; e <= opt.epochs; ++e) {
        EpochStats st = run_train_epoch(model, train, optim, opt, e, ticket);
        if (opt.on_epoch) opt.on_epoch(e, st.loss, st.accuracy);
    }
}

TicketReport find_connection_tickets(Model& model, const Dataset& train, const Dataset& test,
                                     float pr_c, const TrainOptions& opt) {
    if (!(pr_c >= 0.0f && pr_c < 1.0f))
        throw ContractError("find_connection_tickets: pr_c must lie in [0, 1)");
    std::vector<MaskedLayer*> layers = model.masked_layers();
    for (MaskedLayer* l : layers) {
        if (!l->weight_frozen())
            throw ContractError("find_connection_tickets: layer " + l->name() +
                                " has trainable weights");
        l->s().set_requires_grad(true);
        l->set_prune_rate(pr_c);
        l->project_topk();
        l->gain_update();
    }
    std::vector<uint64_t> hashes;
    for (MaskedLayer* l : layers) hashes.push_back(l->weight_hash());

    TicketReport report;
    report.mode = "conn";
    report.epochs_conn = opt.epochs;
    report.acc_before = evaluate(model, test, opt.model_timesteps, opt.batch).accuracy;

    Optimizer optim(opt.optim, score_params(model));
    for (int e = 1; e <= opt.epochs; ++e) {
        // cosine decay quiets mask churn in the late epochs
        optim.set_lr(opt.optim.lr * 0.5f *
                     (1.0f + std::cos(3.14159265f * static_cast<float>(e - 1) /
                                      static_cast<float>(std::max(1, opt.epochs)))));
        EpochStats st = run_train_epoch(model, train, optim, opt, e, nullptr);
        for (MaskedLayer* l : layers) {
            l->project_topk();
            l->gain_update();
        }
        if (opt.on_epoch) opt.on_epoch(e, st.loss, st.accuracy);
    }

    for (size_t i = 0; i < layers.size(); ++i)
        if (layers[i]->weight_hash() != hashes[i])
            throw ContractError("find_connection_tickets: weights of " + layers[i]->name() +
                                " changed during the search");

    EvalResult ev = evaluate(model, test, opt.model_timesteps, opt.batch);
    report.acc_after = ev.accuracy;
    report.spike_rate = ev.spike_rate;
    report.synops_per_sample = ev.synops_per_sample;
    report.layers = layer_rows(layers);
    report.sparsity_conn = sparsity_over(layers);
    return report;
}

// --- probe head -------------------------------------------------------------

CpmProbeModel::CpmProbeModel(SpikeformerToy& owner, RngStream& init) : owner_(&owner) {
    const SpikeformerSpec& s = owner.spec();
    head_ = MaskedLayer::make_linear("probe_head", s.classes, owner.patch_count() * s.embed_dim,
                                     init);
    head_.set_inert();
}

Tensor CpmProbeModel::forward(const Tensor& frames, Telemetry* tel) {
    Tensor pat = owner_->sps_embed(frames, tel);  // [T,B,n_p,d]
    const int64_t T = pat.dim(0), B = pat.dim(1);
    Tensor flat = reshape(pat, {T, B, pat.numel() / (T * B)});
    return mean_axis(head_.forward(flat, tel), 0);
}

std::vector<MaskedLayer*> CpmProbeModel::masked_layers() {
    std::vector<MaskedLayer*> out = owner_->cpm_layers();
    out.push_back(&head_);
    return out;
}

int CpmProbeModel::num_classes() const { return owner_->num_classes(); }

std::unique_ptr<CpmProbeModel> attach_probe_head(SpikeformerToy& model, RngStream& init) {
    if (model.probe_attached()) throw ContractError("attach_probe_head: probe already attached");
    auto probe = std::make_unique<CpmProbeModel>(model, init);
    model.set_probe_attached(true);
    return probe;
}

void detach_probe_head(SpikeformerToy& model, std::unique_ptr<CpmProbeModel> probe) {
    if (!model.probe_attached()) throw ContractError("detach_probe_head: no probe attached");
    model.set_probe_attached(false);
    probe.reset();  // head and its scores are discarded; CPM masks/alpha stay
}

// --- patch tickets ----------------------------------------------------------

PatchTicket score_patches(SpikeformerToy& model, const Dataset& ds, float pr_p,
                          int64_t model_timesteps, int64_t batch) {
    if (!(pr_p >= 0.0f && pr_p < 1.0f)) throw ContractError("patch selection: pr_p must lie in [0, 1)");
    const int64_t n_p = model.patch_count();
    const int64_t keep = n_p - static_cast<int64_t>(
                                   std::ceil(static_cast<double>(pr_p) * static_cast<double>(n_p)));
    if (keep <= 0) throw DegenerateMaskError("patch selection: ticket would be empty");

    std::vector<double> saliency(static_cast<size_t>(n_p), 0.0);
    int64_t samples = 0;
    {
        NoGradGuard ng;
        BatchIter it(ds, batch, 0, model_timesteps, /*shuffle=*/false);
        Tensor frames;
        std::vector<int> labels;
        while (it.next(frames, labels)) {
            Tensor y = model.first_block_output(frames);  // [T,B,n_p,d]
            const int64_t T = y.dim(0), B = y.dim(1), d = y.dim(3);
            const float* yd = y.array().data();
            for (int64_t t = 0; t < T; ++t)
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t p = 0; p < n_p; ++p) {
                        double sq = 0.0;
                        const float* row = yd + ((t * B + b) * n_p + p) * d;
                        for (int64_t i = 0; i < d; ++i)
                            sq += static_cast<double>(row[i]) * static_cast<double>(row[i]);
                        saliency[static_cast<size_t>(p)] += std::sqrt(sq);
                    }
            samples += static_cast<int64_t>(labels.size()) * y.dim(0);
        }
    }
    for (double& s : saliency) s /= static_cast<double>(samples);

    std::vector<int64_t> order(static_cast<size_t>(n_p));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        if (saliency[static_cast<size_t>(a)] != saliency[static_cast<size_t>(b)])
            return saliency[static_cast<size_t>(a)] > saliency[static_cast<size_t>(b)];
        return a < b;
    });
    PatchTicket ticket;
    ticket.n_p = n_p;
    ticket.source_pr_p = pr_p;
    ticket.indices.assign(order.begin(), order.begin() + keep);
    std::sort(ticket.indices.begin(), ticket.indices.end());
    ticket.scores.resize(static_cast<size_t>(n_p));
    for (int64_t p = 0; p < n_p; ++p)
        ticket.scores[static_cast<size_t>(p)] = static_cast<float>(saliency[static_cast<size_t>(p)]);
    ticket.validate(n_p);
    return ticket;
}

PatchTicket select_patch_tickets(SpikeformerToy& model, const Dataset& train, float pr_p,
                                 int warmup_epochs, const TrainOptions& opt) {
    TrainOptions warm = opt;
    warm.epochs = warmup_epochs;
    if (warmup_epochs > 0) train_weights(model, train, warm);
    return score_patches(model, train, pr_p, opt.model_timesteps, opt.batch);
}

// --- combined pipeline ------------------------------------------------------

EcptResult run_ecpt(SpikeformerToy& model, const Dataset& train, const Dataset& test,
                    const EcptOptions& opt) {
    if (!(opt.pr_c >= 0.0f && opt.pr_c < 1.0f) || !(opt.pr_p >= 0.0f && opt.pr_p < 1.0f))
        throw ContractError("run_ecpt: rates must lie in [0, 1)");

    TicketReport report;
    report.mode = "ecpt";
    report.epochs_conn = opt.epochs_conn;
    report.epochs_warmup = opt.epochs_warmup;
    report.epochs_train = opt.epochs_train;

    set_inert(model);
    report.acc_before =
        evaluate(model, test, opt.dense.model_timesteps, opt.dense.batch).accuracy;

    // Phase 1: connection tickets inside the CPM, under a throwaway head.
    {
        RngStream probe_init(derive_seed(opt.init_seed, "probe_head"));
        auto probe = attach_probe_head(model, probe_init);
        prepare_score_search(*probe, train, opt.pr_c, opt.conn.batch, opt.conn.model_timesteps);
        find_connection_tickets(*probe, train, test, opt.pr_c, [&] {
            TrainOptions t = opt.conn;
            t.epochs = opt.epochs_conn;
            return t;
        }());
        detach_probe_head(model, std::move(probe));
    }
    for (MaskedLayer* l : model.cpm_layers()) l->set_inert();
    std::vector<uint64_t> cpm_w_hash, cpm_m_hash;
    for (MaskedLayer* l : model.cpm_layers()) {
        cpm_w_hash.push_back(l->weight_hash());
        cpm_m_hash.push_back(hash_bytes(l->m().array().data(),
                                        static_cast<size_t>(l->m().numel()) * sizeof(float)));
    }

    // Phase 2: warm up encoders/head with all patches, then pick the ticket.
    for (MaskedLayer* l : model.encoder_layers()) l->set_frozen(false);
    model.pos_embed().set_requires_grad(true);
    PatchTicket ticket = select_patch_tickets(model, train, opt.pr_p, opt.epochs_warmup, opt.dense);
    if (opt.on_ticket) opt.on_ticket(ticket);

    // Phase 3: train encoders/head on the retained patches only.
    if (opt.epochs_train > 0) {
        TrainOptions t = opt.dense;
        t.epochs = opt.epochs_train;
        t.shuffle_seed = derive_seed(opt.dense.shuffle_seed, "phase3");
        train_weights(model, train, t, &ticket);
    }

    for (size_t i = 0; i < model.cpm_layers().size(); ++i) {
        MaskedLayer* l = model.cpm_layers()[i];
        if (l->weight_hash() != cpm_w_hash[i] ||
            hash_bytes(l->m().array().data(),
                       static_cast<size_t>(l->m().numel()) * sizeof(float)) != cpm_m_hash[i])
            throw ContractError("run_ecpt: CPM state changed after phase 1 (" + l->name() + ")");
    }

    EvalResult ev = evaluate(model, test, opt.dense.model_timesteps, opt.dense.batch, &ticket);
    report.acc_after = ev.accuracy;
    report.spike_rate = ev.spike_rate;
    report.synops_per_sample = ev.synops_per_sample;
    report.layers = layer_rows(model.masked_layers());
    report.sparsity_conn = sparsity_over(model.cpm_layers());
    report.sparsity_patch =
        1.0 - static_cast<double>(ticket.indices.size()) / static_cast<double>(ticket.n_p);
    return {report, ticket};
}

}  // namespace slt

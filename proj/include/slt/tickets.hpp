#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "slt/data.hpp"
#include "slt/models.hpp"
#include "slt/optim.hpp"

namespace slt {

// Retained patch indices with the saliency that selected them.
struct PatchTicket {
    std::vector<int64_t> indices;  // strictly increasing, all < n_p
    std::vector<float> scores;     // per original patch
    float source_pr_p = 0.0f;
    int64_t n_p = 0;

    void validate(int64_t expected_n_p) const;
};

struct LayerSparsityRow {
    std::string name;
    int64_t numel = 0;
    int64_t active = 0;
};

struct TicketReport {
    std::string mode = "none";
    std::vector<LayerSparsityRow> layers;
    double sparsity_conn = 0.0;
    double sparsity_patch = 0.0;
    double acc_before = 0.0;
    double acc_after = 0.0;
    double spike_rate = 0.0;
    double synops_per_sample = 0.0;
    uint64_t seed = 0;
    int epochs_conn = 0;
    int epochs_warmup = 0;
    int epochs_train = 0;
};

std::string report_to_json(const TicketReport& r);

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
    double spike_rate = 0.0;
    double synops_total = 0.0;
    double synops_per_sample = 0.0;
};

// Deterministic pass over a held-out split (fixed order, no tape).
EvalResult evaluate(Model& model, const Dataset& ds, int64_t model_timesteps, int64_t batch,
                    const PatchTicket* ticket = nullptr);

struct TrainOptions {
    OptimConfig optim;
    int epochs = 1;
    int64_t batch = 32;
    int64_t model_timesteps = 4;
    uint64_t shuffle_seed = 1;
    // Called after each epoch with mean train loss and train accuracy.
    std::function<void(int epoch, double loss, double train_acc)> on_epoch;
};

// Plain weight training of whatever is currently unfrozen.
void train_weights(Model& model, const Dataset& train, const TrainOptions& opt,
                   const PatchTicket* ticket = nullptr);

// One-shot per-layer rescale of the frozen weights so every masked layer's
// raw output has roughly unit spread on a probe batch. Label-free and
// deterministic; stands in for the normalization layers the full-scale
// models rely on. Layers are fixed in order, upstream first.
void calibrate_layer_scales(Model& model, const Tensor& probe_frames, float target_std = 1.0f);

// Search initialization: score-training mode, prune rate + projection + gain
// on every layer, then scale calibration on the first batch of `train`.
void prepare_score_search(Model& model, const Dataset& train, float pr_c, int64_t batch,
                          int64_t model_timesteps);

// Edge-popup style search: frozen weights, per-batch score updates, per-epoch
// top-k projection and gain refresh. Throws if any layer is not frozen;
// verifies weights by hash afterwards.
TicketReport find_connection_tickets(Model& model, const Dataset& train, const Dataset& test,
                                     float pr_c, const TrainOptions& opt);

// Temporary classifier over the patch embedding, for searching the CPM in
// isolation. The probe's layers join the score search and are dropped whole.
class CpmProbeModel : public Model {
  public:
    CpmProbeModel(SpikeformerToy& owner, RngStream& init);
    Tensor forward(const Tensor& frames, Telemetry* tel = nullptr) override;
    std::vector<MaskedLayer*> masked_layers() override;
    int num_classes() const override;
    std::string arch() const override { return "cpm_probe"; }
    MaskedLayer& head() { return head_; }

  private:
    SpikeformerToy* owner_;
    MaskedLayer head_;
};

std::unique_ptr<CpmProbeModel> attach_probe_head(SpikeformerToy& model, RngStream& init);
void detach_probe_head(SpikeformerToy& model, std::unique_ptr<CpmProbeModel> probe);

// Warm-up training with all patches, then per-patch saliency as the mean L2
// norm of the first encoder block's output at that token; keeps the top
// n_p - ceil(pr_p * n_p) patches.
PatchTicket select_patch_tickets(SpikeformerToy& model, const Dataset& train, float pr_p,
                                 int warmup_epochs, const TrainOptions& opt);

// Saliency/selection only (no warm-up), for callers that trained already.
PatchTicket score_patches(SpikeformerToy& model, const Dataset& ds, float pr_p,
                          int64_t model_timesteps, int64_t batch);

struct EcptOptions {
    float pr_c = 0.5f;
    float pr_p = 0.3f;
    int epochs_conn = 30;
    int epochs_warmup = 10;
    int epochs_train = 10;
    TrainOptions conn;    // optimizer/batch settings for the score search
    TrainOptions dense;   // optimizer/batch settings for weight phases
    uint64_t init_seed = 1;
    // Invoked as soon as the patch ticket is selected (before phase 3).
    std::function<void(const PatchTicket&)> on_ticket;
};

struct EcptResult {
    TicketReport report;
    PatchTicket ticket;
};

// Phase 1: probe head + connection search confined to the CPM.
// Phase 2: CPM locked; encoder/head warm-up and patch selection.
// Phase 3: encoder/head training on the ticket patches, final evaluation.
EcptResult run_ecpt(SpikeformerToy& model, const Dataset& train, const Dataset& test,
                    const EcptOptions& opt);

double sparsity_over(const std::vector<MaskedLayer*>& layers);
std::vector<LayerSparsityRow> layer_rows(const std::vector<MaskedLayer*>& layers);

}  // namespace slt

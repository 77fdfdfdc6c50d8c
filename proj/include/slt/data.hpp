#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slt/rng.hpp"
#include "slt/tensor.hpp"

namespace slt {

// Immutable sample store: frames[N, T, C, H, W] plus integer labels.
// Regeneration from (descriptor, seed) is bit-identical.
struct Dataset {
    Tensor frames;
    std::vector<int> labels;
    int classes = 0;
    uint64_t seed = 0;
    std::string descriptor;
    std::string split;  // "train" or "test"

    int64_t size() const { return frames.defined() ? frames.dim(0) : 0; }
    int64_t timesteps() const { return frames.dim(1); }
    int64_t channels() const { return frames.dim(2); }
    int64_t height() const { return frames.dim(3); }
    int64_t width() const { return frames.dim(4); }
};

struct Event {
    int64_t t_us;
    int x;
    int y;
    int polarity;  // 0 = OFF, 1 = ON
};

struct EventStream {
    std::vector<Event> events;  // timestamps non-decreasing
    int width = 0;
    int height = 0;
};

// Class-colored Gaussian blob at a class-specific grid location plus
// i.i.d. pixel noise of the given sigma; T = 1, C = 3.
Dataset gen_synthetic_rgb(int classes, int64_t n, int hw, uint64_t seed, float noise_sigma = 0.2f,
                          const std::string& split = "train");

// Bright bar sweeping in a class-specific direction, rendered to ON/OFF
// difference frames; C = 2, values in {0, 1}. signal_quadrant in [0, 3]
// confines the bar to one quadrant; -1 uses the full field.
Dataset gen_synthetic_dvs(int classes, int64_t n, int hw, int timesteps, uint64_t seed,
                          float noise_p = 0.01f, int signal_quadrant = -1,
                          const std::string& split = "train");

// One moving-bar sample as raw events; speed 0 renders a static (hence
// silent) scene. Angle in radians.
EventStream render_moving_bar(int hw, int timesteps, float angle, float speed_scale,
                              float perp_offset, float phase, float noise_p, RngStream& rng,
                              int quadrant = -1);

// OR-accumulation into T equal time bins over [0, t_max + 1): [T, 2, H, W].
Tensor bin_events(const EventStream& stream, int timesteps, int hw);

// IDX (MNIST layout) ingestion; pixels scaled to [0, 1], T = 1, C = 1.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, const std::string& split = "train");

// Deterministic shuffled minibatches; emits time-major frames [T, b, C, H, W]
// with static (T=1) data replicated to model_timesteps. The last partial
// batch is included. Two iterators with the same seed agree.
class BatchIter {
  public:
    BatchIter(const Dataset& ds, int64_t batch, uint64_t shuffle_seed, int64_t model_timesteps,
              bool shuffle = true);

    bool next(Tensor& frames, std::vector<int>& labels);
    void reset();
    int64_t batches() const;

  private:
    const Dataset* ds_;
    int64_t batch_;
    uint64_t seed_;
    int64_t model_t_;
    bool shuffle_;
    std::vector<int64_t> order_;
    int64_t cursor_ = 0;
};

// Internal tensor container (magic "SLTK"): version, dtype, dims, row-major
// little-endian f32 payload.
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// In-memory forms used by the checkpoint container.
void encode_tensor(std::vector<unsigned char>& out, const Tensor& t);
Tensor decode_tensor(const unsigned char* data, size_t len, size_t& consumed);

uint64_t dataset_hash(const Dataset& ds);

}  // namespace slt

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace slt {

// Seed derivation and distributions are spelled out by hand so that streams
// are bit-identical across standard libraries (std distributions are
// implementation-defined; the mt19937_64 engine itself is not).

uint64_t splitmix64(uint64_t& state);

// Derives an independent stream seed from a master seed and a label such as
// "data.train" or "init.model".
uint64_t derive_seed(uint64_t master, std::string_view label);

class RngStream {
  public:
    RngStream() : eng_(0) {}
    explicit RngStream(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    float uniform(float lo, float hi) {
        return lo + static_cast<float>(next_double()) * (hi - lo);
    }

    // Unbiased integer in [0, n) via rejection.
    int64_t below(int64_t n);

    // Box-Muller, two engine draws per sample, no cached spare.
    float normal(float mean = 0.0f, float stddev = 1.0f);

    // Serialized engine state (decimal text per the standard's stream form).
    std::string state() const;
    void set_state(const std::string& s);

  private:
    std::mt19937_64 eng_;
};

// In-place Fisher-Yates with RngStream::below; deterministic everywhere.
void shuffle_indices(std::vector<int64_t>& v, RngStream& rng);

}  // namespace slt

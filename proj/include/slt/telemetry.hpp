#pragma once
#include <cmath>

#include <cstdint>
#include <map>
#include <string>

namespace slt {

struct LayerStats {
    double sum = 0.0;
    double sumsq = 0.0;
    int64_t count = 0;

    double mean() const { return count > 0 ? sum / static_cast<double>(count) : 0.0; }
    double stddev() const {
        if (count == 0) return 0.0;
        const double m = mean();
        const double v = sumsq / static_cast<double>(count) - m * m;
        return v > 0.0 ? std::sqrt(v) : 0.0;
    }
};

// Accumulates spike counts and synaptic-accumulate counts across a forward
// pass; handed down through model forwards during evaluation. When
// layer_stats is set, masked layers also record their raw output statistics.
struct Telemetry {
    double spikes = 0.0;
    double spike_slots = 0.0;  // neurons x timesteps x samples
    double synops = 0.0;
    std::map<std::string, LayerStats>* layer_stats = nullptr;

    void reset() { spikes = spike_slots = synops = 0.0; }
    double spike_rate() const { return spike_slots > 0.0 ? spikes / spike_slots : 0.0; }
};

}  // namespace slt

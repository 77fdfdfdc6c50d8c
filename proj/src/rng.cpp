#include "slt/rng.hpp"

#include <cmath>
#include <sstream>

namespace slt {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t derive_seed(uint64_t master, std::string_view label) {
    // FNV-1a over the label, mixed with the master through splitmix64.
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    uint64_t state = master ^ h;
    uint64_t a = splitmix64(state);
    uint64_t b = splitmix64(state);
    return a ^ (b << 1);
}

int64_t RngStream::below(int64_t n) {
    if (n <= 0) return 0;
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = eng_();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
}

float RngStream::normal(float mean, float stddev) {
    // Guard against log(0).
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double z = r * std::cos(2.0 * 3.14159265358979323846 * u2);
    return mean + stddev * static_cast<float>(z);
}

std::string RngStream::state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
}

void RngStream::set_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
}

void shuffle_indices(std::vector<int64_t>& v, RngStream& rng) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
        const int64_t j = rng.below(i + 1);
        std::swap(v[i], v[j]);
    }
}

}  // namespace slt

#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace ganpr {

// Deterministic, serializable RNG. xoshiro256++ seeded through splitmix64.
// std::* distributions are implementation-defined, so uniform/normal are
// generated here to keep runs reproducible across compilers.
class Rng {
public:
    Rng() : Rng(0x9e3779b97f4a7c15ULL) {}

    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
        have_spare_ = false;
        spare_ = 0.0;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0,1)
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // standard normal via Box-Muller with a cached spare
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::array<uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<uint64_t, 4>& s) {
        state_ = s;
        have_spare_ = false;
        spare_ = 0.0;
    }

    // Independent stream for (seed, tag) pairs; used for per-epoch shuffles
    // and per-frame synthesis so streams never depend on consumption order.
    static Rng stream(uint64_t seed, uint64_t tag_a, uint64_t tag_b = 0) {
        uint64_t x = seed;
        uint64_t h = splitmix64(x);
        x = h ^ (tag_a + 0x9e3779b97f4a7c15ULL);
        h = splitmix64(x);
        x = h ^ (tag_b + 0xbf58476d1ce4e5b9ULL);
        Rng r;
        r.reseed(splitmix64(x));
        return r;
    }

private:
    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::array<uint64_t, 4> state_{};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ganpr

#pragma once

#include <cmath>
#include <cstdint>

namespace gdt {

// Counter-free splitmix64 generator. One u64 of state, trivially serializable,
// identical output on every platform (stdlib distributions are not).
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
        return scramble(z + 0x9E3779B97F4A7C15ull);
    }

    // Independent child stream; does not advance this generator.
    Rng fork(uint64_t stream_id) const { return Rng(mix(state_, stream_id)); }

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return scramble(state_);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Modulo bias is irrelevant at our n.
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller. Two uniforms per draw, no cached spare,
    // so the state stays a single u64.
    double normal() {
        double u1 = uniform();
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    template <typename T>
    void fill_normal(T* p, size_t count, double stddev = 1.0) {
        for (size_t i = 0; i < count; ++i) p[i] = static_cast<T>(normal() * stddev);
    }

    // Normal truncated to +-2 stddev (resample outside).
    template <typename T>
    void fill_trunc_normal(T* p, size_t count, double stddev) {
        for (size_t i = 0; i < count; ++i) {
            double z = normal();
            while (std::fabs(z) > 2.0) z = normal();
            p[i] = static_cast<T>(z * stddev);
        }
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

private:
    static uint64_t scramble(uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    uint64_t state_;
};

}  // namespace gdt

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace lwq {

// SplitMix64 stream generator. Fixed in-repo so that seeded experiments
// (random layer orderings, weight init) reproduce bit-for-bit on every
// platform. Constants are the standard SplitMix64 ones.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 significant bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Box-Muller; draws two uniforms per pair of normals.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        // Guard log(0).
        while (u1 <= 0.0) u1 = next_uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Index below `n`, by multiplication to avoid modulo bias structure
    // being platform-dependent (it is deterministic either way).
    uint64_t next_below(uint64_t n) {
        // 128-bit multiply-shift range reduction.
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<uint64_t>(m >> 64);
    }

    // Derive an independent worker stream.
    Rng derive(uint64_t index) const { return Rng(state_ ^ (0xA0761D6478BD642FULL * (index + 1))); }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace lwq

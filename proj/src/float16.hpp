// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>

namespace lwq {

// IEEE 754 binary16 <-> binary32 conversion, round-to-nearest-even on the
// way down. Bit-exact and branch-predictable; no F16C dependency.

inline uint16_t f32_to_f16_bits(float f) {
    uint32_t x;
    std::memcpy(&x, &f, 4);
    uint32_t sign = (x >> 16) & 0x8000u;
    uint32_t mag = x & 0x7FFFFFFFu;

    if (mag >= 0x7F800000u) {
        // Inf / NaN; keep a quiet NaN payload bit.
        uint32_t mant = (mag > 0x7F800000u) ? 0x0200u : 0;
        return static_cast<uint16_t>(sign | 0x7C00u | mant | ((mag >> 13) & 0x03FFu));
    }
    if (mag >= 0x477FF000u) {
        // Overflows to infinity after rounding.
        return static_cast<uint16_t>(sign | 0x7C00u);
    }
    if (mag < 0x38800000u) {
        // Subnormal half (or zero): shift with sticky rounding.
        if (mag < 0x33000001u) return static_cast<uint16_t>(sign); // rounds to zero
        int exp = static_cast<int>(mag >> 23);
        int shift = 126 - exp; // in [14, 24] given the guards above
        uint32_t m = (mag & 0x007FFFFFu) | 0x00800000u;
        uint32_t rounded = m >> shift;
        uint32_t rem = m & ((1u << shift) - 1);
        uint32_t half = 1u << (shift - 1);
        if (rem > half || (rem == half && (rounded & 1u))) rounded++;
        return static_cast<uint16_t>(sign | rounded);
    }
    // Normal path.
    uint32_t rounded = mag + 0x00000FFFu + ((mag >> 13) & 1u);
    return static_cast<uint16_t>(sign | ((rounded - 0x38000000u) >> 13));
}

inline float f16_bits_to_f32(uint16_t h) {
    uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
    uint32_t exp = (h >> 10) & 0x1Fu;
    uint32_t mant = h & 0x03FFu;
    uint32_t x;
    if (exp == 0) {
        if (mant == 0) {
            x = sign;
        } else {
            // Subnormal: normalize.
            int e = -1;
            do {
                mant <<= 1;
                e++;
            } while ((mant & 0x0400u) == 0);
            x = sign | ((112 - e) << 23) | ((mant & 0x03FFu) << 13);
        }
    } else if (exp == 31) {
        x = sign | 0x7F800000u | (mant << 13);
    } else {
        x = sign | ((exp + 112) << 23) | (mant << 13);
    }
    float f;
    std::memcpy(&f, &x, 4);
    return f;
}

inline float f16_round(float f) { return f16_bits_to_f32(f32_to_f16_bits(f)); }

} // namespace lwq

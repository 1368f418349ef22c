// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "matforge/core/vec.h"

namespace matforge {

/// PCG32 generator. All distributions are implemented by hand so streams are
/// reproducible independent of the standard library.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 1) { reseed(seed, stream); }

    void reseed(uint64_t seed, uint64_t stream = 1) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
        has_cached_normal_ = false;
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = uint32_t(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = uint32_t(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31u));
    }

    uint64_t next_u64() {
        uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    /// Uniform double in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), rejection sampled to avoid modulo bias.
    uint32_t uniform_u32(uint32_t n) {
        uint32_t threshold = (~n + 1u) % n;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller; the second value is cached.
    double normal() {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // Avoid log(0).
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        double theta = 2.0 * std::numbers::pi * u2;
        cached_normal_ = r * std::sin(theta);
        has_cached_normal_ = true;
        return r * std::cos(theta);
    }

    /// Uniform direction on the unit sphere.
    Vec3 unit_vector() {
        double z = 1.0 - 2.0 * uniform();
        double phi = 2.0 * std::numbers::pi * uniform();
        double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {s * std::cos(phi), s * std::sin(phi), z};
    }

    /// Uniform direction on the hemisphere around +z.
    Vec3 unit_hemisphere() {
        double z = uniform();
        double phi = 2.0 * std::numbers::pi * uniform();
        double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {s * std::cos(phi), s * std::sin(phi), z};
    }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 1;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace matforge

#pragma once

// Counter-based random streams.
//
// Every random draw in the toolkit is a pure function of
// (master seed, run index, substream, position), computed with the
// Philox4x32-10 block cipher. A run's stream never depends on how many draws
// any other run (or any other substream of the same run) has consumed, which
// is what makes ensembles independent of worker count and execution order.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "sdtest/core.hpp"

namespace sdtest::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
inline constexpr Counter philox4x32_10(Counter ctr, Key key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

/// SplitMix64 finalizer; used to whiten user seeds into Philox keys.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Named substream slots used within one measurement step.
enum class Purpose : std::uint32_t {
    initial_state = 0,
    disturbance_count = 1,
    disturbance_kernel = 2,
    measurement = 3,
};

inline constexpr std::uint32_t kPurposes = 4;

/// Substream id for (step, purpose). Step 0 of purpose p is p, step 1 is
/// kPurposes + p, and so on.
inline constexpr std::uint64_t substream_id(std::uint64_t step, Purpose purpose) {
    return step * kPurposes + static_cast<std::uint32_t>(purpose);
}

/// A sequential view on one counter-based substream. Cheap to construct;
/// satisfies std::uniform_random_bit_generator.
class Stream {
public:
    using result_type = std::uint64_t;

    Stream(std::uint64_t master_seed, std::uint64_t run_index, std::uint64_t substream)
        : key_{}, ctr_{} {
        const std::uint64_t k = mix64(master_seed);
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
        ctr_[0] = static_cast<std::uint32_t>(run_index);
        ctr_[1] = static_cast<std::uint32_t>(run_index >> 32);
        ctr_[2] = static_cast<std::uint32_t>(substream);
        // Upper 16 bits of ctr_[3] carry the high part of the substream id,
        // the lower 16 bits index blocks inside the substream.
        substream_hi_ = static_cast<std::uint32_t>(substream >> 32) << 16;
        ctr_[3] = substream_hi_;
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (pos_ == 2) {
            refill();
        }
        const result_type r = (std::uint64_t{block_[2 * pos_ + 1]} << 32) | block_[2 * pos_];
        ++pos_;
        return r;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1].
    double uniform_pos() { return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (one value per call; the partner is
    /// discarded so the draw count per normal is fixed at two uniforms).
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    void refill() {
        Counter c = ctr_;
        c[3] = substream_hi_ | (blocks_ & 0xFFFFu);
        // Beyond 65536 blocks, fold the overflow into the key half that is
        // otherwise fixed per master seed; substreams here never get close.
        Key k = key_;
        k[1] ^= blocks_ >> 16;
        block_ = philox4x32_10(c, k);
        ++blocks_;
        pos_ = 0;
    }

    Key key_;
    Counter ctr_;
    Counter block_{};
    std::uint32_t substream_hi_ = 0;
    std::uint32_t blocks_ = 0;
    unsigned pos_ = 2;
};

/// Handle for a run's family of substreams: (master seed, run index).
struct SeedPath {
    std::uint64_t master_seed = 0;
    std::uint64_t run_index = 0;

    Stream stream(std::uint64_t substream) const { return Stream{master_seed, run_index, substream}; }
    Stream stream(std::uint64_t step, Purpose purpose) const {
        return stream(substream_id(step, purpose));
    }
    bool operator==(const SeedPath&) const = default;
};

/// Uniform point on the unit sphere (two uniforms).
template <class Rng>
Vec3 uniform_on_sphere(Rng& rng) {
    const double z = 2.0 * rng.uniform() - 1.0;
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

/// Number of set bits among `n` fair random bits; an exact Binomial(n, 1/2)
/// draw.
template <class Rng>
std::uint64_t fair_binomial(Rng& rng, std::uint64_t n) {
    std::uint64_t total = 0;
    for (; n >= 64; n -= 64) {
        total += static_cast<std::uint64_t>(std::popcount(rng()));
    }
    if (n > 0) {
        const std::uint64_t mask = (std::uint64_t{1} << n) - 1;
        total += static_cast<std::uint64_t>(std::popcount(rng() & mask));
    }
    return total;
}

}  // namespace sdtest::rng

#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace wetrial {

// Philox4x32-10 block function (Salmon et al., SC'11).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept;

// Sub-stream purposes inside one trial. Each (seed, purpose, index) triple
// addresses an independent counter range, so draws made for patient t never
// depend on how many draws were consumed elsewhere.
enum class StreamPurpose : std::uint32_t {
    response = 1,
    allocation = 2,
    selection = 3,
    statistic = 4,
    truth = 5,
    ensemble = 6,
    derive = 0xFFFFFFFFu,
};

// Mixes (seed, index) through one Philox block. Used for per-replica seeds:
// replica m of a run seeded with s uses derive_seed(s, m).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

// Counter-based stream. Counter words are (block_lo, block_hi, purpose, index),
// key is the 64-bit seed. Satisfies UniformRandomBitGenerator.
class Stream {
public:
    using result_type = std::uint64_t;

    Stream(std::uint64_t seed, StreamPurpose purpose, std::uint32_t index) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;

    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    // Uniform on (0, 1].
    double uniform_open0() noexcept;
    // Standard normal (Box-Muller, second variate cached).
    double normal() noexcept;
    // Uniform integer in [0, n), unbiased (Lemire rejection).
    std::uint32_t below(std::uint32_t n) noexcept;

private:
    std::uint32_t next_word() noexcept;

    PhiloxKey key_;
    PhiloxCounter ctr_;
    PhiloxCounter block_{};
    int used_ = 4;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace wetrial

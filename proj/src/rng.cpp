#include "wetrial/rng.hpp"

#include <cmath>
#include <numbers>

namespace wetrial {

namespace {

constexpr std::uint32_t kMulA = 0xD2511F53u;
constexpr std::uint32_t kMulB = 0xCD9E8D57u;
constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(p);
    hi = static_cast<std::uint32_t>(p >> 32);
}

inline PhiloxKey split_key(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter c, PhiloxKey k) noexcept {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t lo0, hi0, lo1, hi1;
        mulhilo(kMulA, c[0], lo0, hi0);
        mulhilo(kMulB, c[2], lo1, hi1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += kWeylA;
        k[1] += kWeylB;
    }
    return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    const PhiloxCounter ctr{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                            static_cast<std::uint32_t>(StreamPurpose::derive), 0u};
    const auto out = philox4x32_10(ctr, split_key(seed));
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

Stream::Stream(std::uint64_t seed, StreamPurpose purpose, std::uint32_t index) noexcept
    : key_(split_key(seed)), ctr_{0u, 0u, static_cast<std::uint32_t>(purpose), index} {}

std::uint32_t Stream::next_word() noexcept {
    if (used_ == 4) {
        block_ = philox4x32_10(ctr_, key_);
        if (++ctr_[0] == 0) ++ctr_[1];
        used_ = 0;
    }
    return block_[used_++];
}

Stream::result_type Stream::operator()() noexcept {
    const std::uint64_t lo = next_word();
    const std::uint64_t hi = next_word();
    return (hi << 32) | lo;
}

double Stream::uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double Stream::uniform_open0() noexcept {
    return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
}

double Stream::normal() noexcept {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open0()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    cached_normal_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

std::uint32_t Stream::below(std::uint32_t n) noexcept {
    std::uint64_t m = static_cast<std::uint64_t>(next_word()) * n;
    auto low = static_cast<std::uint32_t>(m);
    if (low < n) {
        const std::uint32_t threshold = (0u - n) % n;
        while (low < threshold) {
            m = static_cast<std::uint64_t>(next_word()) * n;
            low = static_cast<std::uint32_t>(m);
        }
    }
    return static_cast<std::uint32_t>(m >> 32);
}

}  // namespace wetrial

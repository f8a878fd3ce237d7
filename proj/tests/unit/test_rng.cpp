#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "wetrial/rng.hpp"

using namespace wetrial;
using Catch::Approx;

// Known-answer vectors of the Random123 distribution.
TEST_CASE("philox4x32-10 known answers", "[rng]") {
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and separated by purpose and index", "[rng]") {
    Stream a(42, StreamPurpose::response, 3), b(42, StreamPurpose::response, 3);
    for (int i = 0; i < 100; ++i) REQUIRE(a() == b());

    std::set<std::uint64_t> firsts;
    for (auto purpose : {StreamPurpose::response, StreamPurpose::allocation, StreamPurpose::selection,
                         StreamPurpose::statistic, StreamPurpose::truth, StreamPurpose::ensemble})
        for (std::uint32_t idx = 0; idx < 50; ++idx) firsts.insert(Stream(42, purpose, idx)());
    CHECK(firsts.size() == 300);
    CHECK(Stream(42, StreamPurpose::response, 0)() != Stream(43, StreamPurpose::response, 0)());
}

TEST_CASE("derive_seed is deterministic and collision-free on a range", "[rng]") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t m = 0; m < 10000; ++m) seen.insert(derive_seed(7, m));
    CHECK(seen.size() == 10000);
    CHECK(derive_seed(7, 5) == derive_seed(7, 5));
    CHECK(derive_seed(7, 5) != derive_seed(8, 5));
}

TEST_CASE("uniform and normal moments", "[rng]") {
    Stream s(2024, StreamPurpose::response, 0);
    const int n = 200000;
    double su = 0, su2 = 0, sn = 0, sn2 = 0, sn4 = 0;
    double umin = 1, umax = 0;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform();
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        su += u;
        su2 += u * u;
        const double z = s.normal();
        sn += z;
        sn2 += z * z;
        sn4 += z * z * z * z;
    }
    CHECK(umin >= 0.0);
    CHECK(umax < 1.0);
    CHECK(su / n == Approx(0.5).margin(0.005));
    CHECK(su2 / n - (su / n) * (su / n) == Approx(1.0 / 12).margin(0.002));
    CHECK(sn / n == Approx(0.0).margin(0.01));
    CHECK(sn2 / n == Approx(1.0).margin(0.015));
    CHECK(sn4 / n == Approx(3.0).margin(0.08));
}

TEST_CASE("uniform_open0 excludes zero", "[rng]") {
    Stream s(1, StreamPurpose::statistic, 0);
    for (int i = 0; i < 100000; ++i) {
        const double u = s.uniform_open0();
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
    }
}

TEST_CASE("below is unbiased", "[rng]") {
    Stream s(99, StreamPurpose::allocation, 0);
    const std::uint32_t k = 7;
    const int n = 140000;
    std::vector<int> counts(k);
    for (int i = 0; i < n; ++i) {
        const auto x = s.below(k);
        REQUIRE(x < k);
        ++counts[x];
    }
    double chi2 = 0;
    const double e = static_cast<double>(n) / k;
    for (int c : counts) chi2 += (c - e) * (c - e) / e;
    // 6 degrees of freedom, 0.999 quantile is 22.46.
    CHECK(chi2 < 22.46);
    CHECK(s.below(1) == 0);
}

TEST_CASE("stream satisfies the standard generator concept", "[rng]") {
    STATIC_REQUIRE(std::uniform_random_bit_generator<Stream>);
}

#include <catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <vector>

#include "wetrial/info_gain.hpp"
#include "wetrial/policies.hpp"

using namespace wetrial;
using Catch::Approx;

namespace {

std::vector<ArmState> random_state(std::mt19937_64& gen, std::size_t k, bool known = true) {
    std::normal_distribution<double> x(0, 3);
    std::uniform_int_distribution<int> n(2, 20);
    std::vector<ArmState> arms(k);
    for (auto& a : arms) {
        if (known) a.sigma_known = 2.0;
        const int m = n(gen);
        for (int i = 0; i < m; ++i) a = update_arm(a, x(gen));
    }
    return arms;
}

}  // namespace

TEST_CASE("policy labels", "[policies]") {
    CHECK(policy_label({FixedRandomisation{}}) == "FR");
    CHECK(policy_label({CurrentBelief{}}) == "CB");
    CHECK(policy_label({WeSymmetric{1, 0.55}}) == "WE(1,0.55)");
    CHECK(policy_label({WeSymmetric{2, 1.1}}) == "WE(2,1.1)");
}

TEST_CASE("burn-in is round robin for every policy", "[policies]") {
    std::vector<ArmState> arms(4);
    for (auto& a : arms) a.sigma_known = 1.0;
    Stream rng(1, StreamPurpose::allocation, 0);
    for (PolicySpec spec : {PolicySpec{FixedRandomisation{}, 3}, PolicySpec{CurrentBelief{}, 3},
                            PolicySpec{WeSymmetric{1, 0.55}, 3}, PolicySpec{ThompsonSampling{}, 3}}) {
        Allocator alloc(spec, 4, 100);
        CHECK(alloc.burn_in_patients() == 12);
        for (int t = 1; t <= 12; ++t) CHECK(alloc.next(arms, t, rng) == static_cast<std::size_t>((t - 1) % 4));
        CHECK_FALSE(alloc.in_burn_in(13));
    }
}

TEST_CASE("burn-in must fit in the trial", "[policies]") {
    CHECK_THROWS_AS(Allocator(PolicySpec{CurrentBelief{}, 30}, 4, 100), std::invalid_argument);
    CHECK_NOTHROW(Allocator(PolicySpec{CurrentBelief{}, 25}, 4, 100));
    CHECK_THROWS_AS(Allocator(PolicySpec{CurrentBelief{}, 0}, 4, 100), std::invalid_argument);
}

TEST_CASE("fixed randomisation is uniform after burn-in", "[policies]") {
    std::vector<ArmState> arms(4);
    Allocator alloc(PolicySpec{FixedRandomisation{}, 1}, 4, 100);
    std::vector<int> counts(4);
    for (int i = 0; i < 40000; ++i) {
        Stream rng(5, StreamPurpose::allocation, static_cast<std::uint32_t>(i));
        ++counts[alloc.next(arms, 50, rng)];
    }
    for (int c : counts) CHECK(c == Approx(10000).margin(400));
}

TEST_CASE("current belief allocates to the arm closest to its target", "[policies]") {
    std::mt19937_64 gen(3);
    Allocator alloc(PolicySpec{CurrentBelief{}, 1}, 4, 100);
    for (int trial = 0; trial < 200; ++trial) {
        auto arms = random_state(gen, 4);
        Stream rng(1, StreamPurpose::allocation, 0);
        std::size_t expected = 0;
        for (std::size_t j = 1; j < 4; ++j)
            if (std::abs(arms[j].mean) < std::abs(arms[expected].mean)) expected = j;
        REQUIRE(alloc.next(arms, 60, rng) == expected);
    }
}

TEST_CASE("WE allocates to the arm with the largest gain", "[policies]") {
    std::mt19937_64 gen(4);
    for (auto [p, kappa] : {std::pair{1.0, 0.55}, std::pair{2.0, 1.1}, std::pair{1.5, 0.9}}) {
        Allocator alloc(PolicySpec{WeSymmetric{p, kappa}, 1}, 4, 100);
        for (int trial = 0; trial < 100; ++trial) {
            auto arms = random_state(gen, 4, trial % 2 == 0);
            Stream rng(1, StreamPurpose::allocation, 0);
            std::size_t expected = 0;
            double best = -INFINITY;
            for (std::size_t j = 0; j < 4; ++j) {
                const double g = symmetric_gain(arms[j].mean, arms[j].sigma(), static_cast<int>(arms[j].count), 0.0,
                                                {p, kappa});
                CHECK(alloc.scores(arms, 60, rng)[j] == Approx(g).epsilon(1e-12));
                if (g > best) {
                    best = g;
                    expected = j;
                }
            }
            REQUIRE(alloc.next(arms, 60, rng) == expected);
        }
    }
}

TEST_CASE("SGI and TGI with the zero table reduce to current belief", "[policies][property]") {
    auto table = std::make_shared<GittinsTable>(GittinsTable::zero(0.99));
    Allocator cb(PolicySpec{CurrentBelief{}, 1}, 5, 100);
    Allocator sgi(PolicySpec{SymmetricGittins{0.99}, 1}, 5, 100, table);
    Allocator tgi(PolicySpec{TargetedGittins{0.99}, 1}, 5, 100, table);
    std::mt19937_64 gen(8);
    for (int trial = 0; trial < 1000; ++trial) {
        auto arms = random_state(gen, 5, trial % 3 != 0);
        // Force ties now and then.
        if (trial % 7 == 0) arms[2] = arms[4];
        Stream r1(trial, StreamPurpose::allocation, 9), r2(trial, StreamPurpose::allocation, 9),
            r3(trial, StreamPurpose::allocation, 9);
        const auto a = cb.next(arms, 40, r1);
        REQUIRE(sgi.next(arms, 40, r2) == a);
        REQUIRE(tgi.next(arms, 40, r3) == a);
        Stream s(0, StreamPurpose::allocation, 0);
        REQUIRE(sgi.scores(arms, 40, s) == cb.scores(arms, 40, s));
    }
}

TEST_CASE("Gittins index bonus favours less explored arms", "[policies]") {
    auto table = std::make_shared<GittinsTable>(0.99, std::vector<std::uint32_t>{1, 10}, std::vector<double>{2.0, 0.5});
    Allocator sgi(PolicySpec{SymmetricGittins{0.99}, 1}, 2, 100, table);
    std::vector<ArmState> arms(2);
    for (auto& a : arms) a.sigma_known = 1.0;
    for (int i = 0; i < 2; ++i) arms[0] = update_arm(arms[0], 0.5);
    for (int i = 0; i < 10; ++i) arms[1] = update_arm(arms[1], 0.4);
    Stream rng(1, StreamPurpose::allocation, 0);
    const auto s = sgi.scores(arms, 20, rng);
    // n = 2 interpolates linearly in 1/n: 2 + (1/2 - 1)/(1/10 - 1) * (0.5 - 2).
    const double g2 = 2.0 + (0.5 - 1.0) / (0.1 - 1.0) * (0.5 - 2.0);
    CHECK(s[0] == Approx(0.5 - g2));
    CHECK(s[1] == Approx(0.4 - 0.5));
    CHECK(sgi.next(arms, 20, rng) == 0);
}

TEST_CASE("Gittins table parsing", "[policies]") {
    std::istringstream ok("# comment\nd=0.99\n1 2.5\n2 1.7\n10 0.6\n");
    const auto t = GittinsTable::parse(ok);
    CHECK(t.d() == Approx(0.99));
    CHECK(t(1) == 2.5);
    CHECK(t(100) == 0.6);
    std::istringstream no_header("1 2\n");
    CHECK_THROWS_AS(GittinsTable::parse(no_header), std::invalid_argument);
    std::istringstream bad_row("d=0.9\n1 x\n");
    CHECK_THROWS_AS(GittinsTable::parse(bad_row), std::invalid_argument);
    std::istringstream increasing("d=0.9\n1 1\n2 3\n");
    CHECK_THROWS_AS(GittinsTable::parse(increasing), std::invalid_argument);
    CHECK_THROWS_AS(Allocator(PolicySpec{SymmetricGittins{0.99}, 1}, 4, 100), MissingGittinsTable);
    auto other = std::make_shared<GittinsTable>(GittinsTable::zero(0.95));
    CHECK_THROWS_AS(Allocator(PolicySpec{TargetedGittins{0.99}, 1}, 4, 100, other), MissingGittinsTable);
}

TEST_CASE("Thompson sampling probabilities", "[policies]") {
    std::vector<ArmState> arms(3);
    for (auto& a : arms) a.sigma_known = 1.0;
    arms[0] = update_arm(update_arm(arms[0], 0.1), -0.1);
    arms[1] = update_arm(update_arm(arms[1], 5.0), 5.2);
    arms[2] = update_arm(update_arm(arms[2], -4.0), -4.4);
    Stream rng(2, StreamPurpose::allocation, 0);
    const auto p = ts_best_probabilities(arms, 20000, rng);
    CHECK(p[0] + p[1] + p[2] == Approx(1.0));
    CHECK(p[0] > 0.99);
    const auto w = ts_adjust(std::vector<double>{0.5, 0.3, 0.2, 0.0}, 0.5);
    CHECK(w[3] == 0.0);
    CHECK(w[0] + w[1] + w[2] == Approx(1.0));
    CHECK(w[0] / w[1] == Approx(std::sqrt(0.5 / 0.3)));
    CHECK_THROWS_AS(ts_best_probabilities(arms, 50, rng), std::invalid_argument);

    // argmax mode follows the most probable arm; sample mode draws from the weights.
    Allocator arg(PolicySpec{ThompsonSampling{1000, TsMode::argmax}, 1}, 3, 100);
    Allocator smp(PolicySpec{ThompsonSampling{1000, TsMode::sample}, 1}, 3, 100);
    CHECK(arg.next(arms, 50, rng) == 0);
    int zero = 0;
    for (int i = 0; i < 200; ++i) {
        Stream r(3, StreamPurpose::allocation, static_cast<std::uint32_t>(i));
        zero += smp.next(arms, 50, r) == 0;
    }
    CHECK(zero > 190);
}

TEST_CASE("exact ties are split uniformly", "[policies]") {
    const std::vector<double> s{1.0, 3.0, 3.0, 2.0, 3.0};
    std::vector<int> counts(5);
    for (std::uint32_t i = 0; i < 30000; ++i) {
        Stream r(1, StreamPurpose::allocation, i);
        ++counts[pick_extreme(s, false, r)];
    }
    CHECK(counts[0] == 0);
    CHECK(counts[3] == 0);
    for (int j : {1, 2, 4}) CHECK(counts[j] == Approx(10000).margin(450));
    Stream r(1, StreamPurpose::allocation, 0);
    CHECK(pick_extreme(s, true, r) == 0);
}

TEST_CASE("small kappa requires the override flag in a design", "[policies]") {
    CHECK_THROWS_AS(Allocator(PolicySpec{WeSymmetric{1, 0.3}, 1}, 4, 100), std::invalid_argument);
    CHECK_NOTHROW(Allocator(PolicySpec{WeSymmetric{1, 0.3}, 1, true}, 4, 100));
}

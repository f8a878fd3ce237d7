#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "wetrial/inference.hpp"
#include "wetrial/trial.hpp"

using namespace wetrial;
using Catch::Approx;

namespace {

Scenario scenario_one() {
    Scenario s;
    s.name = "I";
    for (auto [m, sd] : {std::pair{1.91, 2.0}, {-3.36, 2.0}, {-0.37, 2.0}, {3.99, 4.0}}) s.arms.push_back({m, sd, 0.0});
    return s;
}

Scenario bivariate() {
    Scenario s;
    Eigen::MatrixXd cov(2, 2);
    cov << 4, 0, 0, 64;
    Eigen::VectorXd g(2);
    g << 0, 100;
    const double m1[] = {1, -1, 2, -2.5}, m2[] = {10, 25, 55, 60};
    for (int j = 0; j < 4; ++j) {
        Eigen::VectorXd m(2);
        m << m1[j], m2[j];
        s.mv_arms.push_back({m, cov, g});
    }
    return s;
}

}  // namespace

TEST_CASE("fixed randomisation follows the documented stream layout", "[trial]") {
    // Oracle: re-run the trial by hand from the sub-stream contract.
    const auto sc = scenario_one();
    TrialConfig c;
    c.policy = PolicySpec{FixedRandomisation{}, 2};
    c.seed = 12345;
    const auto out = simulate_trial(sc, c);

    std::vector<int> counts(4);
    std::vector<double> sums(4);
    for (int t = 1; t <= 100; ++t) {
        std::size_t arm;
        if (t <= 8) {
            arm = static_cast<std::size_t>((t - 1) % 4);
        } else {
            Stream a(c.seed, StreamPurpose::allocation, static_cast<std::uint32_t>(t));
            arm = a.below(4);
        }
        Stream r(c.seed, StreamPurpose::response, static_cast<std::uint32_t>(t));
        const double y = sc.arms[arm].mean + sc.arms[arm].sigma * r.normal();
        REQUIRE(out.allocations[t - 1] == arm);
        REQUIRE(out.responses[t - 1] == y);
        ++counts[arm];
        sums[arm] += y;
    }
    for (int j = 0; j < 4; ++j) {
        CHECK(out.counts[j] == static_cast<std::uint32_t>(counts[j]));
        CHECK(out.arms[j].mean == Approx(sums[j] / counts[j]).epsilon(1e-12));
    }
    // Best and second by |mean - target| (no ties with continuous data).
    std::vector<std::size_t> order{0, 1, 2, 3};
    std::sort(order.begin(), order.end(),
              [&](auto a, auto b) { return std::abs(out.arms[a].mean) < std::abs(out.arms[b].mean); });
    CHECK(out.best == order[0]);
    CHECK(out.second == order[1]);
    const double pi = folded_superiority_prob(posterior(out.arms[out.best]), posterior(out.arms[out.second]), 0.0);
    CHECK(out.statistic == Approx(pi).margin(1e-9));
}

TEST_CASE("trials are deterministic in scenario and seed", "[trial]") {
    const auto sc = scenario_one();
    TrialConfig c;
    c.policy = PolicySpec{WeSymmetric{1, 0.55}, 5};
    c.seed = 77;
    const auto a = simulate_trial(sc, c), b = simulate_trial(sc, c);
    CHECK(a.allocations == b.allocations);
    CHECK(a.responses == b.responses);
    CHECK(a.statistic == b.statistic);
    c.seed = 78;
    CHECK(simulate_trial(sc, c).responses != a.responses);
}

TEST_CASE("replaying the responses through a trial state reproduces the trial", "[trial]") {
    const auto sc = scenario_one();
    for (PolicySpec spec : {PolicySpec{WeSymmetric{2, 0.7}, 5}, PolicySpec{CurrentBelief{}, 5},
                            PolicySpec{ThompsonSampling{}, 5}}) {
        TrialConfig c;
        c.policy = spec;
        c.seed = 4242;
        const auto out = simulate_trial(sc, c);
        TrialState st({0, 0, 0, 0}, {2.0, 2.0, 2.0, 4.0}, c);
        for (int t = 0; t < 100; ++t) {
            REQUIRE(st.recommend() == out.allocations[t]);
            st.record(out.allocations[t], out.responses[t]);
        }
        const auto again = st.finish(true, c.mv_draws);
        CHECK(again.best == out.best);
        CHECK(again.second == out.second);
        CHECK(again.statistic == out.statistic);
    }
}

TEST_CASE("parallel replication equals serial bit for bit", "[trial][property]") {
    const auto sc = scenario_one();
    TrialConfig c;
    c.policy = PolicySpec{WeSymmetric{1, 0.55}, 5};
    c.seed = 9;
    const auto serial = run_replicas(sc, c, 300, 1);
    const auto parallel = run_replicas(sc, c, 300, 4);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t m = 0; m < serial.size(); ++m) {
        REQUIRE(serial[m].best_share == parallel[m].best_share);
        REQUIRE(serial[m].statistic == parallel[m].statistic);
        REQUIRE(serial[m].best == parallel[m].best);
        REQUIRE(serial[m].second == parallel[m].second);
    }
}

TEST_CASE("operating characteristics are internally consistent", "[trial][property]") {
    const auto sc = scenario_one();
    for (PolicySpec spec : {PolicySpec{FixedRandomisation{}, 1}, PolicySpec{CurrentBelief{}, 5},
                            PolicySpec{WeSymmetric{2, 1.1}, 5}}) {
        TrialConfig c;
        c.policy = spec;
        c.seed = 31;
        const auto runs = run_replicas(sc, c, 400, 0);
        const auto truth = true_best(sc, c.seed);
        for (double eta : {0.05, 0.5, 0.9, 0.95, 0.999}) {
            const auto oc = summarise(runs, truth, eta);
            CHECK(oc.power_two_components <= oc.rejection_rate);
            CHECK(oc.cs_best_two <= oc.cs_best);
            CHECK(oc.pb >= 0.0);
            CHECK(oc.pb <= 100.0);
            REQUIRE(oc.power_conditional.has_value());
            CHECK(*oc.power_conditional * oc.cs_best_two / 100.0 == Approx(oc.power_two_components).margin(1e-12));
        }
    }
}

TEST_CASE("summaries from hand-made replicas", "[trial]") {
    std::vector<ReplicaSummary> runs{{0.5, 0.99, 0, 1}, {0.25, 0.97, 0, 2}, {0.75, 0.2, 0, 1}, {0.0, 0.999, 3, 1}};
    const auto oc = summarise(runs, {0, 1}, 0.95);
    CHECK(oc.pb == Approx(37.5));
    CHECK(oc.cs_best == Approx(75));
    CHECK(oc.cs_best_two == Approx(50));
    CHECK(oc.rejection_rate == Approx(0.75));
    CHECK(oc.power_two_components == Approx(0.25));
    CHECK(*oc.power_conditional == Approx(0.5));
    // sample sd of (0.5, 0.25, 0.75, 0) over sqrt(4)
    CHECK(oc.pb_se == Approx(100 * std::sqrt(5.0 / 48.0) / 2.0));
    const auto none = summarise(std::vector<ReplicaSummary>{{0.1, 0.9, 2, 3}}, {0, 1}, 0.5);
    CHECK_FALSE(none.power_conditional.has_value());
    CHECK_THROWS_AS(summarise(runs, {0, 1}, 1.0), std::invalid_argument);
}

TEST_CASE("true best arms and exact ties", "[trial]") {
    CHECK(true_best(scenario_one(), 1) == std::pair<std::size_t, std::size_t>{2, 0});
    Scenario tie;
    for (double m : {1.0, -1.0, 3.0}) tie.arms.push_back({m, 1.0, 0.0});
    int first = 0;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        const auto t = true_best(tie, seed);
        REQUIRE(t.first != t.second);
        REQUIRE(t.first < 2);
        REQUIRE(t.second < 2);
        first += t.first == 0;
    }
    CHECK(first == Approx(1000).margin(120));
}

TEST_CASE("fixed randomisation patient benefit is one quarter with four arms", "[trial]") {
    TrialConfig c;
    c.policy = PolicySpec{FixedRandomisation{}, 1};
    c.compute_statistic = false;
    const auto oc = replicate(scenario_one(), c, 2000, 0.5);
    CHECK(oc.pb == Approx(25).margin(4 * oc.pb_se));
}

TEST_CASE("vector endpoints", "[trial]") {
    const auto sc = bivariate();
    TrialConfig c;
    c.policy = PolicySpec{WeMultivariate{0.5}, 1};
    c.mv_draws = 2000;
    c.seed = 5;
    const auto out = simulate_trial(sc, c);
    CHECK(out.mv_responses.size() == 100);
    CHECK(out.statistic >= 0.0);
    CHECK(out.statistic <= 1.0);
    const auto again = simulate_trial(sc, c);
    CHECK(again.statistic == out.statistic);
    CHECK(again.allocations == out.allocations);
    // Standardised distances 11.75, 9.875, 6.625, 6.25.
    CHECK(true_best(sc, 1) == std::pair<std::size_t, std::size_t>{3, 2});

    Scenario bad = sc;
    bad.variance = VarianceMode::unknown;
    CHECK_THROWS(simulate_trial(bad, c));
}

TEST_CASE("unknown variance needs two burn-in patients per arm", "[trial]") {
    auto sc = scenario_one();
    sc.variance = VarianceMode::unknown;
    TrialConfig c;
    c.policy = PolicySpec{WeSymmetric{1, 0.55}, 1};
    CHECK_THROWS_AS(simulate_trial(sc, c), std::invalid_argument);
    c.policy.burn_in = 2;
    CHECK_NOTHROW(simulate_trial(sc, c));
}

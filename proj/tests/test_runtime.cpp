#include <catch_amalgamated.hpp>

#include "support/fixtures.hpp"

#include <cmath>

using namespace apd;
using namespace apd::testing;
using Catch::Approx;

TEST_CASE("Bayes update") {
    const auto m = example1();
    const BeliefState half{{0.5, 0.5}};
    auto b = belief_update(half, 0, 0, 1, m);
    CHECK(b.b[0] == Approx(7.0 / 11.0));
    CHECK(b.b[1] == Approx(4.0 / 11.0));
    b = belief_update(half, 1, 1, 4, m);
    CHECK(b.b[0] == 1.0);
    CHECK(b.b[1] == 0.0);
    b = belief_update(half, 1, 0, 5, m);
    CHECK(b.b == half.b);
    CHECK_THROWS_AS(belief_update(BeliefState{{0.0, 1.0}}, 1, 1, 4, m), ImpossibleObservation);
}

TEST_CASE("MAP decisions") {
    CHECK(map_decide({{0.64, 0.36}}) == 0);
    CHECK(map_decide({{0.5, 0.5}}) == 0);
    CHECK(map_decide({{0.2, 0.3, 0.5}}) == 2);
}

TEST_CASE("run on the example from state 2 plays b2 until the belief collapses") {
    const auto m = example1("2");
    const auto policy = *bi_apd(m, 1).policy;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto trace = simulate(m, 0, policy, seed);
        CHECK(trace.stop == StopReason::threshold);
        CHECK(trace.final_belief().b == std::vector<double>{1.0, 0.0});
        CHECK(m.states()[trace.rows.back().state] == "5");
        for (std::size_t k = 0; k + 1 < trace.rows.size(); ++k) {
            CHECK(trace.rows[k].action == ActionIndex{1});
            CHECK(trace.rows[k].belief.b[0] == 0.5);
        }
        CHECK_FALSE(trace.rows.back().action.has_value());
    }
}

TEST_CASE("identical models keep the prior") {
    const auto m = replicate(example1().model(0), 2);
    const auto pi = uniform_policy(m.model(0));
    SimOptions options;
    options.max_steps = 50;
    const auto trace = simulate(m, 1, StationaryController(pi), 3, options);
    CHECK(trace.stop == StopReason::max_steps);
    CHECK(trace.rows.size() == 51);
    for (const auto& row : trace.rows) {
        CHECK(row.belief.b == std::vector<double>{0.5, 0.5});
    }
}

TEST_CASE("runs are reproducible") {
    Rng rng(2, 2);
    const auto m = random_mmdp(rng, 3, {6, 3, 3}, true);
    const auto pi = random_policy(rng, m.model(0));
    SimOptions options;
    options.max_steps = 200;
    const auto a = simulate(m, 2, StationaryController(pi), 99, options, 4);
    const auto b = simulate(m, 2, StationaryController(pi), 99, options, 4);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
        CHECK(a.rows[k].state == b.rows[k].state);
        CHECK(a.rows[k].action == b.rows[k].action);
        CHECK(a.rows[k].belief.b == b.rows[k].belief.b);
    }
}

TEST_CASE("eliminated models stay at exactly zero") {
    Rng rng(8, 8);
    for (int round = 0; round < 30; ++round) {
        const auto m = random_mmdp(rng, 3, {6, 3, 3}, true);
        const auto pi = random_policy(rng, m.model(0));
        SimOptions options;
        options.max_steps = 100;
        const auto trace = simulate(m, static_cast<ModelIndex>(round % 3), StationaryController(pi), round, options);
        for (std::size_t k = 1; k < trace.rows.size(); ++k) {
            CHECK(trace.rows[k].belief.support().is_subset_of(trace.rows[k - 1].belief.support()));
            CHECK(trace.rows[k].belief.b[trace.truth] > 0.0);
        }
    }
}

TEST_CASE("mean posterior equals the prior") {
    Rng rng(12, 0);
    const auto m = random_mmdp(rng, 3, {5, 2, 3}, true);
    const auto pi = random_policy(rng, m.model(0));
    const std::vector<double> prior{0.2, 0.3, 0.5};
    SimOptions options;
    options.max_steps = 6;
    options.prior = prior;
    options.stop_on_threshold = false;
    const std::size_t runs = 4000;
    std::vector<double> sum(3, 0.0);
    std::vector<double> sq(3, 0.0);
    for (std::size_t k = 0; k < runs; ++k) {
        Rng pick(77, k);
        const auto truth = static_cast<ModelIndex>(pick.pick(prior));
        const auto trace = simulate(m, truth, StationaryController(pi), 5, options, k);
        for (std::size_t i = 0; i < 3; ++i) {
            const double x = trace.final_belief().b[i];
            sum[i] += x;
            sq[i] += x * x;
        }
    }
    for (std::size_t i = 0; i < 3; ++i) {
        const double mean = sum[i] / runs;
        const double var = sq[i] / runs - mean * mean;
        const double se = std::sqrt(std::max(var, 1e-12) / runs);
        CHECK(std::abs(mean - prior[i]) <= 3 * se + 1e-9);
    }
}

TEST_CASE("Monte-Carlo MAP error") {
    const std::vector<double> u{0.5, 0.5};
    SECTION("identical models err half the time") {
        const auto m = replicate(example1().model(0), 2);
        const auto pi = uniform_policy(m.model(0));
        const auto e = monte_carlo_error(m, StationaryController(pi), 5, 4000, 1, u, u);
        CHECK(std::abs(e.error - 0.5) <= 3 * e.std_error);
    }
    SECTION("a revealing step leaves no error") {
        const auto m = example1("5");
        const auto policy = *bi_apd(m, 4).policy;
        const auto e = monte_carlo_error(m, policy, 1, 1000, 2, u, u);
        CHECK(e.error == 0.0);
    }
    SECTION("leaking instance stays inside the bounds") {
        const auto m = sqrt_half_instance();
        const auto pi = uniform_policy(m.model(0));
        const auto e = monte_carlo_error(m, StationaryController(pi), 5, 10000, 3, u, u, 4);
        const auto bounds = error_bounds_binary(std::pow(std::sqrt(0.5), 5), 0.5, 0.5);
        CHECK(e.error >= bounds.lower - 3 * e.std_error);
        CHECK(e.error <= bounds.upper_clamped() + 3 * e.std_error);
    }
    SECTION("trial count") {
        const auto m = sqrt_half_instance();
        const auto pi = uniform_policy(m.model(0));
        CHECK_THROWS_AS(monte_carlo_error(m, StationaryController(pi), 5, 10, 3, u, u), ContractError);
    }
}

TEST_CASE("thread count does not change batch results") {
    const auto m = example1("2");
    const auto policy = *bi_apd(m, 1).policy;
    const DetectionController controller(policy, m);
    const auto a = run_batch(m, controller, std::nullopt, 200, 5, {}, 1);
    const auto b = run_batch(m, controller, std::nullopt, 200, 5, {}, 4);
    CHECK(a.error.error == b.error.error);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(a.per_truth[i].runs == b.per_truth[i].runs);
        CHECK(a.per_truth[i].total_stop_time == b.per_truth[i].total_stop_time);
    }
    CHECK(a.undetectable == 0);
}

TEST_CASE("simulation needs an entry for the start") {
    const auto m = example1();
    const auto policy = *bi_apd(m, 1).policy;
    CHECK_THROWS_AS(simulate(m, 0, policy, 1), ContractError);
}

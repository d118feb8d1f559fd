// Acceptance suite: one line per criterion, nonzero exit on any failure.

#include "support/fixtures.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

using namespace apd;
using namespace apd::testing;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

json load_json(const std::string& name) {
    std::ifstream in(std::string(APD_DATA_DIR) + "/" + name);
    return json::parse(in);
}

std::set<std::pair<std::string, std::string>> state_edges(const Mdp& m) {
    std::set<std::pair<std::string, std::string>> out;
    for (StateIndex s = 0; s < m.num_states(); ++s) {
        for (ActionIndex a = 0; a < m.num_actions(s); ++a) {
            for (const auto& e : m.row(s, a)) {
                out.emplace(m.states[s], m.states[e.state]);
            }
        }
    }
    return out;
}

std::set<std::pair<std::string, std::string>> named(const std::set<StateAction>& pairs, const Mdp& m) {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& p : pairs) {
        out.emplace(m.states[p.state], m.actions[p.state][p.action]);
    }
    return out;
}

Verdict ac1() {
    Verdict v;
    const auto m = example1();
    const auto c = classify_pairs(m.model(0), m.model(1));
    using P = std::set<std::pair<std::string, std::string>>;
    v.require(named(c.isa(), m.model(0)) == P{{"1", "a1"}, {"2", "b2"}}, "informative pairs differ");
    v.require(named(c.pairs_of_kind(PairKind::revealing), m.model(0)) == P{{"5", "b5"}}, "revealing pairs differ");
    const auto pre = preprocess(m.model(0), m.model(1));
    const std::set<std::pair<std::string, std::string>> expected{
        {"1", "2"}, {"1", "3"}, {"2", "2"}, {"2", "5"}, {"2", "6"}, {"2", "⊥1"}, {"3", "3"}, {"3", "4"},
        {"4", "3"}, {"4", "4"}, {"5", "⊥1"}, {"6", "6"}, {"7", "7"}, {"⊥1", "⊥1"}, {"⊥2", "⊥2"}};
    v.require(state_edges(pre.first) == expected, "preprocessed edge set differs");
    v.detail = v.pass ? "ISA {(1,a1),(2,b2)}, revealing {(5,b5)}, 15 edges" : v.detail;
    return v;
}

Verdict ac2() {
    Verdict v;
    const auto m = example1();
    const auto from1 = bi_apd(m, 0);
    const auto from2 = bi_apd(m, 1);
    v.require(!from1.exists, "policy found from state 1");
    v.require(from2.exists, "no policy from state 2");
    if (from2.exists) {
        const auto* entry = from2.policy->find(m.all_models(), 1);
        v.require(entry != nullptr && entry->reach.contains(1) && entry->reach.at(1) == 1, "state 2 does not play b2");
    }
    // Value-iteration oracle on the informative structure.
    const auto pre = preprocess(m.model(0), m.model(1));
    const auto ts = informative_structure(pre);
    const auto mix = informative_mdp(pre, 0.5);
    std::vector<std::vector<std::vector<double>>> probs(ts.num_states());
    for (StateIndex s = 0; s < ts.num_states(); ++s) {
        for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
            std::vector<double> row;
            for (auto t : ts.post(s, a)) {
                row.push_back(mix.probability(s, a, t));
            }
            probs[s].push_back(row);
        }
    }
    const auto value = max_reach_probability(ts, states_of(informative_mecs(ts, pre.isa), ts.num_states()), probs);
    v.require(value[0] < 1.0 - 1e-6, "oracle reaches informative MECs surely from state 1");
    v.require(value[1] > 1.0 - 1e-9, "oracle misses informative MECs from state 2");
    if (v.pass) {
        v.detail = "from 1: none (oracle " + fmt(value[0]) + "); from 2: b2";
    }
    return v;
}

Verdict ac3() {
    Verdict v;
    Rng rng(303, 0);
    std::size_t checks = 0;
    for (int k = 0; k < 200; ++k) {
        const auto m = random_mmdp(rng, 2, {6, 3, 3}, k % 2 == 0);
        const auto pi = random_policy(rng, m.model(0));
        const auto curve = bc_matrix(m.model(0), m.model(1), pi).curve(10);
        for (std::size_t t = 1; t <= 10; ++t) {
            ++checks;
            v.require(curve[t] <= curve[t - 1] + 1e-12, "increase at instance " + std::to_string(k));
        }
    }
    if (v.pass) {
        v.detail = std::to_string(checks) + " steps nonincreasing";
    }
    return v;
}

Verdict ac4() {
    Verdict v;
    Rng rng(404, 0);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const auto m = random_mmdp(rng, 2, {5, 2, 3}, k % 2 == 0);
        const auto pi = random_policy(rng, m.model(0));
        const auto curve = bc_matrix(m.model(0), m.model(1), pi).curve(8);
        for (std::size_t t = 0; t <= 8; ++t) {
            worst = std::max(worst, std::abs(bc_exact(m.model(0), m.model(1), pi, t) - curve[t]));
        }
    }
    v.require(worst <= 1e-10, "max deviation " + fmt(worst));
    if (v.pass) {
        v.detail = "max deviation " + fmt(worst);
    }
    return v;
}

Verdict ac5() {
    Verdict v;
    Rng rng(505, 0);
    std::size_t found = 0;
    double min_r2 = 1.0;
    double max_lambda = 0.0;
    for (int attempt = 0; attempt < 2000 && found < 20; ++attempt) {
        const auto m = random_mmdp(rng, 2, {6, 3, 3}, false);
        const auto out = bi_apd(m, 0);
        if (!out.exists) {
            continue;
        }
        ++found;
        const auto* entry = out.policy->find(m.all_models(), 0);
        const auto pi = stationary_from_entry(*entry, m.model(0));
        const auto curve = bc_matrix(m.model(0), m.model(1), pi).curve(40);
        const auto fit = decay_fit(curve, 10, 40);
        v.require(!fit.certain, "curve reaches zero on instance " + std::to_string(found));
        min_r2 = std::min(min_r2, fit.r_squared);
        max_lambda = std::max(max_lambda, fit.lambda);
        v.require(fit.r_squared >= 0.99, "R^2 " + fmt(fit.r_squared) + " on instance " + std::to_string(found));
        v.require(fit.lambda < 1.0 - 1e-6, "lambda " + fmt(fit.lambda) + " on instance " + std::to_string(found));
    }
    v.require(found == 20, "only " + std::to_string(found) + " detectable instances");
    if (v.pass) {
        v.detail = "20 instances, min R^2 " + fmt(min_r2) + ", max lambda " + fmt(max_lambda);
    }
    return v;
}

Verdict ac6() {
    Verdict v;
    const std::vector<double> u{0.5, 0.5};
    std::vector<std::pair<Mmdp, StationaryPolicy>> cases;
    {
        auto m = sqrt_half_instance();
        auto pi = uniform_policy(m.model(0));
        cases.emplace_back(std::move(m), std::move(pi));
    }
    Rng rng(606, 0);
    for (int k = 0; k < 10; ++k) {
        auto m = random_mmdp(rng, 2, {5, 3, 3}, true);
        auto pi = random_policy(rng, m.model(0));
        cases.emplace_back(std::move(m), std::move(pi));
    }
    std::size_t checks = 0;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        const auto& [m, pi] = cases[k];
        const auto curve = bc_matrix(m.model(0), m.model(1), pi).curve(10);
        for (std::size_t t : {5, 10}) {
            const auto e = monte_carlo_error(m, StationaryController(pi), t, 10000, 6000 + k, u, u, default_threads());
            const auto b = error_bounds_binary(curve[t], 0.5, 0.5);
            ++checks;
            v.require(e.error >= b.lower - 3 * e.std_error && e.error <= b.upper_clamped() + 3 * e.std_error,
                      "case " + std::to_string(k) + " t=" + std::to_string(t) + ": " + fmt(e.error) + " outside [" +
                          fmt(b.lower) + ", " + fmt(b.upper_clamped()) + "]");
        }
    }
    if (v.pass) {
        v.detail = std::to_string(checks) + " estimates inside the bounds";
    }
    return v;
}

Verdict ac7() {
    Verdict v;
    Rng rng(707, 0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double b = rng.uniform();
        const auto multi = error_bounds_multi({{1, b}, {b, 1}}, {0.5, 0.5}, {0.5, 0.5});
        const auto bin = error_bounds_binary(b, 0.5, 0.5);
        worst = std::max({worst, std::abs(multi.lower - bin.lower), std::abs(multi.upper - bin.upper)});
    }
    v.require(worst <= 1e-14, "max deviation " + fmt(worst));
    if (v.pass) {
        v.detail = "max deviation " + fmt(worst);
    }
    return v;
}

Verdict ac8() {
    Verdict v;
    const auto m = gen_grid(grid_spec_from_json(load_json("grid_5x5.json")));
    const auto out = bi_apd(m, m.initial());
    v.require(out.exists, "no policy for the grid");
    if (!out.exists) {
        return v;
    }
    SimOptions options;
    options.max_steps = 2000;
    const auto batch = run_batch(m, DetectionController(*out.policy, m), std::nullopt, 400, 808, options,
                                 default_threads());
    const double stops = static_cast<double>(batch.threshold_stops) / 400.0;
    const double correct = batch.threshold_stops == 0
                               ? 0.0
                               : static_cast<double>(batch.correct_threshold_decisions) /
                                     static_cast<double>(batch.threshold_stops);
    v.require(correct >= 0.95, "correct " + fmt(correct));
    v.require(stops >= 0.99, "threshold stops " + fmt(stops));
    if (v.pass) {
        v.detail = "correct " + fmt(correct) + ", threshold stops " + fmt(stops);
    }
    return v;
}

Verdict ac9() {
    Verdict v;
    const auto m = gen_recsys(recsys_spec_from_json(load_json("recsys_10x6.json")));
    v.require(m.num_states() == 111, "state count " + std::to_string(m.num_states()));
    const auto out = general_apd(m, m.initial());
    v.require(out.exists, "no policy for the recommender");
    if (!out.exists) {
        return v;
    }
    const DetectionController controller(*out.policy, m);
    std::size_t stops = 0;
    std::size_t correct = 0;
    for (ModelIndex k = 0; k < m.size(); ++k) {
        const auto batch = run_batch(m, controller, k, 20, 909 + k, {}, default_threads());
        stops += batch.threshold_stops;
        correct += batch.correct_threshold_decisions;
    }
    const double rate = stops == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(stops);
    v.require(rate >= 0.95, "correct " + fmt(rate));
    const std::vector<double> u(m.size(), 1.0 / static_cast<double>(m.size()));
    const auto bounds = bounds_along(pairwise_bc_curve(m, *out.policy, 60), m.size(), u, u);
    bool dropped = false;
    for (std::size_t t = 1; t < bounds.size(); ++t) {
        const double prev = bounds[t - 1].upper_clamped();
        const double cur = bounds[t].upper_clamped();
        if (dropped) {
            v.require(cur <= prev + 1e-12, "upper bound rises at t=" + std::to_string(t));
        }
        dropped = dropped || cur < prev;
    }
    v.require(dropped, "upper bound never decreases");
    if (v.pass) {
        v.detail = "111 states, correct " + fmt(rate) + " of " + std::to_string(stops) + " stops, bound at t=60 " +
                   fmt(bounds.back().upper_clamped());
    }
    return v;
}

Mmdp revealing_toy() {
    const std::vector<std::string> states{"s", "l", "r"};
    const std::vector<std::vector<std::string>> actions{{"a"}, {"a"}, {"a"}};
    Table t1{{"s", {{"a", {{"l", 1.0}}}}}, {"l", {{"a", {{"l", 1.0}}}}}, {"r", {{"a", {{"r", 1.0}}}}}};
    Table t2 = t1;
    t2["s"]["a"] = {{"r", 1.0}};
    return Mmdp({mdp_from_table("M1", states, actions, t1, "s"), mdp_from_table("M2", states, actions, t2, "s")});
}

Verdict ac10() {
    Verdict v;
    const auto base = example1().model(0);
    for (std::size_t n : {2, 3}) {
        const auto m = replicate(base, n);
        v.require(!general_apd(m, 0).exists, "policy found for identical models, N=" + std::to_string(n));
        for (const auto& c : pairwise_bc_curve(m, uniform_policy(base), 30)) {
            for (auto b : c.values) {
                v.require(std::abs(b - 1.0) <= 1e-12, "coefficient below one, N=" + std::to_string(n));
            }
        }
    }
    const auto toy = revealing_toy();
    const auto pi = uniform_policy(toy.model(0));
    for (ModelIndex truth = 0; truth < 2; ++truth) {
        SimOptions options;
        options.max_steps = 1;
        options.stop_on_threshold = false;
        const auto trace = simulate(toy, truth, StationaryController(pi), 10 + truth, options);
        std::vector<double> unit(2, 0.0);
        unit[truth] = 1.0;
        v.require(trace.final_belief().b == unit, "belief did not collapse in one step");
    }
    if (v.pass) {
        v.detail = "identical models undetectable, revealing step collapses the belief";
    }
    return v;
}

Verdict ac11() {
    Verdict v;
    Rng rng(1111, 0);
    for (int k = 0; k < 50; ++k) {
        const auto m = random_mmdp(rng, 2, {6, 3, 3}, k % 2 == 0);
        const auto a = general_apd(m, 0);
        const auto b = bi_apd(m, 0);
        v.require(a.exists == b.exists && a.policy == b.policy, "general and binary differ on instance " +
                                                                     std::to_string(k));
    }
    std::size_t multi = 0;
    std::size_t positives = 0;
    for (int k = 0; multi < 20; ++k) {
        const std::size_t n = 3 + static_cast<std::size_t>(k % 2);
        const auto m = random_mmdp(rng, n, {8, 2, 3}, true);
        ++multi;
        const auto on = general_apd(m, 0, {true});
        const auto off = general_apd(m, 0, {false});
        v.require(on.exists == off.exists && on.policy == off.policy,
                  "memoization changes the result on instance " + std::to_string(k));
        if (!on.exists) {
            continue;
        }
        ++positives;
        for (ModelIndex i = 0; i < n; ++i) {
            for (ModelIndex j = i + 1; j < n; ++j) {
                v.require(bi_apd(m.restricted_to(ActiveSet::of({i, j})), 0).exists,
                          "pair without a binary policy on instance " + std::to_string(k));
            }
        }
    }
    v.require(positives > 0, "no detectable multi-model instance");
    if (v.pass) {
        v.detail = "50 binary equal, 20 memo on/off equal, necessity on " + std::to_string(positives);
    }
    return v;
}

struct Criterion {
    const char* id;
    const char* name;
    std::function<Verdict()> run;
    double limit_seconds;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"AC1", "example classification and preprocessing", ac1, 1.0},
        {"AC2", "example synthesis", ac2, 0.0},
        {"AC3", "coefficient is nonincreasing", ac3, 0.0},
        {"AC4", "matrix form equals history sum", ac4, 0.0},
        {"AC5", "geometric decay under detecting policies", ac5, 0.0},
        {"AC6", "Monte-Carlo error inside the bounds", ac6, 0.0},
        {"AC7", "multi-model bounds reduce to binary", ac7, 0.0},
        {"AC8", "grid intruder detection", ac8, 0.0},
        {"AC9", "recommender type detection", ac9, 0.0},
        {"AC10", "identical and revealing edge cases", ac10, 0.0},
        {"AC11", "general and binary synthesis agree", ac11, 0.0},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_seconds > 0.0 && secs > c.limit_seconds && v.pass) {
            v.pass = false;
            v.detail = "took longer than " + fmt(c.limit_seconds) + " s";
        }
        failures += v.pass ? 0 : 1;
        std::printf("[%s] %-5s %-45s %s (%.3f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}

#pragma once

#include <apd/apd.hpp>

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace apd::testing {

/// Builds a model from "state -> action -> {successor -> p}" tables.
using Table = std::map<std::string, std::map<std::string, std::map<std::string, double>>>;

inline Mdp mdp_from_table(const std::string& name, const std::vector<std::string>& states,
                          const std::vector<std::vector<std::string>>& actions, const Table& table,
                          const std::string& initial) {
    Mdp m;
    m.name = name;
    m.states = states;
    m.actions = actions;
    m.kernel.resize(states.size());
    for (StateIndex s = 0; s < states.size(); ++s) {
        for (const auto& a : actions[s]) {
            Distribution row;
            for (const auto& [t, p] : table.at(states[s]).at(a)) {
                row.push_back({*m.find_state(t), p});
            }
            m.kernel[s].push_back(normalize_layout(std::move(row)));
        }
    }
    m.initial = *m.find_state(initial);
    return m;
}

/// Seven-state binary example: informative (1,a1), (2,b2); revealing (5,b5).
inline Mmdp example1(const std::string& initial = "1") {
    const std::vector<std::string> states{"1", "2", "3", "4", "5", "6", "7"};
    const std::vector<std::vector<std::string>> actions{{"a1"}, {"a2", "b2"}, {"a3"}, {"a4"},
                                                        {"a5", "b5"}, {"a6"}, {"a7"}};
    Table common{{"3", {{"a3", {{"3", 0.5}, {"4", 0.5}}}}},
                 {"4", {{"a4", {{"4", 0.5}, {"3", 0.5}}}}},
                 {"6", {{"a6", {{"6", 1.0}}}}},
                 {"7", {{"a7", {{"7", 1.0}}}}}};
    Table t1 = common;
    t1["1"]["a1"] = {{"2", 0.7}, {"3", 0.3}};
    t1["2"]["a2"] = {{"2", 0.2}, {"5", 0.3}, {"6", 0.5}};
    t1["2"]["b2"] = {{"2", 0.5}, {"5", 0.5}};
    t1["5"]["a5"] = {{"5", 0.7}, {"7", 0.3}};
    t1["5"]["b5"] = {{"5", 1.0}};
    Table t2 = common;
    t2["1"]["a1"] = {{"2", 0.4}, {"3", 0.6}};
    t2["2"]["a2"] = {{"2", 0.2}, {"5", 0.3}, {"6", 0.5}};
    t2["2"]["b2"] = {{"2", 0.5}, {"6", 0.5}};
    t2["5"]["a5"] = {{"5", 0.3}, {"7", 0.7}};
    t2["5"]["b5"] = {{"7", 1.0}};
    return Mmdp({mdp_from_table("M1", states, actions, t1, initial), mdp_from_table("M2", states, actions, t2, initial)});
}

/// One state, one action; the second model leaks half its mass into an absorbing state.
inline Mmdp sqrt_half_instance() {
    const std::vector<std::string> states{"s", "s'"};
    const std::vector<std::vector<std::string>> actions{{"a"}, {"a"}};
    Table t1{{"s", {{"a", {{"s", 1.0}}}}}, {"s'", {{"a", {{"s'", 1.0}}}}}};
    Table t2{{"s", {{"a", {{"s", 0.5}, {"s'", 0.5}}}}}, {"s'", {{"a", {{"s'", 1.0}}}}}};
    return Mmdp({mdp_from_table("M1", states, actions, t1, "s"), mdp_from_table("M2", states, actions, t2, "s")});
}

inline Mmdp replicate(const Mdp& m, std::size_t n) {
    std::vector<Mdp> models;
    for (std::size_t i = 0; i < n; ++i) {
        auto copy = m;
        copy.name = "M" + std::to_string(i + 1);
        models.push_back(std::move(copy));
    }
    return Mmdp(std::move(models));
}

// ---- random instances --------------------------------------------------------

struct RandomShape {
    std::size_t max_states = 6;
    std::size_t max_actions = 3;
    std::size_t max_support = 3;
};

/// Random structure shared by all models: per (s, a) a nonempty successor set.
inline std::vector<std::vector<std::vector<StateIndex>>> random_structure(Rng& rng, std::size_t n,
                                                                          const RandomShape& shape) {
    std::vector<std::vector<std::vector<StateIndex>>> out(n);
    for (StateIndex s = 0; s < n; ++s) {
        const auto na = 1 + rng.below(shape.max_actions);
        for (std::size_t a = 0; a < na; ++a) {
            std::vector<StateIndex> all(n);
            for (StateIndex t = 0; t < n; ++t) {
                all[t] = t;
            }
            rng.shuffle(all);
            all.resize(1 + rng.below(std::min(shape.max_support, n)));
            std::sort(all.begin(), all.end());
            out[s].push_back(all);
        }
    }
    return out;
}

inline Distribution random_row(Rng& rng, const std::vector<StateIndex>& support) {
    Distribution row;
    double total = 0.0;
    for (auto t : support) {
        const double w = 0.05 + rng.uniform();
        row.push_back({t, w});
        total += w;
    }
    for (auto& e : row) {
        e.probability /= total;
    }
    return normalize_layout(std::move(row));
}

inline Mdp skeleton_mdp(const std::vector<std::vector<std::vector<StateIndex>>>& structure) {
    Mdp m;
    const auto n = structure.size();
    for (StateIndex s = 0; s < n; ++s) {
        m.states.push_back("s" + std::to_string(s));
        std::vector<std::string> acts;
        for (std::size_t a = 0; a < structure[s].size(); ++a) {
            acts.push_back("a" + std::to_string(a));
        }
        m.actions.push_back(acts);
    }
    m.kernel.resize(n);
    m.initial = 0;
    return m;
}

/**
 * N models on one random support structure. With `perturb_support`, each
 * model may also drop successors, creating revealing transitions.
 */
inline Mmdp random_mmdp(Rng& rng, std::size_t models, const RandomShape& shape, bool perturb_support = false) {
    const auto n = 2 + rng.below(shape.max_states - 1);
    const auto structure = random_structure(rng, n, shape);
    std::vector<Mdp> out;
    for (std::size_t i = 0; i < models; ++i) {
        auto m = skeleton_mdp(structure);
        m.name = "M" + std::to_string(i + 1);
        for (StateIndex s = 0; s < n; ++s) {
            for (const auto& support : structure[s]) {
                auto sup = support;
                if (perturb_support && sup.size() > 1 && rng.uniform() < 0.2) {
                    sup.erase(sup.begin() + static_cast<std::ptrdiff_t>(rng.below(sup.size())));
                }
                m.kernel[s].push_back(random_row(rng, sup));
            }
        }
        out.push_back(std::move(m));
    }
    return Mmdp(std::move(out));
}

/// Random stationary policy with some deterministic states.
inline StationaryPolicy random_policy(Rng& rng, const Mdp& m) {
    StationaryPolicy p;
    for (StateIndex s = 0; s < m.num_states(); ++s) {
        const auto na = m.num_actions(s);
        std::vector<double> row(na, 0.0);
        if (rng.uniform() < 0.3) {
            row[rng.below(na)] = 1.0;
        } else {
            double total = 0.0;
            for (auto& x : row) {
                x = rng.uniform() + 0.01;
                total += x;
            }
            for (auto& x : row) {
                x /= total;
            }
        }
        p.probabilities.push_back(row);
    }
    return p;
}

// ---- oracles -----------------------------------------------------------------

/// Max probability of eventually reaching `targets`, by value iteration.
inline std::vector<double> max_reach_probability(const TransitionSystem& ts, const StateSet& targets,
                                                 const std::vector<std::vector<std::vector<double>>>& probs,
                                                 std::size_t iterations = 20000) {
    const auto n = ts.num_states();
    std::vector<double> v(n, 0.0);
    for (StateIndex s = 0; s < n; ++s) {
        v[s] = targets.contains(s) ? 1.0 : 0.0;
    }
    for (std::size_t k = 0; k < iterations; ++k) {
        auto next = v;
        for (StateIndex s = 0; s < n; ++s) {
            if (targets.contains(s)) {
                continue;
            }
            double best = 0.0;
            for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
                double acc = 0.0;
                const auto& post = ts.post(s, a);
                for (std::size_t j = 0; j < post.size(); ++j) {
                    acc += probs[s][a][j] * v[post[j]];
                }
                best = std::max(best, acc);
            }
            next[s] = best;
        }
        v.swap(next);
    }
    return v;
}

/// Uniform weights over each post set, for value iteration on a transition system.
inline std::vector<std::vector<std::vector<double>>> uniform_weights(const TransitionSystem& ts) {
    std::vector<std::vector<std::vector<double>>> out(ts.num_states());
    for (StateIndex s = 0; s < ts.num_states(); ++s) {
        for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
            const auto k = ts.post(s, a).size();
            out[s].push_back(std::vector<double>(k, k ? 1.0 / static_cast<double>(k) : 0.0));
        }
    }
    return out;
}

/// Maximal end components by exhaustive search over (state, action) subsets; tiny systems only.
inline std::vector<Mec> brute_force_mecs(const TransitionSystem& ts) {
    std::vector<StateAction> pairs;
    for (StateIndex s = 0; s < ts.num_states(); ++s) {
        for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
            if (!ts.post(s, a).empty()) {
                pairs.push_back({s, a});
            }
        }
    }
    if (pairs.size() > 16) {
        throw std::logic_error("brute_force_mecs: too many pairs");
    }
    auto is_end_component = [&](std::uint32_t mask) {
        if (mask == 0) {
            return false;
        }
        std::set<StateIndex> states;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            if (mask & (1U << k)) {
                states.insert(pairs[k].state);
            }
        }
        std::map<StateIndex, std::set<StateIndex>> edges;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            if (mask & (1U << k)) {
                for (auto t : ts.post(pairs[k].state, pairs[k].action)) {
                    if (!states.contains(t)) {
                        return false;
                    }
                    edges[pairs[k].state].insert(t);
                }
            }
        }
        for (auto from : states) {
            std::set<StateIndex> seen{from};
            std::vector<StateIndex> stack{from};
            while (!stack.empty()) {
                auto s = stack.back();
                stack.pop_back();
                for (auto t : edges[s]) {
                    if (seen.insert(t).second) {
                        stack.push_back(t);
                    }
                }
            }
            if (seen != states) {
                return false;
            }
        }
        return true;
    };
    std::vector<std::uint32_t> ecs;
    for (std::uint32_t mask = 1; mask < (1U << pairs.size()); ++mask) {
        if (is_end_component(mask)) {
            ecs.push_back(mask);
        }
    }
    std::vector<Mec> out;
    for (auto mask : ecs) {
        bool maximal = true;
        for (auto other : ecs) {
            if (other != mask && (other & mask) == mask) {
                maximal = false;
                break;
            }
        }
        if (!maximal) {
            continue;
        }
        Mec mec;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            if (mask & (1U << k)) {
                mec.choices[pairs[k].state].push_back(pairs[k].action);
            }
        }
        out.push_back(std::move(mec));
    }
    std::sort(out.begin(), out.end(),
              [](const Mec& a, const Mec& b) { return a.choices.begin()->first < b.choices.begin()->first; });
    return out;
}

/// Random transition system on up to `n` states with at most 2 actions each.
inline TransitionSystem random_transition_system(Rng& rng, std::size_t n) {
    TransitionSystem ts;
    for (StateIndex s = 0; s < n; ++s) {
        const auto na = 1 + rng.below(2);
        std::vector<std::string> acts;
        for (std::size_t a = 0; a < na; ++a) {
            acts.push_back("a" + std::to_string(a));
        }
        ts.add_state("s" + std::to_string(s), acts);
    }
    for (StateIndex s = 0; s < n; ++s) {
        for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
            const auto k = 1 + rng.below(2);
            for (std::size_t j = 0; j < k; ++j) {
                ts.add_transition(s, a, rng.below(n));
            }
        }
    }
    return ts;
}

/**
 * Controller state of a DetectionPolicy recomputed from a whole history, with
 * no incremental bookkeeping: the active set is every model consistent with
 * the history; the entry point is where it last changed; the committed MEC is
 * the first entry MEC containing a state visited since then.
 */
inline std::vector<double> oracle_detection_weights(const Mmdp& m, const DetectionPolicy& policy, const History& h) {
    ActiveSet active = m.all_models();
    std::size_t entered = 0;
    for (std::size_t k = 0; k < h.actions.size(); ++k) {
        ActiveSet next;
        for (auto i : active.indices()) {
            if (m.model(i).probability(h.states[k], h.actions[k], h.states[k + 1]) > 0.0) {
                next.insert(i);
            }
        }
        if (next != active) {
            active = next;
            entered = k + 1;
        }
    }
    const auto s = h.states.back();
    if (active.size() < 2) {
        return {};
    }
    const auto* entry = policy.find(active, h.states[entered]);
    if (entry == nullptr) {
        return {};
    }
    for (std::size_t k = entered; k < h.states.size(); ++k) {
        for (const auto& mec : entry->mecs) {
            if (mec.contains(h.states[k])) {
                std::vector<double> w(m.num_actions(s), 0.0);
                const auto& acts = mec.actions.at(s);
                for (auto a : acts) {
                    w[a] = 1.0 / static_cast<double>(acts.size());
                }
                return w;
            }
        }
    }
    std::vector<double> w(m.num_actions(s), 0.0);
    w[entry->reach.at(s)] = 1.0;
    return w;
}

/// B_ij(t) by enumerating histories under the history-recomputed detection controller.
inline double oracle_pairwise_bc(const Mmdp& m, const DetectionPolicy& policy, ModelIndex i, ModelIndex j,
                                 std::size_t t) {
    return bc_exact(
        m.model(i), m.model(j), [&](const History& h) { return oracle_detection_weights(m, policy, h); }, t, 6);
}

}  // namespace apd::testing

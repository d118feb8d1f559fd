#pragma once

#include <apd/model.hpp>

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <utility>
#include <vector>

namespace apd {

/// End component: states X with nonempty action subsets U_s.
struct Mec {
    std::map<StateIndex, std::vector<ActionIndex>> choices;

    [[nodiscard]] std::vector<StateIndex> states() const {
        std::vector<StateIndex> out;
        out.reserve(choices.size());
        for (const auto& [s, _] : choices) {
            out.push_back(s);
        }
        return out;
    }
    [[nodiscard]] bool contains(StateIndex s) const { return choices.contains(s); }
    [[nodiscard]] bool contains(StateIndex s, ActionIndex a) const {
        auto it = choices.find(s);
        return it != choices.end() && std::binary_search(it->second.begin(), it->second.end(), a);
    }
    [[nodiscard]] std::size_t size() const { return choices.size(); }

    bool operator==(const Mec&) const = default;
};

/// Deterministic choice on a subset of states.
struct PartialDeterministicPolicy {
    std::map<StateIndex, ActionIndex> choice;

    [[nodiscard]] bool defined_at(StateIndex s) const { return choice.contains(s); }
};

/// Uniform action distribution over U_s at every state of a Mec.
struct MecUniformPolicy {
    Mec mec;
    std::map<StateIndex, std::vector<std::pair<ActionIndex, double>>> distribution;

    [[nodiscard]] double probability(StateIndex s, ActionIndex a) const {
        auto it = distribution.find(s);
        if (it == distribution.end()) {
            return 0.0;
        }
        for (const auto& [act, p] : it->second) {
            if (act == a) {
                return p;
            }
        }
        return 0.0;
    }
};

namespace detail {

/// Iterative Tarjan; returns the component id of every node (unreached/excluded nodes get npos).
inline std::vector<std::size_t> strongly_connected_components(const std::vector<std::vector<StateIndex>>& adjacency,
                                                              const std::vector<bool>& included) {
    constexpr auto npos = std::numeric_limits<std::size_t>::max();
    const auto n = adjacency.size();
    std::vector<std::size_t> index(n, npos), low(n, 0), component(n, npos);
    std::vector<bool> on_stack(n, false);
    std::vector<StateIndex> stack;
    std::vector<std::pair<StateIndex, std::size_t>> frames;
    std::size_t next_index = 0;
    std::size_t next_component = 0;

    for (StateIndex root = 0; root < n; ++root) {
        if (!included[root] || index[root] != npos) {
            continue;
        }
        frames.emplace_back(root, 0);
        index[root] = low[root] = next_index++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!frames.empty()) {
            auto& [v, edge] = frames.back();
            if (edge < adjacency[v].size()) {
                const auto w = adjacency[v][edge++];
                if (!included[w]) {
                    continue;
                }
                if (index[w] == npos) {
                    index[w] = low[w] = next_index++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    frames.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
                continue;
            }
            const auto finished = v;
            frames.pop_back();
            if (!frames.empty()) {
                auto parent = frames.back().first;
                low[parent] = std::min(low[parent], low[finished]);
            }
            if (low[finished] == index[finished]) {
                StateIndex w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    component[w] = next_component;
                } while (w != finished);
                ++next_component;
            }
        }
    }
    return component;
}

inline bool post_within(const std::vector<StateIndex>& post, const StateSet& set) {
    return std::all_of(post.begin(), post.end(), [&](StateIndex t) { return set.contains(t); });
}

inline bool post_hits(const std::vector<StateIndex>& post, const StateSet& set) {
    return std::any_of(post.begin(), post.end(), [&](StateIndex t) { return set.contains(t); });
}

}  // namespace detail

/**
 * Maximal end component decomposition by iterated SCC refinement.
 *
 * Each round computes SCCs of the graph induced by the still-enabled actions,
 * disables every action that can leave its state's SCC, and drops states with
 * no enabled action left. The fixpoint SCCs are the MECs. Output is sorted by
 * smallest member state.
 */
inline std::vector<Mec> mec_decompose(const TransitionSystem& ts) {
    const auto n = ts.num_states();
    std::vector<std::vector<bool>> enabled(n);
    std::vector<bool> alive(n, false);
    for (StateIndex s = 0; s < n; ++s) {
        enabled[s].assign(ts.num_actions(s), true);
        for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
            if (ts.post(s, a).empty()) {
                enabled[s][a] = false;
            }
        }
        alive[s] = std::find(enabled[s].begin(), enabled[s].end(), true) != enabled[s].end();
    }

    std::vector<std::size_t> component;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<std::vector<StateIndex>> adjacency(n);
        for (StateIndex s = 0; s < n; ++s) {
            if (!alive[s]) {
                continue;
            }
            for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
                if (enabled[s][a]) {
                    for (auto t : ts.post(s, a)) {
                        adjacency[s].push_back(t);
                    }
                }
            }
        }
        component = detail::strongly_connected_components(adjacency, alive);
        for (StateIndex s = 0; s < n; ++s) {
            if (!alive[s]) {
                continue;
            }
            bool any = false;
            for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
                if (!enabled[s][a]) {
                    continue;
                }
                for (auto t : ts.post(s, a)) {
                    if (!alive[t] || component[t] != component[s]) {
                        enabled[s][a] = false;
                        changed = true;
                        break;
                    }
                }
                any = any || enabled[s][a];
            }
            if (!any) {
                alive[s] = false;
                changed = true;
            }
        }
    }

    std::map<std::size_t, Mec> by_component;
    for (StateIndex s = 0; s < n; ++s) {
        if (!alive[s]) {
            continue;
        }
        auto& acts = by_component[component[s]].choices[s];
        for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
            if (enabled[s][a]) {
                acts.push_back(a);
            }
        }
    }
    std::vector<Mec> out;
    for (auto& [_, mec] : by_component) {
        out.push_back(std::move(mec));
    }
    std::sort(out.begin(), out.end(),
              [](const Mec& a, const Mec& b) { return a.choices.begin()->first < b.choices.begin()->first; });
    return out;
}

/**
 * States from which some policy reaches `targets` with probability one.
 *
 * Greatest fixpoint over candidate sets U of the least fixpoint "targets, or
 * has an action staying inside U that hits the current layer". Only the
 * support structure is consulted.
 */
inline StateSet almost_sure_reach_set(const TransitionSystem& ts, const StateSet& targets) {
    const auto n = ts.num_states();
    if (targets.universe() != n) {
        throw ContractError("target set does not match transition system size");
    }
    StateSet candidate = StateSet::all(n);
    while (true) {
        StateSet reach = targets;
        bool grew = true;
        while (grew) {
            grew = false;
            for (StateIndex s = 0; s < n; ++s) {
                if (!candidate.contains(s) || reach.contains(s)) {
                    continue;
                }
                for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
                    const auto& post = ts.post(s, a);
                    if (!post.empty() && detail::post_within(post, candidate) && detail::post_hits(post, reach)) {
                        reach.insert(s);
                        grew = true;
                        break;
                    }
                }
            }
        }
        if (reach == candidate) {
            return candidate;
        }
        candidate = reach;
    }
}

/**
 * Deterministic policy on rmax \ targets that reaches targets almost surely.
 *
 * Admissible actions keep their whole support inside rmax. Among them the one
 * whose successors come closest to the targets (BFS layers over admissible
 * edges) is chosen, ties going to the smaller action identifier.
 */
inline PartialDeterministicPolicy reach_policy(const TransitionSystem& ts, const StateSet& targets,
                                               const StateSet& rmax) {
    const auto n = ts.num_states();
    if (!(almost_sure_reach_set(ts, targets) == rmax)) {
        throw ContractError("reach_policy: rmax is not the almost-sure reach set of the targets");
    }
    constexpr auto inf = std::numeric_limits<std::size_t>::max();

    std::vector<std::vector<std::pair<StateIndex, ActionIndex>>> predecessors(n);
    for (StateIndex s = 0; s < n; ++s) {
        if (!rmax.contains(s) || targets.contains(s)) {
            continue;
        }
        for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
            const auto& post = ts.post(s, a);
            if (!post.empty() && detail::post_within(post, rmax)) {
                for (auto t : post) {
                    predecessors[t].emplace_back(s, a);
                }
            }
        }
    }

    std::vector<std::size_t> distance(n, inf);
    std::deque<StateIndex> queue;
    for (auto t : targets.members()) {
        distance[t] = 0;
        queue.push_back(t);
    }
    while (!queue.empty()) {
        const auto t = queue.front();
        queue.pop_front();
        for (const auto& [s, _] : predecessors[t]) {
            if (distance[s] == inf) {
                distance[s] = distance[t] + 1;
                queue.push_back(s);
            }
        }
    }

    PartialDeterministicPolicy policy;
    for (StateIndex s = 0; s < n; ++s) {
        if (!rmax.contains(s) || targets.contains(s)) {
            continue;
        }
        std::size_t best_distance = inf;
        std::optional<ActionIndex> best;
        for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
            const auto& post = ts.post(s, a);
            if (post.empty() || !detail::post_within(post, rmax)) {
                continue;
            }
            std::size_t d = inf;
            for (auto t : post) {
                d = std::min(d, distance[t]);
            }
            if (d < best_distance || (d == best_distance && d != inf && ts.actions[s][a] < ts.actions[s][*best])) {
                best_distance = d;
                best = a;
            }
        }
        if (!best || best_distance == inf || best_distance >= distance[s]) {
            throw ContractError("reach_policy: no progressing admissible action at state " + ts.states[s]);
        }
        policy.choice[s] = *best;
    }
    return policy;
}

inline MecUniformPolicy mec_uniform_policy(const Mec& mec) {
    MecUniformPolicy out;
    out.mec = mec;
    for (const auto& [s, acts] : mec.choices) {
        if (acts.empty()) {
            throw ContractError("mec_uniform_policy: empty action set in MEC");
        }
        const double p = 1.0 / static_cast<double>(acts.size());
        auto& row = out.distribution[s];
        for (auto a : acts) {
            row.emplace_back(a, p);
        }
    }
    return out;
}

/// States reachable from `from` under some policy.
inline StateSet reachable_states(const TransitionSystem& ts, StateIndex from) {
    StateSet seen(ts.num_states());
    std::deque<StateIndex> queue{from};
    seen.insert(from);
    while (!queue.empty()) {
        const auto s = queue.front();
        queue.pop_front();
        for (ActionIndex a = 0; a < ts.num_actions(s); ++a) {
            for (auto t : ts.post(s, a)) {
                if (seen.insert(t)) {
                    queue.push_back(t);
                }
            }
        }
    }
    return seen;
}

inline StateSet states_of(const std::vector<Mec>& mecs, std::size_t universe) {
    StateSet out(universe);
    for (const auto& mec : mecs) {
        for (const auto& [s, _] : mec.choices) {
            out.insert(s);
        }
    }
    return out;
}

}  // namespace apd

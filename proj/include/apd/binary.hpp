#pragma once

#include <apd/graph.hpp>
#include <apd/policy.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace apd {

enum class PairKind { neutral, informative, revealing };
enum class StateKind { plain, informative, revealing };

/// Per-pair and per-state labels for a pair of models.
struct SaClassification {
    std::vector<std::vector<PairKind>> pairs;  // [state][action]
    std::vector<StateKind> states;
    /// Lexicographically first revealing action of every revealing state.
    std::map<StateIndex, ActionIndex> chosen_revealing;

    [[nodiscard]] PairKind kind(StateIndex s, ActionIndex a) const { return pairs.at(s).at(a); }

    [[nodiscard]] std::set<StateAction> pairs_of_kind(PairKind k) const {
        std::set<StateAction> out;
        for (StateIndex s = 0; s < pairs.size(); ++s) {
            for (ActionIndex a = 0; a < pairs[s].size(); ++a) {
                if (pairs[s][a] == k) {
                    out.insert({s, a});
                }
            }
        }
        return out;
    }

    /// Informative pairs at states that are not revealing.
    [[nodiscard]] std::set<StateAction> isa() const {
        std::set<StateAction> out;
        for (const auto& p : pairs_of_kind(PairKind::informative)) {
            if (states[p.state] != StateKind::revealing) {
                out.insert(p);
            }
        }
        return out;
    }
};

inline bool supports_intersect(const Distribution& p, const Distribution& q) {
    auto i = p.begin();
    auto j = q.begin();
    while (i != p.end() && j != q.end()) {
        if (i->state == j->state) {
            return true;
        }
        if (i->state < j->state) {
            ++i;
        } else {
            ++j;
        }
    }
    return false;
}

/// Entrywise comparison over the union of supports.
inline bool distributions_differ(const Distribution& p, const Distribution& q, double tol = kDistributionTolerance) {
    auto i = p.begin();
    auto j = q.begin();
    while (i != p.end() || j != q.end()) {
        if (j == q.end() || (i != p.end() && i->state < j->state)) {
            if (i->probability > tol) {
                return true;
            }
            ++i;
        } else if (i == p.end() || j->state < i->state) {
            if (j->probability > tol) {
                return true;
            }
            ++j;
        } else {
            if (std::abs(i->probability - j->probability) > tol) {
                return true;
            }
            ++i;
            ++j;
        }
    }
    return false;
}

inline PairKind classify_rows(const Distribution& p, const Distribution& q) {
    if (!supports_intersect(p, q)) {
        return PairKind::revealing;
    }
    return distributions_differ(p, q) ? PairKind::informative : PairKind::neutral;
}

inline SaClassification classify_pairs(const Mdp& m1, const Mdp& m2) {
    if (!m1.same_structure(m2)) {
        throw ContractError("classify_pairs: models do not share one structure");
    }
    SaClassification out;
    const auto n = m1.num_states();
    out.pairs.resize(n);
    out.states.assign(n, StateKind::plain);
    for (StateIndex s = 0; s < n; ++s) {
        out.pairs[s].resize(m1.num_actions(s));
        bool revealing = false;
        bool informative = false;
        for (ActionIndex a = 0; a < m1.num_actions(s); ++a) {
            const auto kind = classify_rows(m1.row(s, a), m2.row(s, a));
            out.pairs[s][a] = kind;
            if (kind == PairKind::revealing) {
                revealing = true;
                auto it = out.chosen_revealing.find(s);
                if (it == out.chosen_revealing.end() || m1.actions[s][a] < m1.actions[s][it->second]) {
                    out.chosen_revealing[s] = a;
                }
            }
            informative = informative || kind == PairKind::informative;
        }
        if (revealing) {
            out.states[s] = StateKind::revealing;
        } else if (informative) {
            out.states[s] = StateKind::informative;
        }
    }
    return out;
}

/**
 * Pair of models after revealing-action pruning and rerouting of
 * identity-revealing mass to the terminals ⊥1 / ⊥2.
 */
struct PreprocessedPair {
    Mdp first;
    Mdp second;
    StateIndex terminal_first = 0;
    StateIndex terminal_second = 0;
    std::size_t original_states = 0;
    /// Informative pairs of the preprocessed models plus both terminal pairs.
    std::set<StateAction> isa;
    /// original_action[s][a'] is the original action behind preprocessed action a' (s < original_states).
    std::vector<std::vector<ActionIndex>> original_action;
    SaClassification classification;

    /// ISA^p without the terminal pairs, in original action indices.
    [[nodiscard]] std::set<StateAction> isa_original() const {
        std::set<StateAction> out;
        for (const auto& sa : isa) {
            if (sa.state < original_states) {
                out.insert({sa.state, original_action[sa.state][sa.action]});
            }
        }
        return out;
    }
};

namespace detail {

inline std::string fresh_name(const std::vector<std::string>& taken, std::string candidate) {
    while (std::find(taken.begin(), taken.end(), candidate) != taken.end()) {
        candidate += "'";
    }
    return candidate;
}

}  // namespace detail

inline PreprocessedPair preprocess(const Mdp& m1, const Mdp& m2) {
    PreprocessedPair out;
    out.classification = classify_pairs(m1, m2);
    const auto& cls = out.classification;
    const auto n = m1.num_states();
    out.original_states = n;
    out.terminal_first = n;
    out.terminal_second = n + 1;

    std::vector<std::string> states = m1.states;
    const auto bottom1 = detail::fresh_name(states, "⊥1");
    states.push_back(bottom1);
    const auto bottom2 = detail::fresh_name(states, "⊥2");
    states.push_back(bottom2);

    std::vector<std::vector<std::string>> actions(n + 2);
    out.original_action.resize(n);
    for (StateIndex s = 0; s < n; ++s) {
        if (cls.states[s] == StateKind::revealing) {
            const auto a = cls.chosen_revealing.at(s);
            actions[s] = {m1.actions[s][a]};
            out.original_action[s] = {a};
        } else {
            actions[s] = m1.actions[s];
            for (ActionIndex a = 0; a < m1.num_actions(s); ++a) {
                out.original_action[s].push_back(a);
            }
        }
    }
    actions[n] = {"a" + bottom1};
    actions[n + 1] = {"a" + bottom2};

    auto build = [&](const Mdp& self, const Mdp& other, StateIndex own_terminal, std::string name) {
        Mdp p;
        p.name = std::move(name);
        p.states = states;
        p.actions = actions;
        p.initial = self.initial;
        p.kernel.resize(n + 2);
        for (StateIndex s = 0; s < n; ++s) {
            for (auto a : out.original_action[s]) {
                const auto& own = self.row(s, a);
                const auto& alt = other.row(s, a);
                Distribution row;
                switch (cls.kind(s, a)) {
                    case PairKind::revealing:
                        row = {{own_terminal, 1.0}};
                        break;
                    case PairKind::informative: {
                        double rerouted = 0.0;
                        for (const auto& e : own) {
                            if (probability_of(alt, e.state) > 0.0) {
                                row.push_back(e);
                            } else {
                                rerouted += e.probability;
                            }
                        }
                        if (rerouted > 0.0) {
                            row.push_back({own_terminal, rerouted});
                        }
                        break;
                    }
                    case PairKind::neutral:
                        row = own;
                        break;
                }
                p.kernel[s].push_back(normalize_layout(std::move(row)));
            }
        }
        p.kernel[n] = {{{n, 1.0}}};
        p.kernel[n + 1] = {{{n + 1, 1.0}}};
        return p;
    };
    out.first = build(m1, m2, out.terminal_first, m1.name + "^p");
    out.second = build(m2, m1, out.terminal_second, m2.name + "^p");

    const auto after = classify_pairs(out.first, out.second);
    out.isa = after.isa();
    out.isa.insert({out.terminal_first, 0});
    out.isa.insert({out.terminal_second, 0});
    return out;
}

/// Union of the supports of both preprocessed kernels.
inline TransitionSystem informative_structure(const PreprocessedPair& p) {
    auto ts = induced_transition_system(p.first);
    const auto& second = p.second;
    for (StateIndex s = 0; s < second.num_states(); ++s) {
        for (ActionIndex a = 0; a < second.num_actions(s); ++a) {
            for (const auto& e : second.row(s, a)) {
                ts.add_transition(s, a, e.state);
            }
        }
    }
    return ts;
}

/// The mixture gamma * first + (1 - gamma) * second as an explicit Mdp.
inline Mdp informative_mdp(const PreprocessedPair& p, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ContractError("informative_mdp: gamma must lie in (0,1)");
    }
    Mdp out = p.first;
    out.name = "informative";
    for (StateIndex s = 0; s < out.num_states(); ++s) {
        for (ActionIndex a = 0; a < out.num_actions(s); ++a) {
            Distribution row;
            for (const auto& e : p.first.row(s, a)) {
                row.push_back({e.state, gamma * e.probability});
            }
            for (const auto& e : p.second.row(s, a)) {
                row.push_back({e.state, (1.0 - gamma) * e.probability});
            }
            out.kernel[s][a] = normalize_layout(std::move(row));
        }
    }
    return out;
}

/// MECs of `ts` that contain at least one pair of `isa`.
inline std::vector<Mec> informative_mecs(const TransitionSystem& ts, const std::set<StateAction>& isa) {
    std::vector<Mec> out;
    for (auto& mec : mec_decompose(ts)) {
        const bool hit = std::any_of(isa.begin(), isa.end(),
                                     [&](const StateAction& sa) { return mec.contains(sa.state, sa.action); });
        if (hit) {
            out.push_back(std::move(mec));
        }
    }
    return out;
}

namespace detail {

/// Runs the MEC / reachability / policy stages shared by the binary and base-case algorithms.
struct QualitativeSolution {
    std::vector<Mec> mecs;
    std::vector<Mec> informative;
    StateSet reach_set;
    bool exists = false;
    PartialDeterministicPolicy reach;
};

template <class IsInformative>
QualitativeSolution solve_structure(const TransitionSystem& ts, StateIndex initial, IsInformative&& is_informative) {
    QualitativeSolution out;
    out.mecs = mec_decompose(ts);
    for (const auto& mec : out.mecs) {
        if (is_informative(mec)) {
            out.informative.push_back(mec);
        }
    }
    const auto targets = states_of(out.informative, ts.num_states());
    out.reach_set = almost_sure_reach_set(ts, targets);
    out.exists = out.reach_set.contains(initial);
    if (out.exists) {
        out.reach = reach_policy(ts, targets, out.reach_set);
    }
    return out;
}

}  // namespace detail

/**
 * Decides whether some policy achieves asymptotically perfect detection for a
 * pair of models from `initial`, and synthesizes one when it does.
 *
 * The returned policy acts on the original models: its single entry is keyed
 * by ({0,1}, initial), carries the reach fragment on R^max minus the
 * informative MECs, and one uniform fragment per non-terminal informative MEC.
 */
inline ApdOutcome bi_apd(const Mmdp& m, StateIndex initial) {
    if (m.size() != 2) {
        throw ContractError("bi_apd needs exactly 2 models, got " + std::to_string(m.size()));
    }
    require_valid(m);
    if (initial >= m.num_states()) {
        throw ContractError("bi_apd: initial state out of range");
    }
    const auto pre = preprocess(m.model(0), m.model(1));
    auto ts = informative_structure(pre);
    ts.initial = initial;
    const auto& isa = pre.isa;
    auto solution = detail::solve_structure(ts, initial, [&](const Mec& mec) {
        return std::any_of(isa.begin(), isa.end(), [&](const StateAction& sa) { return mec.contains(sa.state, sa.action); });
    });

    ApdOutcome outcome;
    outcome.exists = solution.exists;
    if (solution.exists) {
        PolicyEntry entry;
        entry.active = ActiveSet::full(2);
        entry.entry_state = initial;
        for (const auto& [s, a] : solution.reach.choice) {
            if (s < pre.original_states) {
                entry.reach[s] = pre.original_action[s][a];
            }
        }
        for (const auto& mec : solution.informative) {
            if (!(mec.choices.begin()->first < pre.original_states)) {
                continue;
            }
            PolicyMec fragment;
            for (const auto& [s, acts] : mec.choices) {
                auto& list = fragment.actions[s];
                for (auto a : acts) {
                    list.push_back(pre.original_action[s][a]);
                }
                std::sort(list.begin(), list.end());
            }
            entry.mecs.push_back(std::move(fragment));
        }
        DetectionPolicy policy;
        policy.insert(std::move(entry));
        outcome.policy = std::move(policy);
    } else {
        outcome.diagnostics.trap_witness = find_trap_witness(ts, initial, solution.mecs, solution.informative);
    }
    outcome.diagnostics.structure = std::move(ts);
    outcome.diagnostics.mecs = std::move(solution.mecs);
    outcome.diagnostics.informative_mecs = std::move(solution.informative);
    outcome.diagnostics.reach_set = std::move(solution.reach_set);
    return outcome;
}

}  // namespace apd

#pragma once

#include <apd/core.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace apd {

struct Successor {
    StateIndex state = 0;
    double probability = 0.0;

    bool operator==(const Successor&) const = default;
};

/// Sparse distribution over successor states, sorted by state, zero entries absent.
using Distribution = std::vector<Successor>;

inline double probability_of(const Distribution& dist, StateIndex s) {
    auto it = std::lower_bound(dist.begin(), dist.end(), s,
                               [](const Successor& e, StateIndex v) { return e.state < v; });
    return (it != dist.end() && it->state == s) ? it->probability : 0.0;
}

inline double total_mass(const Distribution& dist) {
    double sum = 0.0;
    for (const auto& e : dist) {
        sum += e.probability;
    }
    return sum;
}

/// Sorts by state, merges duplicates and drops zero entries.
inline Distribution normalize_layout(Distribution dist) {
    std::sort(dist.begin(), dist.end(),
              [](const Successor& a, const Successor& b) { return a.state < b.state; });
    Distribution out;
    for (const auto& e : dist) {
        if (!out.empty() && out.back().state == e.state) {
            out.back().probability += e.probability;
        } else {
            out.push_back(e);
        }
    }
    std::erase_if(out, [](const Successor& e) { return e.probability == 0.0; });
    return out;
}

inline std::vector<StateIndex> support(const Distribution& dist) {
    std::vector<StateIndex> out;
    out.reserve(dist.size());
    for (const auto& e : dist) {
        out.push_back(e.state);
    }
    return out;
}

/**
 * Finite MDP with named states and per-state named actions.
 *
 * Identifiers are interned: states are addressed by their position in
 * `states`, actions by their position in `actions[s]`. The struct is a plain
 * value; construct it, run validate_mmdp, then treat it as immutable.
 */
struct Mdp {
    std::string name;
    std::vector<std::string> states;
    std::vector<std::vector<std::string>> actions;
    std::vector<std::vector<Distribution>> kernel;  // [state][action]
    StateIndex initial = 0;

    [[nodiscard]] std::size_t num_states() const { return states.size(); }
    [[nodiscard]] std::size_t num_actions(StateIndex s) const { return actions.at(s).size(); }
    [[nodiscard]] const Distribution& row(StateIndex s, ActionIndex a) const { return kernel.at(s).at(a); }
    [[nodiscard]] double probability(StateIndex s, ActionIndex a, StateIndex next) const {
        return probability_of(row(s, a), next);
    }

    [[nodiscard]] std::optional<StateIndex> find_state(const std::string& id) const {
        auto it = std::find(states.begin(), states.end(), id);
        if (it == states.end()) {
            return std::nullopt;
        }
        return static_cast<StateIndex>(it - states.begin());
    }

    [[nodiscard]] std::optional<ActionIndex> find_action(StateIndex s, const std::string& id) const {
        const auto& acts = actions.at(s);
        auto it = std::find(acts.begin(), acts.end(), id);
        if (it == acts.end()) {
            return std::nullopt;
        }
        return static_cast<ActionIndex>(it - acts.begin());
    }

    [[nodiscard]] bool same_structure(const Mdp& other) const {
        return states == other.states && actions == other.actions && initial == other.initial;
    }
};

/// Finite family of MDPs over one shared state/action skeleton.
class Mmdp {
public:
    Mmdp() = default;
    explicit Mmdp(std::vector<Mdp> models) : models_(std::move(models)) {}

    [[nodiscard]] std::size_t size() const { return models_.size(); }
    [[nodiscard]] const std::vector<Mdp>& models() const { return models_; }
    [[nodiscard]] const Mdp& model(ModelIndex i) const { return models_.at(i); }

    [[nodiscard]] const std::vector<std::string>& states() const { return models_.at(0).states; }
    [[nodiscard]] std::size_t num_states() const { return models_.at(0).num_states(); }
    [[nodiscard]] const std::vector<std::string>& actions(StateIndex s) const { return models_.at(0).actions.at(s); }
    [[nodiscard]] std::size_t num_actions(StateIndex s) const { return models_.at(0).num_actions(s); }
    [[nodiscard]] StateIndex initial() const { return models_.at(0).initial; }
    [[nodiscard]] const Mdp& skeleton() const { return models_.at(0); }

    [[nodiscard]] ActiveSet all_models() const { return ActiveSet::full(size()); }

    /// Same kernels, different initial state.
    [[nodiscard]] Mmdp with_initial(StateIndex s) const {
        Mmdp out = *this;
        for (auto& m : out.models_) {
            m.initial = s;
        }
        return out;
    }

    /// Models listed in `subset`, in increasing index order.
    [[nodiscard]] Mmdp restricted_to(ActiveSet subset) const {
        std::vector<Mdp> picked;
        for (auto i : subset.indices()) {
            picked.push_back(models_.at(i));
        }
        return Mmdp(std::move(picked));
    }

    /// Models whose transition probability for (s, a, next) is strictly positive.
    [[nodiscard]] ActiveSet possible_models(ActiveSet among, StateIndex s, ActionIndex a, StateIndex next) const {
        ActiveSet out;
        for (auto i : among.indices()) {
            if (models_[i].probability(s, a, next) > 0.0) {
                out.insert(i);
            }
        }
        return out;
    }

private:
    std::vector<Mdp> models_;
};

struct Violation {
    std::string where;
    std::string message;
};

namespace detail {

inline std::string describe_state(const Mdp& m, StateIndex s) {
    return s < m.states.size() ? m.states[s] : "#" + std::to_string(s);
}

inline void validate_mdp(const Mdp& m, const std::string& prefix, std::vector<Violation>& out) {
    const auto n = m.states.size();
    if (n == 0) {
        out.push_back({prefix, "model has no states"});
        return;
    }
    if (m.initial >= n) {
        out.push_back({prefix, "initial state outside state set"});
    }
    if (m.actions.size() != n) {
        out.push_back({prefix, "action table size " + std::to_string(m.actions.size()) + " differs from state count " +
                                   std::to_string(n)});
    }
    if (m.kernel.size() != n) {
        out.push_back({prefix, "kernel has entries for " + std::to_string(m.kernel.size()) + " states, expected " +
                                   std::to_string(n)});
    }
    const auto rows = std::min({n, m.actions.size(), m.kernel.size()});
    for (StateIndex s = 0; s < rows; ++s) {
        const auto where_s = prefix + " state " + m.states[s];
        if (m.actions[s].empty()) {
            out.push_back({where_s, "empty action set"});
        }
        if (m.kernel[s].size() != m.actions[s].size()) {
            out.push_back({where_s, "kernel key without matching action (" + std::to_string(m.kernel[s].size()) +
                                        " rows for " + std::to_string(m.actions[s].size()) + " actions)"});
        }
        const auto acts = std::min(m.kernel[s].size(), m.actions[s].size());
        for (ActionIndex a = 0; a < acts; ++a) {
            const auto where = where_s + " action " + m.actions[s][a];
            double sum = 0.0;
            StateIndex previous = 0;
            bool first = true;
            for (const auto& e : m.kernel[s][a]) {
                if (e.state >= n) {
                    out.push_back({where, "dangling successor #" + std::to_string(e.state)});
                }
                if (!(e.probability >= 0.0 && e.probability <= 1.0)) {
                    std::ostringstream msg;
                    msg << "probability " << e.probability << " outside [0,1]";
                    out.push_back({where, msg.str()});
                }
                if (!first && e.state <= previous) {
                    out.push_back({where, "successors not strictly sorted"});
                }
                previous = e.state;
                first = false;
                sum += e.probability;
            }
            if (std::abs(sum - 1.0) > kProbabilityTolerance) {
                std::ostringstream msg;
                msg.precision(17);
                msg << "probability-sum violation: row sums to " << sum;
                out.push_back({where, msg.str()});
            }
        }
    }
}

}  // namespace detail

/// Lists every broken Mdp/Mmdp invariant; an empty result means the value is valid.
inline std::vector<Violation> validate_mmdp(const Mmdp& m) {
    std::vector<Violation> out;
    if (m.size() < 2) {
        out.push_back({"mmdp", "an MMDP needs at least two models, got " + std::to_string(m.size())});
    }
    if (m.size() > ActiveSet::kMaxModels) {
        out.push_back({"mmdp", "at most 64 models are supported"});
    }
    for (ModelIndex i = 0; i < m.size(); ++i) {
        const auto& mi = m.model(i);
        detail::validate_mdp(mi, "model " + std::to_string(i + 1) + (mi.name.empty() ? "" : " (" + mi.name + ")"),
                             out);
    }
    if (m.size() >= 2) {
        const auto& ref = m.model(0);
        for (ModelIndex i = 1; i < m.size(); ++i) {
            const auto& mi = m.model(i);
            const auto where = "model " + std::to_string(i + 1);
            if (mi.states != ref.states) {
                out.push_back({where, "shared-structure violation: state set differs from model 1"});
                continue;
            }
            if (mi.initial != ref.initial) {
                out.push_back({where, "shared-structure violation: initial state differs from model 1"});
            }
            for (StateIndex s = 0; s < std::min(ref.actions.size(), mi.actions.size()); ++s) {
                if (mi.actions[s] != ref.actions[s]) {
                    out.push_back({where, "shared-structure violation at state " + detail::describe_state(ref, s)});
                }
            }
        }
    }
    return out;
}

inline std::string format_violations(const std::vector<Violation>& violations) {
    std::string out;
    for (const auto& v : violations) {
        out += v.where + ": " + v.message + "\n";
    }
    return out;
}

/// Throws ModelError listing all violations, if any.
inline void require_valid(const Mmdp& m) {
    auto v = validate_mmdp(m);
    if (!v.empty()) {
        throw ModelError(format_violations(v));
    }
}

/**
 * Qualitative structure: which transitions are possible, not how likely.
 * successors[s][a] is sorted and duplicate-free.
 */
struct TransitionSystem {
    std::vector<std::string> states;
    std::vector<std::vector<std::string>> actions;
    std::vector<std::vector<std::vector<StateIndex>>> successors;
    StateIndex initial = 0;

    [[nodiscard]] std::size_t num_states() const { return states.size(); }
    [[nodiscard]] std::size_t num_actions(StateIndex s) const { return actions.at(s).size(); }
    [[nodiscard]] const std::vector<StateIndex>& post(StateIndex s, ActionIndex a) const {
        return successors.at(s).at(a);
    }

    [[nodiscard]] std::size_t num_transitions() const {
        std::size_t count = 0;
        for (const auto& per_state : successors) {
            for (const auto& succ : per_state) {
                count += succ.size();
            }
        }
        return count;
    }

    [[nodiscard]] std::vector<std::tuple<StateIndex, ActionIndex, StateIndex>> triples() const {
        std::vector<std::tuple<StateIndex, ActionIndex, StateIndex>> out;
        for (StateIndex s = 0; s < successors.size(); ++s) {
            for (ActionIndex a = 0; a < successors[s].size(); ++a) {
                for (auto t : successors[s][a]) {
                    out.emplace_back(s, a, t);
                }
            }
        }
        return out;
    }

    StateIndex add_state(std::string id, std::vector<std::string> state_actions) {
        states.push_back(std::move(id));
        successors.emplace_back(state_actions.size());
        actions.push_back(std::move(state_actions));
        return states.size() - 1;
    }

    void add_transition(StateIndex s, ActionIndex a, StateIndex t) {
        auto& succ = successors.at(s).at(a);
        auto it = std::lower_bound(succ.begin(), succ.end(), t);
        if (it == succ.end() || *it != t) {
            succ.insert(it, t);
        }
    }
};

inline std::vector<std::string> validate_transition_system(const TransitionSystem& ts) {
    std::vector<std::string> out;
    const auto n = ts.states.size();
    if (ts.actions.size() != n || ts.successors.size() != n) {
        out.push_back("table sizes differ from state count");
        return out;
    }
    if (n > 0 && ts.initial >= n) {
        out.push_back("initial state outside state set");
    }
    for (StateIndex s = 0; s < n; ++s) {
        if (ts.successors[s].size() != ts.actions[s].size()) {
            out.push_back("state " + ts.states[s] + ": transitions for undeclared action");
            continue;
        }
        for (ActionIndex a = 0; a < ts.actions[s].size(); ++a) {
            if (ts.successors[s][a].empty()) {
                out.push_back("state " + ts.states[s] + " action " + ts.actions[s][a] + ": no outgoing transition");
            }
            for (auto t : ts.successors[s][a]) {
                if (t >= n) {
                    out.push_back("state " + ts.states[s] + " action " + ts.actions[s][a] + ": dangling successor");
                }
            }
        }
    }
    return out;
}

/// The transition system whose transitions are the kernel's nonzero entries.
inline TransitionSystem induced_transition_system(const Mdp& m) {
    TransitionSystem ts;
    ts.states = m.states;
    ts.actions = m.actions;
    ts.initial = m.initial;
    ts.successors.resize(m.num_states());
    for (StateIndex s = 0; s < m.num_states(); ++s) {
        ts.successors[s].resize(m.num_actions(s));
        for (ActionIndex a = 0; a < m.num_actions(s); ++a) {
            for (const auto& e : m.row(s, a)) {
                if (e.probability > 0.0) {
                    ts.successors[s][a].push_back(e.state);
                }
            }
        }
    }
    return ts;
}

}  // namespace apd

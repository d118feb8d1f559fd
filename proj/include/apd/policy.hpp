#pragma once

#include <apd/graph.hpp>
#include <apd/model_json.hpp>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace apd {

/// In-MEC fragment over original states and actions.
struct PolicyMec {
    std::map<StateIndex, std::vector<ActionIndex>> actions;
    /// Optional per-state action weights overriding the uniform choice (same order as `actions`).
    std::map<StateIndex, std::vector<double>> weights;

    [[nodiscard]] bool contains(StateIndex s) const { return actions.contains(s); }

    bool operator==(const PolicyMec&) const = default;
};

/// Policy for one active model subset entered at one state: a reach phase and committed MEC phases.
struct PolicyEntry {
    ActiveSet active;
    StateIndex entry_state = 0;
    std::map<StateIndex, ActionIndex> reach;
    std::vector<PolicyMec> mecs;

    bool operator==(const PolicyEntry&) const = default;
};

/**
 * Memory policy table keyed by (active model subset, entry state).
 *
 * Execution: start in the entry for (all models, initial). While not yet
 * committed, play the reach fragment; on arriving in one of the entry's MECs
 * commit to it for as long as the active set is unchanged and play its
 * uniform (or weighted) distribution. When an observed transition removes
 * models, switch to the entry keyed by (surviving set, current state).
 */
class DetectionPolicy {
public:
    using Key = std::pair<ActiveSet, StateIndex>;

    void insert(PolicyEntry entry) {
        Key key{entry.active, entry.entry_state};
        entries_.insert_or_assign(key, std::move(entry));
    }

    void merge(const DetectionPolicy& other) {
        for (const auto& [key, entry] : other.entries_) {
            entries_.emplace(key, entry);
        }
    }

    [[nodiscard]] const PolicyEntry* find(ActiveSet active, StateIndex entry_state) const {
        auto it = entries_.find({active, entry_state});
        return it == entries_.end() ? nullptr : &it->second;
    }

    [[nodiscard]] const std::map<Key, PolicyEntry>& entries() const { return entries_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] bool empty() const { return entries_.empty(); }

    bool operator==(const DetectionPolicy&) const = default;

private:
    std::map<Key, PolicyEntry> entries_;
};

/**
 * Controller state of a running DetectionPolicy: which entry is in force and
 * which of its MECs (if any) has been committed to.
 */
struct PolicyCursor {
    ActiveSet active;
    StateIndex entry_state = 0;
    int committed = -1;

    auto operator<=>(const PolicyCursor&) const = default;
};

namespace policy_exec {

inline const PolicyEntry& entry_of(const DetectionPolicy& policy, const PolicyCursor& cursor) {
    const auto* e = policy.find(cursor.active, cursor.entry_state);
    if (e == nullptr) {
        throw ContractError("policy has no entry for the current active set");
    }
    return *e;
}

/// Commit to a MEC if `s` lies in one and no commitment exists yet.
inline void arrive(const DetectionPolicy& policy, PolicyCursor& cursor, StateIndex s) {
    if (cursor.committed >= 0 || cursor.active.size() < 2) {
        return;
    }
    const auto& entry = entry_of(policy, cursor);
    for (std::size_t k = 0; k < entry.mecs.size(); ++k) {
        if (entry.mecs[k].contains(s)) {
            cursor.committed = static_cast<int>(k);
            return;
        }
    }
}

/// Cursor at the start of an entry, or nullopt when the table has no such entry.
inline std::optional<PolicyCursor> enter(const DetectionPolicy& policy, ActiveSet active, StateIndex s) {
    if (active.size() >= 2 && policy.find(active, s) == nullptr) {
        return std::nullopt;
    }
    PolicyCursor cursor{active, s, -1};
    if (active.size() >= 2) {
        arrive(policy, cursor, s);
    }
    return cursor;
}

/**
 * Action distribution at state `s` (indexed like the state's actions).
 * Empty when the policy prescribes nothing here.
 */
inline std::vector<double> action_weights(const DetectionPolicy& policy, const PolicyCursor& cursor, StateIndex s,
                                          std::size_t num_actions) {
    std::vector<double> w;
    if (cursor.active.size() < 2) {
        return w;
    }
    const auto& entry = entry_of(policy, cursor);
    if (cursor.committed >= 0) {
        const auto& mec = entry.mecs.at(static_cast<std::size_t>(cursor.committed));
        auto it = mec.actions.find(s);
        if (it == mec.actions.end() || it->second.empty()) {
            return w;
        }
        w.assign(num_actions, 0.0);
        auto wt = mec.weights.find(s);
        if (wt != mec.weights.end()) {
            double total = 0.0;
            for (auto x : wt->second) {
                total += x;
            }
            for (std::size_t k = 0; k < it->second.size(); ++k) {
                w.at(it->second[k]) = wt->second.at(k) / total;
            }
        } else {
            const double p = 1.0 / static_cast<double>(it->second.size());
            for (auto a : it->second) {
                w.at(a) = p;
            }
        }
        return w;
    }
    auto it = entry.reach.find(s);
    if (it == entry.reach.end()) {
        return w;
    }
    w.assign(num_actions, 0.0);
    w.at(it->second) = 1.0;
    return w;
}

/**
 * Advance after observing a transition into `next` that left `survivors`
 * models possible. Returns nullopt when no entry covers the new configuration.
 */
inline std::optional<PolicyCursor> observe(const DetectionPolicy& policy, const PolicyCursor& cursor, StateIndex next,
                                           ActiveSet survivors) {
    if (survivors == cursor.active) {
        PolicyCursor out = cursor;
        arrive(policy, out, next);
        return out;
    }
    return enter(policy, survivors, next);
}

}  // namespace policy_exec

/// Stationary Markovian randomized policy: probabilities[s][a].
struct StationaryPolicy {
    std::vector<std::vector<double>> probabilities;

    [[nodiscard]] double probability(StateIndex s, ActionIndex a) const { return probabilities.at(s).at(a); }
};

inline StationaryPolicy uniform_policy(const Mdp& m) {
    StationaryPolicy p;
    p.probabilities.resize(m.num_states());
    for (StateIndex s = 0; s < m.num_states(); ++s) {
        p.probabilities[s].assign(m.num_actions(s), 1.0 / static_cast<double>(m.num_actions(s)));
    }
    return p;
}

/**
 * Flattens one entry into a stationary policy: reach actions deterministic,
 * MEC states uniform (or weighted), every other state uniform.
 */
inline StationaryPolicy stationary_from_entry(const PolicyEntry& entry, const Mdp& m) {
    StationaryPolicy p = uniform_policy(m);
    for (const auto& [s, a] : entry.reach) {
        std::fill(p.probabilities[s].begin(), p.probabilities[s].end(), 0.0);
        p.probabilities[s][a] = 1.0;
    }
    for (std::size_t k = 0; k < entry.mecs.size(); ++k) {
        PolicyCursor cursor{entry.active, entry.entry_state, static_cast<int>(k)};
        DetectionPolicy single;
        single.insert(entry);
        for (const auto& [s, _] : entry.mecs[k].actions) {
            p.probabilities[s] = policy_exec::action_weights(single, cursor, s, m.num_actions(s));
        }
    }
    return p;
}

struct TerminalEdge {
    StateIndex state = 0;
    ActionIndex action = 0;
    StateIndex successor = 0;
    ActiveSet possible;
    bool detectable = false;
};

struct CacheStats {
    std::size_t hits = 0;
    std::size_t misses = 0;
};

/// Intermediate results of a synthesis run, in the index space of `structure`.
struct ApdDiagnostics {
    TransitionSystem structure;
    std::vector<Mec> mecs;
    std::vector<Mec> informative_mecs;
    StateSet reach_set;
    /// Reachable MEC without informative pairs; present whenever synthesis fails.
    std::optional<Mec> trap_witness;
    /// For general synthesis: structure index of each explored original state.
    std::map<StateIndex, StateIndex> explored;
    std::vector<TerminalEdge> terminal_edges;
    CacheStats cache;
};

struct ApdOutcome {
    bool exists = false;
    std::optional<DetectionPolicy> policy;
    ApdDiagnostics diagnostics;
};

inline std::optional<Mec> find_trap_witness(const TransitionSystem& ts, StateIndex initial,
                                            const std::vector<Mec>& mecs, const std::vector<Mec>& informative) {
    const auto reach = reachable_states(ts, initial);
    for (const auto& mec : mecs) {
        if (std::find(informative.begin(), informative.end(), mec) != informative.end()) {
            continue;
        }
        if (reach.contains(mec.choices.begin()->first)) {
            return mec;
        }
    }
    return std::nullopt;
}

// ---- JSON --------------------------------------------------------------------

inline json policy_to_json(const DetectionPolicy& policy, const Mmdp& m) {
    json entries = json::array();
    for (const auto& [key, entry] : policy.entries()) {
        json active = json::array();
        for (auto i : entry.active.indices()) {
            active.push_back(i + 1);
        }
        json reach = json::object();
        for (const auto& [s, a] : entry.reach) {
            reach[m.states()[s]] = m.actions(s)[a];
        }
        json mecs = json::array();
        for (const auto& mec : entry.mecs) {
            json states = json::object();
            for (const auto& [s, acts] : mec.actions) {
                json names = json::array();
                for (auto a : acts) {
                    names.push_back(m.actions(s)[a]);
                }
                states[m.states()[s]] = names;
            }
            json jm = {{"states", states}};
            if (!mec.weights.empty()) {
                json w = json::object();
                for (const auto& [s, ws] : mec.weights) {
                    w[m.states()[s]] = ws;
                }
                jm["weights"] = w;
            }
            mecs.push_back(jm);
        }
        entries.push_back(
            {{"active", active}, {"entry_state", m.states()[entry.entry_state]}, {"reach", reach}, {"mecs", mecs}});
    }
    return json{{"entries", entries}};
}

inline DetectionPolicy policy_from_json(const json& doc, const Mmdp& m) {
    using detail::require_field;
    using detail::require_string;
    using detail::schema_error;
    const auto& entries = require_field(doc, "entries", "");
    if (!entries.is_array()) {
        schema_error("/entries", "expected an array");
    }
    auto state_of = [&](const std::string& id, const std::string& path) {
        auto s = m.skeleton().find_state(id);
        if (!s) {
            schema_error(path, "unknown state '" + id + "'");
        }
        return *s;
    };
    auto action_of = [&](StateIndex s, const std::string& id, const std::string& path) {
        auto a = m.skeleton().find_action(s, id);
        if (!a) {
            schema_error(path, "action '" + id + "' not available at state '" + m.states()[s] + "'");
        }
        return *a;
    };
    DetectionPolicy policy;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto path = "/entries/" + std::to_string(k);
        const auto& e = entries[k];
        PolicyEntry entry;
        const auto& active = require_field(e, "active", path);
        if (!active.is_array() || active.size() < 2) {
            schema_error(path + "/active", "expected at least two model indices");
        }
        for (const auto& idx : active) {
            if (!idx.is_number_integer() || idx.get<long long>() < 1 ||
                idx.get<long long>() > static_cast<long long>(m.size())) {
                schema_error(path + "/active", "model index out of range");
            }
            entry.active.insert(static_cast<ModelIndex>(idx.get<long long>() - 1));
        }
        entry.entry_state =
            state_of(require_string(require_field(e, "entry_state", path), path + "/entry_state"), path + "/entry_state");
        if (auto it = e.find("reach"); it != e.end()) {
            if (!it->is_object()) {
                schema_error(path + "/reach", "expected an object");
            }
            for (const auto& [sid, aj] : it->items()) {
                const auto s = state_of(sid, path + "/reach/" + sid);
                entry.reach[s] = action_of(s, require_string(aj, path + "/reach/" + sid), path + "/reach/" + sid);
            }
        }
        if (auto it = e.find("mecs"); it != e.end()) {
            if (!it->is_array()) {
                schema_error(path + "/mecs", "expected an array");
            }
            for (std::size_t j = 0; j < it->size(); ++j) {
                const auto mpath = path + "/mecs/" + std::to_string(j);
                PolicyMec mec;
                const auto& states = require_field((*it)[j], "states", mpath);
                if (!states.is_object() || states.empty()) {
                    schema_error(mpath + "/states", "expected a nonempty object");
                }
                for (const auto& [sid, acts] : states.items()) {
                    const auto s = state_of(sid, mpath + "/states/" + sid);
                    if (!acts.is_array() || acts.empty()) {
                        schema_error(mpath + "/states/" + sid, "expected a nonempty action list");
                    }
                    auto& list = mec.actions[s];
                    for (const auto& aj : acts) {
                        list.push_back(action_of(s, require_string(aj, mpath + "/states/" + sid), mpath));
                    }
                }
                if (auto wt = (*it)[j].find("weights"); wt != (*it)[j].end()) {
                    for (const auto& [sid, ws] : wt->items()) {
                        const auto s = state_of(sid, mpath + "/weights/" + sid);
                        auto acts = mec.actions.find(s);
                        if (acts == mec.actions.end() || !ws.is_array() || ws.size() != acts->second.size()) {
                            schema_error(mpath + "/weights/" + sid, "weights must match the state's MEC actions");
                        }
                        double total = 0.0;
                        for (const auto& x : ws) {
                            if (!x.is_number() || x.get<double>() < 0.0) {
                                schema_error(mpath + "/weights/" + sid, "weights must be nonnegative numbers");
                            }
                            total += x.get<double>();
                        }
                        if (!(total > 0.0)) {
                            schema_error(mpath + "/weights/" + sid, "weights must not all be zero");
                        }
                        mec.weights[s] = ws.get<std::vector<double>>();
                    }
                }
                entry.mecs.push_back(std::move(mec));
            }
        }
        policy.insert(std::move(entry));
    }
    return policy;
}

}  // namespace apd

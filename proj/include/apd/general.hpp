#pragma once

#include <apd/binary.hpp>

#include <deque>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <utility>
#include <vector>

namespace apd {

/// Pairs informative between models i and j of the original shared-structure family.
inline std::set<StateAction> pairwise_isa(const Mmdp& m, ModelIndex i, ModelIndex j) {
    if (i == j) {
        throw ContractError("pairwise_isa: model indices must differ");
    }
    return classify_pairs(m.model(i), m.model(j)).isa();
}

namespace detail {

/// ISA_ij for all pairs of a family, as dense lookup tables.
class PairwiseIsa {
public:
    explicit PairwiseIsa(const Mmdp& m) : n_(m.size()), table_(m.size() * m.size()) {
        for (ModelIndex i = 0; i < n_; ++i) {
            for (ModelIndex j = i + 1; j < n_; ++j) {
                auto& t = table_[i * n_ + j];
                t.resize(m.num_states());
                for (StateIndex s = 0; s < m.num_states(); ++s) {
                    t[s].assign(m.num_actions(s), false);
                }
                for (const auto& p : pairwise_isa(m, i, j)) {
                    t[p.state][p.action] = true;
                }
            }
        }
    }

    [[nodiscard]] bool informative(ModelIndex i, ModelIndex j, StateIndex s, ActionIndex a) const {
        if (i > j) {
            std::swap(i, j);
        }
        return table_[i * n_ + j][s][a];
    }

private:
    std::size_t n_;
    std::vector<std::vector<std::vector<bool>>> table_;
};

/// Informative-MEC filter: every pair of active models has an informative pair inside.
template <class ToOriginal>
bool covers_all_pairs(const Mec& mec, ActiveSet active, const PairwiseIsa& isa, ToOriginal&& to_original) {
    const auto idx = active.indices();
    for (std::size_t x = 0; x < idx.size(); ++x) {
        for (std::size_t y = x + 1; y < idx.size(); ++y) {
            bool found = false;
            for (const auto& [s, acts] : mec.choices) {
                const auto orig = to_original(s);
                if (!orig) {
                    found = false;
                    break;
                }
                for (auto a : acts) {
                    if (isa.informative(idx[x], idx[y], *orig, a)) {
                        found = true;
                        break;
                    }
                }
                if (found) {
                    break;
                }
            }
            if (!found) {
                return false;
            }
        }
    }
    return true;
}

inline bool identical_structure(const Mmdp& m, ActiveSet active) {
    const auto idx = active.indices();
    const auto& ref = m.model(idx.front());
    for (StateIndex s = 0; s < m.num_states(); ++s) {
        for (ActionIndex a = 0; a < m.num_actions(s); ++a) {
            const auto base = support(ref.row(s, a));
            for (auto i : idx) {
                if (support(m.model(i).row(s, a)) != base) {
                    return false;
                }
            }
        }
    }
    return true;
}

}  // namespace detail

/**
 * Same-structure case: one transition system for all models, MECs counted as
 * informative when they contain a pair from every ISA_ij.
 */
inline ApdOutcome base_case_apd(const Mmdp& m, StateIndex initial) {
    require_valid(m);
    const auto all = m.all_models();
    if (!detail::identical_structure(m, all)) {
        throw ContractError("base_case_apd: models differ in transition structure; use general_apd");
    }
    if (initial >= m.num_states()) {
        throw ContractError("base_case_apd: initial state out of range");
    }
    const detail::PairwiseIsa isa(m);
    auto ts = induced_transition_system(m.model(0));
    ts.initial = initial;
    auto solution = detail::solve_structure(ts, initial, [&](const Mec& mec) {
        return detail::covers_all_pairs(mec, all, isa, [](StateIndex s) { return std::optional<StateIndex>(s); });
    });
    ApdOutcome outcome;
    outcome.exists = solution.exists;
    if (solution.exists) {
        PolicyEntry entry;
        entry.active = all;
        entry.entry_state = initial;
        entry.reach = solution.reach.choice;
        for (const auto& mec : solution.informative) {
            entry.mecs.push_back(PolicyMec{mec.choices, {}});
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

struct GeneralApdOptions {
    bool memoize = true;
};

namespace detail {

struct SubproblemResult {
    bool exists = false;
    DetectionPolicy policy;
};

/// Get-or-compute map; concurrent callers of one key share a single computation.
template <class Key, class Value>
class MemoCache {
public:
    template <class Compute>
    std::shared_ptr<const Value> get_or_compute(const Key& key, Compute&& compute) {
        std::promise<std::shared_ptr<const Value>> promise;
        std::shared_future<std::shared_ptr<const Value>> future;
        bool owner = false;
        {
            std::lock_guard lock(mutex_);
            auto it = slots_.find(key);
            if (it != slots_.end()) {
                ++stats_.hits;
                future = it->second;
            } else {
                ++stats_.misses;
                future = promise.get_future().share();
                slots_.emplace(key, future);
                owner = true;
            }
        }
        if (owner) {
            try {
                promise.set_value(std::make_shared<const Value>(compute()));
            } catch (...) {
                promise.set_exception(std::current_exception());
            }
        }
        return future.get();
    }

    [[nodiscard]] CacheStats stats() const {
        std::lock_guard lock(mutex_);
        return stats_;
    }

private:
    mutable std::mutex mutex_;
    std::map<Key, std::shared_future<std::shared_ptr<const Value>>> slots_;
    CacheStats stats_;
};

class GeneralSolver {
public:
    GeneralSolver(const Mmdp& m, GeneralApdOptions options) : m_(m), options_(options), isa_(m) {}

    ApdOutcome solve_top(StateIndex initial) {
        ApdOutcome outcome;
        auto result = solve(m_.all_models(), initial, 0, &outcome.diagnostics);
        outcome.exists = result.exists;
        if (result.exists) {
            outcome.policy = std::move(result.policy);
        }
        outcome.diagnostics.cache = stats_;
        if (options_.memoize) {
            outcome.diagnostics.cache = cache_.stats();
        }
        return outcome;
    }

private:
    using Key = std::pair<ActiveSet, StateIndex>;

    std::shared_ptr<const SubproblemResult> subproblem(ActiveSet active, StateIndex s, std::size_t depth) {
        auto compute = [&] { return solve(active, s, depth, nullptr); };
        if (options_.memoize) {
            return cache_.get_or_compute(Key{active, s}, compute);
        }
        ++stats_.misses;
        return std::make_shared<const SubproblemResult>(compute());
    }

    SubproblemResult solve_binary(ActiveSet active, StateIndex initial, ApdDiagnostics* diag) {
        const auto idx = active.indices();
        auto outcome = bi_apd(m_.restricted_to(active), initial);
        SubproblemResult out;
        out.exists = outcome.exists;
        if (outcome.exists) {
            for (auto [_, entry] : outcome.policy->entries()) {
                ActiveSet mapped;
                for (auto local : entry.active.indices()) {
                    mapped.insert(idx[local]);
                }
                entry.active = mapped;
                out.policy.insert(std::move(entry));
            }
        }
        if (diag != nullptr) {
            *diag = std::move(outcome.diagnostics);
        }
        return out;
    }

    SubproblemResult solve(ActiveSet active, StateIndex initial, std::size_t depth, ApdDiagnostics* diag) {
        if (active.size() < 2) {
            throw ContractError("general_apd: active set must contain at least two models");
        }
        if (active.size() == 2) {
            return solve_binary(active, initial, diag);
        }
        if (depth + 2 > m_.size()) {
            throw ContractError("general_apd: recursion deeper than N - 2");
        }

        TransitionSystem ts;
        const auto bad = ts.add_state("⊥g0", {"a⊥g0"});
        const auto good = ts.add_state("⊥g1", {"a⊥g1"});
        ts.add_transition(bad, 0, bad);
        ts.add_transition(good, 0, good);

        std::map<StateIndex, StateIndex> explored;  // original -> structure
        std::vector<StateIndex> original_of{0, 0};  // structure -> original (terminals unused)
        auto explore = [&](StateIndex s) {
            auto [it, inserted] = explored.emplace(s, ts.num_states());
            if (inserted) {
                ts.add_state(m_.states()[s], m_.actions(s));
                original_of.push_back(s);
            }
            return std::pair{it->second, inserted};
        };

        struct Pending {
            ActiveSet possible;
            StateIndex from;
            ActionIndex action;
            StateIndex to;
        };
        std::deque<StateIndex> frontier;
        std::vector<Pending> deferred;
        std::vector<TerminalEdge> terminal_edges;
        const auto models = active.indices();

        explore(initial);
        frontier.push_back(initial);
        while (!frontier.empty()) {
            const auto s = frontier.front();
            frontier.pop_front();
            const auto ys = explored.at(s);
            for (ActionIndex a = 0; a < m_.num_actions(s); ++a) {
                std::set<StateIndex> next_states;
                for (auto i : models) {
                    for (const auto& e : m_.model(i).row(s, a)) {
                        next_states.insert(e.state);
                    }
                }
                for (auto next : next_states) {
                    const auto possible = m_.possible_models(active, s, a, next);
                    if (possible == active) {
                        auto [yn, fresh] = explore(next);
                        ts.add_transition(ys, a, yn);
                        if (fresh) {
                            frontier.push_back(next);
                        }
                    } else if (possible.size() == 1) {
                        ts.add_transition(ys, a, good);
                        terminal_edges.push_back({s, a, next, possible, true});
                    } else if (possible.size() == 2) {
                        const bool ok = subproblem(possible, next, depth + 1)->exists;
                        ts.add_transition(ys, a, ok ? good : bad);
                        terminal_edges.push_back({s, a, next, possible, ok});
                    } else {
                        deferred.push_back({possible, s, a, next});
                    }
                }
            }
        }
        for (const auto& p : deferred) {
            if (!p.possible.is_subset_of(active) || p.possible == active) {
                throw ContractError("general_apd: recursive call must shrink the active set");
            }
            const bool ok = subproblem(p.possible, p.to, depth + 1)->exists;
            ts.add_transition(explored.at(p.from), p.action, ok ? good : bad);
            terminal_edges.push_back({p.from, p.action, p.to, p.possible, ok});
        }
        ts.initial = explored.at(initial);

        auto to_original = [&](StateIndex y) -> std::optional<StateIndex> {
            if (y == bad || y == good) {
                return std::nullopt;
            }
            return original_of[y];
        };
        auto solution = solve_structure(ts, ts.initial, [&](const Mec& mec) {
            if (mec.contains(good)) {
                return true;
            }
            if (mec.contains(bad)) {
                return false;
            }
            return covers_all_pairs(mec, active, isa_, to_original);
        });

        SubproblemResult out;
        out.exists = solution.exists;
        if (solution.exists) {
            PolicyEntry entry;
            entry.active = active;
            entry.entry_state = initial;
            for (const auto& [y, a] : solution.reach.choice) {
                if (auto s = to_original(y)) {
                    entry.reach[*s] = a;
                }
            }
            for (const auto& mec : solution.informative) {
                if (mec.contains(good)) {
                    continue;
                }
                PolicyMec fragment;
                for (const auto& [y, acts] : mec.choices) {
                    fragment.actions[*to_original(y)] = acts;
                }
                entry.mecs.push_back(std::move(fragment));
            }
            out.policy.insert(std::move(entry));
            // Sub-policies for every detectable subproblem this level can hand over to.
            for (const auto& edge : terminal_edges) {
                if (edge.detectable && edge.possible.size() >= 2) {
                    out.policy.merge(subproblem(edge.possible, edge.successor, depth + 1)->policy);
                }
            }
        }
        if (diag != nullptr) {
            if (!solution.exists) {
                diag->trap_witness = find_trap_witness(ts, ts.initial, solution.mecs, solution.informative);
            }
            diag->structure = std::move(ts);
            diag->mecs = std::move(solution.mecs);
            diag->informative_mecs = std::move(solution.informative);
            diag->reach_set = std::move(solution.reach_set);
            diag->explored = std::move(explored);
            diag->terminal_edges = std::move(terminal_edges);
        }
        return out;
    }

    const Mmdp& m_;
    GeneralApdOptions options_;
    PairwiseIsa isa_;
    MemoCache<Key, SubproblemResult> cache_;
    CacheStats stats_;
};

}  // namespace detail

/**
 * Existence and synthesis of a detecting policy for N >= 2 models.
 *
 * Two models are handed to bi_apd. Otherwise a BFS from `initial` keeps the
 * transitions possible in every active model; a transition possible in a
 * proper subset is replaced by an edge to a good or bad terminal according to
 * the (memoized, recursive) answer for that subset entered at its successor.
 */
inline ApdOutcome general_apd(const Mmdp& m, StateIndex initial, GeneralApdOptions options = {}) {
    require_valid(m);
    if (initial >= m.num_states()) {
        throw ContractError("general_apd: initial state out of range");
    }
    if (m.size() == 2) {
        return bi_apd(m, initial);
    }
    detail::GeneralSolver solver(m, options);
    return solver.solve_top(initial);
}

}  // namespace apd

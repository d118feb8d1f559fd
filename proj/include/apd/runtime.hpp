#pragma once

#include <apd/policy.hpp>
#include <apd/rng.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace apd {

struct BeliefState {
    std::vector<double> b;

    static BeliefState uniform(std::size_t n) { return {std::vector<double>(n, 1.0 / static_cast<double>(n))}; }

    [[nodiscard]] ActiveSet support() const {
        ActiveSet out;
        for (ModelIndex i = 0; i < b.size(); ++i) {
            if (b[i] > 0.0) {
                out.insert(i);
            }
        }
        return out;
    }
    [[nodiscard]] double max() const { return *std::max_element(b.begin(), b.end()); }
};

class ImpossibleObservation : public ContractError {
public:
    using ContractError::ContractError;
};

inline BeliefState belief_update(const BeliefState& belief, StateIndex s, ActionIndex a, StateIndex next,
                                 const Mmdp& m) {
    if (belief.b.size() != m.size()) {
        throw ContractError("belief dimension does not match the number of models");
    }
    BeliefState out{std::vector<double>(m.size(), 0.0)};
    double total = 0.0;
    for (ModelIndex i = 0; i < m.size(); ++i) {
        if (belief.b[i] == 0.0) {
            continue;
        }
        out.b[i] = belief.b[i] * m.model(i).probability(s, a, next);
        total += out.b[i];
    }
    if (!(total > 0.0)) {
        throw ImpossibleObservation("impossible observation: (" + m.states()[s] + ", " + m.actions(s)[a] + ", " +
                                    m.states()[next] + ") has zero likelihood under every remaining model");
    }
    for (auto& x : out.b) {
        x /= total;
    }
    return out;
}

/// Argmax of the posterior; ties go to the smaller index.
inline ModelIndex map_decide(const BeliefState& belief) {
    ModelIndex best = 0;
    for (ModelIndex i = 1; i < belief.b.size(); ++i) {
        if (belief.b[i] > belief.b[best]) {
            best = i;
        }
    }
    return best;
}

/**
 * Something that picks action distributions along a run.
 * start/observe return false when the controller has nothing to prescribe
 * from the new configuration.
 */
template <class C>
concept Controller = std::copy_constructible<C> && requires(C c, StateIndex s, ActionIndex a, ActiveSet survivors) {
    { c.start(s) } -> std::same_as<bool>;
    { c.weights(s) } -> std::same_as<std::vector<double>>;
    { c.observe(s, a, s, survivors) } -> std::same_as<bool>;
};

class StationaryController {
public:
    explicit StationaryController(const StationaryPolicy& policy) : policy_(&policy) {}

    bool start(StateIndex) { return true; }
    std::vector<double> weights(StateIndex s) { return policy_->probabilities.at(s); }
    bool observe(StateIndex, ActionIndex, StateIndex, ActiveSet) { return true; }

private:
    const StationaryPolicy* policy_;
};

class DetectionController {
public:
    DetectionController(const DetectionPolicy& policy, const Mmdp& m) : policy_(&policy), m_(&m) {}

    bool start(StateIndex s) {
        cursor_ = policy_exec::enter(*policy_, m_->all_models(), s);
        return cursor_.has_value();
    }
    std::vector<double> weights(StateIndex s) {
        return policy_exec::action_weights(*policy_, *cursor_, s, m_->num_actions(s));
    }
    bool observe(StateIndex, ActionIndex, StateIndex next, ActiveSet survivors) {
        cursor_ = policy_exec::observe(*policy_, *cursor_, next, survivors);
        return cursor_.has_value();
    }
    [[nodiscard]] const std::optional<PolicyCursor>& cursor() const { return cursor_; }

private:
    const DetectionPolicy* policy_;
    const Mmdp* m_;
    std::optional<PolicyCursor> cursor_;
};

enum class StopReason { threshold, max_steps, undetectable };

inline std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::threshold:
            return "threshold";
        case StopReason::max_steps:
            return "max_steps";
        case StopReason::undetectable:
            return "undetectable";
    }
    return "unknown";
}

struct TraceRow {
    std::size_t t = 0;
    StateIndex state = 0;
    /// Action taken at time t; empty on the final row.
    std::optional<ActionIndex> action;
    BeliefState belief;
};

struct Trace {
    std::uint64_t seed = 0;
    std::uint64_t trial = 0;
    ModelIndex truth = 0;
    std::vector<TraceRow> rows;
    StopReason stop = StopReason::max_steps;

    [[nodiscard]] const BeliefState& final_belief() const { return rows.back().belief; }
    [[nodiscard]] std::size_t steps() const { return rows.back().t; }
};

struct SimOptions {
    std::size_t max_steps = 10000;
    double threshold = 0.98;
    /// Prior b(0); uniform when empty.
    std::vector<double> prior;
    /// Store every step (otherwise only the first and last rows).
    bool record = true;
    /// Stop on the posterior threshold; off for fixed-horizon runs.
    bool stop_on_threshold = true;
};

namespace detail {

inline BeliefState initial_belief(const SimOptions& options, std::size_t n) {
    if (options.prior.empty()) {
        return BeliefState::uniform(n);
    }
    if (options.prior.size() != n) {
        throw ContractError("prior dimension does not match the number of models");
    }
    double total = 0.0;
    for (auto x : options.prior) {
        if (!(x > 0.0)) {
            throw ContractError("prior entries must be positive");
        }
        total += x;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
        throw ContractError("prior must sum to 1");
    }
    return {options.prior};
}

}  // namespace detail

/**
 * One run on ground truth `truth`. Actions come from the controller, successors
 * from the truth's kernel, beliefs from the Bayes update. The (seed, trial)
 * pair fixes every random draw.
 */
template <Controller C>
Trace simulate(const Mmdp& m, ModelIndex truth, C controller, std::uint64_t seed, const SimOptions& options = {},
               std::uint64_t trial = 0) {
    if (truth >= m.size()) {
        throw ContractError("ground-truth index out of range");
    }
    if (options.stop_on_threshold && !(options.threshold > 0.5 && options.threshold < 1.0)) {
        throw ContractError("threshold must lie in (0.5, 1)");
    }
    Rng rng(seed, trial);
    Trace trace;
    trace.seed = seed;
    trace.trial = trial;
    trace.truth = truth;
    StateIndex s = m.initial();
    BeliefState belief = detail::initial_belief(options, m.size());
    if (!controller.start(s)) {
        throw ContractError("policy has no entry for the initial configuration");
    }
    const auto& truth_model = m.model(truth);
    TraceRow row{0, s, std::nullopt, belief};
    for (std::size_t t = 0;; ++t) {
        row.t = t;
        row.state = s;
        row.belief = belief;
        row.action.reset();
        if (options.stop_on_threshold && belief.max() >= options.threshold) {
            trace.stop = StopReason::threshold;
            break;
        }
        if (t == options.max_steps) {
            trace.stop = StopReason::max_steps;
            break;
        }
        const auto w = controller.weights(s);
        if (w.empty()) {
            trace.stop = StopReason::undetectable;
            break;
        }
        const auto a = static_cast<ActionIndex>(rng.pick(w));
        const auto& dist = truth_model.row(s, a);
        std::vector<double> mass;
        mass.reserve(dist.size());
        for (const auto& e : dist) {
            mass.push_back(e.probability);
        }
        const auto next = dist[rng.pick(mass)].state;
        row.action = a;
        if (options.record || t == 0) {
            trace.rows.push_back(row);
        }
        belief = belief_update(belief, s, a, next, m);
        const bool covered = controller.observe(s, a, next, belief.support());
        s = next;
        if (!covered) {
            row = TraceRow{t + 1, s, std::nullopt, belief};
            trace.stop = StopReason::undetectable;
            break;
        }
    }
    trace.rows.push_back(row);
    return trace;
}

inline Trace simulate(const Mmdp& m, ModelIndex truth, const DetectionPolicy& policy, std::uint64_t seed,
                      const SimOptions& options = {}, std::uint64_t trial = 0) {
    return simulate(m, truth, DetectionController(policy, m), seed, options, trial);
}

/// Runs fn(trial) for trial in [0, trials) over `threads` workers; results in trial order.
template <class Fn>
auto run_trials(std::size_t trials, std::size_t threads, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
    std::vector<decltype(fn(std::size_t{}))> out(trials);
    threads = std::max<std::size_t>(1, std::min(threads, trials));
    if (threads == 1) {
        for (std::size_t k = 0; k < trials; ++k) {
            out[k] = fn(k);
        }
        return out;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t k = w; k < trials; k += threads) {
                    out[k] = fn(k);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return out;
}

inline std::size_t default_threads() { return std::max(1U, std::thread::hardware_concurrency()); }

struct ErrorEstimate {
    double error = 0.0;
    double std_error = 0.0;
};

inline ErrorEstimate binomial_estimate(std::size_t failures, std::size_t trials) {
    const double p = static_cast<double>(failures) / static_cast<double>(trials);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(trials))};
}

/**
 * MAP error after exactly t steps: truth drawn from theta, belief started at
 * q, decision by map_decide. A run whose controller stops prescribing is
 * decided on the belief it reached.
 */
template <Controller C>
ErrorEstimate monte_carlo_error(const Mmdp& m, const C& controller, std::size_t t, std::size_t trials,
                                std::uint64_t seed, const std::vector<double>& q, const std::vector<double>& theta,
                                std::size_t threads = 1) {
    if (trials < 100) {
        throw ContractError("monte_carlo_error: at least 100 trials required");
    }
    SimOptions options;
    options.max_steps = t;
    options.prior = q;
    options.record = false;
    options.stop_on_threshold = false;
    detail::initial_belief(options, m.size());
    const auto theta_belief = detail::initial_belief(SimOptions{.prior = theta}, m.size());
    const auto wrong = run_trials(trials, threads, [&](std::size_t trial) -> int {
        Rng truth_rng(~seed, trial);
        const auto truth = static_cast<ModelIndex>(truth_rng.pick(theta_belief.b));
        const auto trace = simulate(m, truth, controller, seed, options, trial);
        return map_decide(trace.final_belief()) != truth ? 1 : 0;
    });
    std::size_t failures = 0;
    for (auto x : wrong) {
        failures += static_cast<std::size_t>(x);
    }
    return binomial_estimate(failures, trials);
}

inline ErrorEstimate monte_carlo_error(const Mmdp& m, const DetectionPolicy& policy, std::size_t t,
                                       std::size_t trials, std::uint64_t seed, const std::vector<double>& q,
                                       const std::vector<double>& theta, std::size_t threads = 1) {
    return monte_carlo_error(m, DetectionController(policy, m), t, trials, seed, q, theta, threads);
}

struct TruthSummary {
    std::size_t runs = 0;
    std::size_t threshold_stops = 0;
    std::size_t correct = 0;
    std::size_t undetectable = 0;
    double total_stop_time = 0.0;
};

struct BatchSummary {
    std::vector<TruthSummary> per_truth;
    std::size_t runs = 0;
    std::size_t threshold_stops = 0;
    std::size_t correct_threshold_decisions = 0;
    std::size_t undetectable = 0;
    ErrorEstimate error;
};

/**
 * Independent runs with the truth fixed, or drawn uniformly per trial when
 * `truth` is empty. Error counts runs whose final MAP decision is wrong.
 */
template <Controller C>
BatchSummary run_batch(const Mmdp& m, const C& controller, std::optional<ModelIndex> truth, std::size_t trials,
                       std::uint64_t seed, SimOptions options = {}, std::size_t threads = 1) {
    if (trials == 0) {
        throw ContractError("run_batch: at least one trial required");
    }
    options.record = false;
    const auto traces = run_trials(trials, threads, [&](std::size_t trial) {
        Rng truth_rng(~seed, trial);
        const auto k = truth ? *truth : static_cast<ModelIndex>(truth_rng.below(m.size()));
        return simulate(m, k, controller, seed, options, trial);
    });
    BatchSummary out;
    out.per_truth.resize(m.size());
    std::size_t wrong = 0;
    for (const auto& tr : traces) {
        auto& row = out.per_truth[tr.truth];
        const bool ok = map_decide(tr.final_belief()) == tr.truth;
        ++row.runs;
        row.total_stop_time += static_cast<double>(tr.steps());
        if (tr.stop == StopReason::threshold) {
            ++row.threshold_stops;
            row.correct += ok ? 1 : 0;
        } else if (tr.stop == StopReason::undetectable) {
            ++row.undetectable;
        }
        wrong += ok ? 0 : 1;
    }
    for (const auto& row : out.per_truth) {
        out.runs += row.runs;
        out.threshold_stops += row.threshold_stops;
        out.correct_threshold_decisions += row.correct;
        out.undetectable += row.undetectable;
    }
    out.error = binomial_estimate(wrong, trials);
    return out;
}

}  // namespace apd

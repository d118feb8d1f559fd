#pragma once

#include <apd/policy.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace apd {

inline constexpr std::size_t kExactHorizonCap = 10;
inline constexpr std::size_t kCurveHorizonCap = 100000;

/// Observed prefix: states[0..t] and actions[0..t-1].
struct History {
    std::vector<StateIndex> states;
    std::vector<ActionIndex> actions;
};

namespace detail {

inline void check_pair(const Mdp& m1, const Mdp& m2) {
    if (!m1.same_structure(m2)) {
        throw ContractError("models do not share states, actions and initial state");
    }
}

inline void check_stationary(const StationaryPolicy& policy, const Mdp& m) {
    if (policy.probabilities.size() != m.num_states()) {
        throw ContractError("stationary policy does not cover every state");
    }
    for (StateIndex s = 0; s < m.num_states(); ++s) {
        const auto& row = policy.probabilities[s];
        if (row.size() != m.num_actions(s)) {
            throw ContractError("stationary policy row size mismatch at state " + m.states[s]);
        }
        double total = 0.0;
        for (auto p : row) {
            if (p < 0.0) {
                throw ContractError("negative action probability at state " + m.states[s]);
            }
            total += p;
        }
        if (std::abs(total - 1.0) > kProbabilityTolerance) {
            throw ContractError("action probabilities at state " + m.states[s] + " do not sum to 1");
        }
    }
}

template <class Policy>
void enumerate_histories(const Mdp& m1, const Mdp& m2, Policy& policy, History& h, double p1, double p2,
                         std::size_t remaining, double& total) {
    if (remaining == 0) {
        total += std::sqrt(p1 * p2);
        return;
    }
    const auto s = h.states.back();
    const std::vector<double> weights = policy(static_cast<const History&>(h));
    for (ActionIndex a = 0; a < weights.size(); ++a) {
        if (weights[a] <= 0.0) {
            continue;
        }
        const auto& r1 = m1.row(s, a);
        const auto& r2 = m2.row(s, a);
        std::vector<StateIndex> next;
        for (const auto& e : r1) {
            next.push_back(e.state);
        }
        for (const auto& e : r2) {
            next.push_back(e.state);
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        for (auto t : next) {
            const double q1 = p1 * weights[a] * probability_of(r1, t);
            const double q2 = p2 * weights[a] * probability_of(r2, t);
            if (q1 == 0.0 || q2 == 0.0) {
                continue;
            }
            h.actions.push_back(a);
            h.states.push_back(t);
            enumerate_histories(m1, m2, policy, h, q1, q2, remaining - 1, total);
            h.states.pop_back();
            h.actions.pop_back();
        }
    }
}

}  // namespace detail

/**
 * B(t) by enumerating every length-t history. `policy(h)` returns the action
 * distribution at h.states.back(), indexed like that state's actions.
 */
template <class Policy>
    requires std::is_invocable_r_v<std::vector<double>, Policy&, const History&>
double bc_exact(const Mdp& m1, const Mdp& m2, Policy policy, std::size_t t, std::size_t cap = kExactHorizonCap) {
    detail::check_pair(m1, m2);
    if (t > cap) {
        throw ContractError("bc_exact: horizon " + std::to_string(t) + " exceeds the enumeration cap " +
                            std::to_string(cap));
    }
    History h;
    h.states.push_back(m1.initial);
    double total = 0.0;
    detail::enumerate_histories(m1, m2, policy, h, 1.0, 1.0, t, total);
    return total;
}

inline double bc_exact(const Mdp& m1, const Mdp& m2, const StationaryPolicy& policy, std::size_t t,
                       std::size_t cap = kExactHorizonCap) {
    detail::check_stationary(policy, m1);
    return bc_exact(
        m1, m2, [&](const History& h) { return policy.probabilities[h.states.back()]; }, t, cap);
}

/// W_ij = sum_a pi(a|i) sqrt(d1(j|i,a) d2(j|i,a)); B(t) = e_init^T W^t 1.
struct BcMatrix {
    std::vector<std::vector<double>> w;
    StationaryPolicy policy;
    StateIndex initial = 0;

    [[nodiscard]] std::size_t size() const { return w.size(); }

    /// W^t 1, by repeated multiplication.
    [[nodiscard]] std::vector<double> power_times_ones(std::size_t t) const {
        std::vector<double> v(size(), 1.0);
        std::vector<double> next(size());
        for (std::size_t k = 0; k < t; ++k) {
            for (std::size_t i = 0; i < size(); ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < size(); ++j) {
                    acc += w[i][j] * v[j];
                }
                next[i] = acc;
            }
            v.swap(next);
        }
        return v;
    }

    [[nodiscard]] double at(std::size_t t) const { return power_times_ones(t)[initial]; }

    /// B(0..horizon).
    [[nodiscard]] std::vector<double> curve(std::size_t horizon) const {
        std::vector<double> out;
        out.reserve(horizon + 1);
        std::vector<double> row(size(), 0.0);
        row[initial] = 1.0;
        std::vector<double> next(size());
        for (std::size_t t = 0;; ++t) {
            double total = 0.0;
            for (auto x : row) {
                total += x;
            }
            out.push_back(total);
            if (t == horizon) {
                break;
            }
            std::fill(next.begin(), next.end(), 0.0);
            for (std::size_t i = 0; i < size(); ++i) {
                if (row[i] == 0.0) {
                    continue;
                }
                for (std::size_t j = 0; j < size(); ++j) {
                    next[j] += row[i] * w[i][j];
                }
            }
            row.swap(next);
        }
        return out;
    }

    /// ||W^k||_inf^(1/k), an upper bound on the spectral radius.
    [[nodiscard]] double spectral_radius_bound(std::size_t k = 64) const {
        const auto v = power_times_ones(k);
        const double norm = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
        return std::pow(norm, 1.0 / static_cast<double>(k));
    }
};

inline BcMatrix bc_matrix(const Mdp& m1, const Mdp& m2, const StationaryPolicy& policy) {
    detail::check_pair(m1, m2);
    detail::check_stationary(policy, m1);
    const auto n = m1.num_states();
    BcMatrix out;
    out.w.assign(n, std::vector<double>(n, 0.0));
    out.policy = policy;
    out.initial = m1.initial;
    for (StateIndex i = 0; i < n; ++i) {
        for (ActionIndex a = 0; a < m1.num_actions(i); ++a) {
            const double pa = policy.probabilities[i][a];
            if (pa == 0.0) {
                continue;
            }
            const auto& r2 = m2.row(i, a);
            for (const auto& e : m1.row(i, a)) {
                const double q = probability_of(r2, e.state);
                if (q > 0.0) {
                    out.w[i][e.state] += pa * std::sqrt(e.probability * q);
                }
            }
        }
    }
    return out;
}

struct ErrorBounds {
    double lower = 0.0;
    double upper = 0.0;

    [[nodiscard]] double upper_clamped() const { return std::min(upper, 1.0); }
};

inline ErrorBounds error_bounds_binary(double b, double q, double theta) {
    if (!(q > 0.0 && q < 1.0) || !(theta > 0.0 && theta < 1.0)) {
        throw ContractError("error bounds: priors must lie in (0,1)");
    }
    if (!(b >= 0.0 && b <= 1.0 + kDistributionTolerance)) {
        throw ContractError("error bounds: coefficient must lie in [0,1]");
    }
    ErrorBounds out;
    out.lower = 0.5 * std::min(theta, 1.0 - theta) * b * b;
    out.upper = std::max(std::sqrt((1.0 - q) / q) * theta, std::sqrt(q / (1.0 - q)) * (1.0 - theta)) * b;
    return out;
}

namespace detail {

inline void check_prior(const std::vector<double>& p, std::size_t n, const char* what) {
    if (p.size() != n) {
        throw ContractError(std::string("error bounds: ") + what + " has the wrong dimension");
    }
    double total = 0.0;
    for (auto x : p) {
        if (!(x > 0.0)) {
            throw ContractError(std::string("error bounds: ") + what + " must be positive");
        }
        total += x;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
        throw ContractError(std::string("error bounds: ") + what + " must sum to 1");
    }
}

}  // namespace detail

/// Pairwise coefficients `bc[i][j]` (diagonal ignored).
inline ErrorBounds error_bounds_multi(const std::vector<std::vector<double>>& bc, const std::vector<double>& q,
                                      const std::vector<double>& theta) {
    const auto n = bc.size();
    if (n < 2) {
        throw ContractError("error bounds: need at least two hypotheses");
    }
    for (const auto& row : bc) {
        if (row.size() != n) {
            throw ContractError("error bounds: coefficient matrix is not square");
        }
    }
    detail::check_prior(q, n, "q");
    detail::check_prior(theta, n, "theta");

    ErrorBounds out;
    for (std::size_t k = 0; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i != k) {
                acc += std::min(theta[i], theta[k]) * bc[i][k] * bc[i][k];
            }
        }
        out.lower = std::max(out.lower, 0.5 * acc);
    }
    double ratio = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ratio = std::max(ratio, theta[i] / q[i]);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            acc += std::sqrt(q[i] * q[j]) * bc[i][j];
        }
    }
    out.upper = ratio * acc;
    return out;
}

struct BcCurve {
    ModelIndex first = 0;
    ModelIndex second = 1;
    std::vector<double> values;
};

/**
 * B_ij(0..horizon) for every pair i<j under a DetectionPolicy, exactly, by
 * forward accumulation of sqrt(P_i P_j) over (controller state, state).
 */
inline std::vector<BcCurve> pairwise_bc_curve(const Mmdp& m, const DetectionPolicy& policy, std::size_t horizon,
                                              std::size_t cap = kCurveHorizonCap) {
    if (horizon > cap) {
        throw ContractError("pairwise_bc_curve: horizon " + std::to_string(horizon) + " exceeds the cap " +
                            std::to_string(cap));
    }
    using Node = std::pair<PolicyCursor, StateIndex>;
    std::vector<BcCurve> out;
    const auto start = policy_exec::enter(policy, m.all_models(), m.initial());
    if (!start) {
        throw ContractError("pairwise_bc_curve: policy has no entry for the initial configuration");
    }
    for (ModelIndex i = 0; i < m.size(); ++i) {
        for (ModelIndex j = i + 1; j < m.size(); ++j) {
            const auto& mi = m.model(i);
            const auto& mj = m.model(j);
            BcCurve curve{i, j, {}};
            std::map<Node, double> mass{{{*start, m.initial()}, 1.0}};
            for (std::size_t t = 0;; ++t) {
                double total = 0.0;
                for (const auto& [_, x] : mass) {
                    total += x;
                }
                curve.values.push_back(total);
                if (t == horizon) {
                    break;
                }
                std::map<Node, double> next;
                for (const auto& [node, x] : mass) {
                    const auto& [cursor, s] = node;
                    const auto w = policy_exec::action_weights(policy, cursor, s, m.num_actions(s));
                    if (w.empty()) {
                        throw ContractError("pairwise_bc_curve: policy prescribes no action at state " +
                                            m.states()[s]);
                    }
                    for (ActionIndex a = 0; a < w.size(); ++a) {
                        if (w[a] == 0.0) {
                            continue;
                        }
                        const auto& rj = mj.row(s, a);
                        for (const auto& e : mi.row(s, a)) {
                            const double pj = probability_of(rj, e.state);
                            if (pj == 0.0) {
                                continue;
                            }
                            const auto survivors = m.possible_models(cursor.active, s, a, e.state);
                            const auto moved = policy_exec::observe(policy, cursor, e.state, survivors);
                            if (!moved) {
                                throw ContractError("pairwise_bc_curve: policy has no entry after a model was ruled out");
                            }
                            next[{*moved, e.state}] += x * w[a] * std::sqrt(e.probability * pj);
                        }
                    }
                }
                mass.swap(next);
            }
            out.push_back(std::move(curve));
        }
    }
    return out;
}

/// Pairwise curves under a stationary policy (any policy, no detection table).
inline std::vector<BcCurve> pairwise_bc_curve(const Mmdp& m, const StationaryPolicy& policy, std::size_t horizon) {
    std::vector<BcCurve> out;
    for (ModelIndex i = 0; i < m.size(); ++i) {
        for (ModelIndex j = i + 1; j < m.size(); ++j) {
            out.push_back({i, j, bc_matrix(m.model(i), m.model(j), policy).curve(horizon)});
        }
    }
    return out;
}

/// Multi-model error bounds along pairwise curves (all curves must have equal length).
inline std::vector<ErrorBounds> bounds_along(const std::vector<BcCurve>& curves, std::size_t n,
                                             const std::vector<double>& q, const std::vector<double>& theta) {
    if (curves.empty()) {
        throw ContractError("bounds_along: no curves");
    }
    const auto len = curves.front().values.size();
    std::vector<ErrorBounds> out;
    for (std::size_t t = 0; t < len; ++t) {
        std::vector<std::vector<double>> bc(n, std::vector<double>(n, 1.0));
        for (const auto& c : curves) {
            if (c.values.size() != len) {
                throw ContractError("bounds_along: curves differ in length");
            }
            bc[c.first][c.second] = bc[c.second][c.first] = c.values[t];
        }
        out.push_back(error_bounds_multi(bc, q, theta));
    }
    return out;
}

struct DecayFit {
    double lambda = 1.0;
    double r_squared = std::numeric_limits<double>::quiet_NaN();
    /// log B constant on the window: R^2 undefined.
    bool degenerate = false;
    /// A zero value inside the window: detection already certain, lambda = 0.
    bool certain = false;
};

/// Least squares of log B(t) = log c + t log lambda over t in [first, last].
inline DecayFit decay_fit(const std::vector<double>& curve, std::size_t first, std::size_t last) {
    if (first >= last || last >= curve.size()) {
        throw ContractError("decay_fit: window must hold at least two points inside the curve");
    }
    DecayFit fit;
    for (auto t = first; t <= last; ++t) {
        if (!(curve[t] > 0.0)) {
            fit.lambda = 0.0;
            fit.certain = true;
            return fit;
        }
    }
    const auto n = static_cast<double>(last - first + 1);
    double mx = 0.0;
    double my = 0.0;
    for (auto t = first; t <= last; ++t) {
        mx += static_cast<double>(t);
        my += std::log(curve[t]);
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (auto t = first; t <= last; ++t) {
        const double dx = static_cast<double>(t) - mx;
        const double dy = std::log(curve[t]) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    const double slope = sxy / sxx;
    fit.lambda = std::exp(slope);
    if (syy <= 1e-300) {
        fit.degenerate = true;
        return fit;
    }
    double sse = 0.0;
    for (auto t = first; t <= last; ++t) {
        const double r = std::log(curve[t]) - (my + slope * (static_cast<double>(t) - mx));
        sse += r * r;
    }
    fit.r_squared = 1.0 - sse / syy;
    return fit;
}

/// Default window: the second half of the curve.
inline DecayFit decay_fit(const std::vector<double>& curve) {
    if (curve.size() < 4) {
        throw ContractError("decay_fit: curve too short for the default window");
    }
    return decay_fit(curve, curve.size() / 2, curve.size() - 1);
}

}  // namespace apd

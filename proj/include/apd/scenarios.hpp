#pragma once

#include <apd/graph.hpp>
#include <apd/model_json.hpp>
#include <apd/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace apd {

// ---- grid world --------------------------------------------------------------

using Cell = std::pair<int, int>;

struct GridSpec {
    int width = 0;
    int height = 0;
    std::set<Cell> obstacles;
    std::set<Cell> goal_region;
    double p_stay = 0.35;
    double p_leave = 0.15;
    double p_stay_active = 0.15;
    double p_leave_active = 0.35;
    Cell initial{0, 0};
};

inline std::string cell_name(Cell c) { return std::to_string(c.first) + "," + std::to_string(c.second); }

namespace detail {

inline void check_probability(double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ModelError(std::string("grid spec: ") + what + " must lie in [0,1]");
    }
}

inline int distance_to_region(Cell c, const std::set<Cell>& region) {
    int best = std::numeric_limits<int>::max();
    for (const auto& g : region) {
        best = std::min(best, std::abs(g.first - c.first) + std::abs(g.second - c.second));
    }
    return best;
}

/// Region-cell row: stay mass on the cell, leave mass split over outside neighbors, rest over inside neighbors.
inline Distribution region_row(StateIndex self, const std::vector<StateIndex>& inside,
                               const std::vector<StateIndex>& outside, double stay, double leave) {
    Distribution row{{self, stay}};
    double rest = 1.0 - stay;
    if (!outside.empty()) {
        for (auto t : outside) {
            row.push_back({t, leave / static_cast<double>(outside.size())});
        }
        rest -= leave;
    }
    if (inside.empty()) {
        row.push_back({self, rest});
    } else {
        for (auto t : inside) {
            row.push_back({t, rest / static_cast<double>(inside.size())});
        }
    }
    return normalize_layout(std::move(row));
}

}  // namespace detail

/**
 * Two-model grid: M1 normal, M2 intruder. Outside the goal region one "move"
 * action, biased 2:1 toward cells closer to the region. Inside, "observe" and
 * "surveil"; only the intruder under "surveil" uses the active stay/leave pair.
 */
inline Mmdp gen_grid(const GridSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0) {
        throw ModelError("grid spec: width and height must be positive");
    }
    detail::check_probability(spec.p_stay, "p_stay");
    detail::check_probability(spec.p_leave, "p_leave");
    detail::check_probability(spec.p_stay_active, "p_stay_active");
    detail::check_probability(spec.p_leave_active, "p_leave_active");
    if (spec.p_stay + spec.p_leave > 1.0 + kProbabilityTolerance ||
        spec.p_stay_active + spec.p_leave_active > 1.0 + kProbabilityTolerance) {
        throw ModelError("grid spec: stay and leave probabilities exceed 1");
    }
    auto inside_grid = [&](Cell c) { return c.first >= 0 && c.second >= 0 && c.first < spec.width && c.second < spec.height; };
    if (spec.goal_region.empty()) {
        throw ModelError("grid spec: empty goal region");
    }
    for (const auto& c : spec.goal_region) {
        if (!inside_grid(c)) {
            throw ModelError("grid spec: goal cell " + cell_name(c) + " outside the grid");
        }
        if (spec.obstacles.contains(c)) {
            throw ModelError("grid spec: goal cell " + cell_name(c) + " is an obstacle");
        }
    }
    if (!inside_grid(spec.initial) || spec.obstacles.contains(spec.initial)) {
        throw ModelError("grid spec: initial cell must be a free cell");
    }

    std::vector<Cell> cells;
    std::map<Cell, StateIndex> index;
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            if (!spec.obstacles.contains({x, y})) {
                index[{x, y}] = cells.size();
                cells.emplace_back(x, y);
            }
        }
    }
    Mdp normal;
    normal.name = "normal";
    normal.initial = index.at(spec.initial);
    normal.kernel.resize(cells.size());
    Mdp intruder;
    intruder.name = "intruder";
    intruder.kernel.resize(cells.size());
    const std::vector<Cell> moves{{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (StateIndex s = 0; s < cells.size(); ++s) {
        const auto c = cells[s];
        normal.states.push_back(cell_name(c));
        std::vector<StateIndex> neighbors;
        for (const auto& d : moves) {
            Cell n{c.first + d.first, c.second + d.second};
            if (index.contains(n)) {
                neighbors.push_back(index.at(n));
            }
        }
        if (!spec.goal_region.contains(c)) {
            normal.actions.push_back({"move"});
            const int here = detail::distance_to_region(c, spec.goal_region);
            Distribution row;
            double total = 0.0;
            for (auto t : neighbors) {
                const double w = detail::distance_to_region(cells[t], spec.goal_region) < here ? 2.0 : 1.0;
                row.push_back({t, w});
                total += w;
            }
            if (row.empty()) {
                throw ModelError("grid spec: cell " + cell_name(c) + " cannot reach the goal region");
            }
            for (auto& e : row) {
                e.probability /= total;
            }
            row = normalize_layout(std::move(row));
            normal.kernel[s] = {row};
            intruder.kernel[s] = {row};
            continue;
        }
        normal.actions.push_back({"observe", "surveil"});
        std::vector<StateIndex> in;
        std::vector<StateIndex> out;
        for (auto t : neighbors) {
            (spec.goal_region.contains(cells[t]) ? in : out).push_back(t);
        }
        const auto passive = detail::region_row(s, in, out, spec.p_stay, spec.p_leave);
        const auto active = detail::region_row(s, in, out, spec.p_stay_active, spec.p_leave_active);
        normal.kernel[s] = {passive, passive};
        intruder.kernel[s] = {passive, active};
    }
    intruder.states = normal.states;
    intruder.actions = normal.actions;
    intruder.initial = normal.initial;

    const auto ts = induced_transition_system(normal);
    StateSet goal(cells.size());
    for (const auto& c : spec.goal_region) {
        goal.insert(index.at(c));
    }
    // Reachability under some action sequence (move has a single action, so any path counts).
    std::vector<std::vector<StateIndex>> reverse(cells.size());
    for (const auto& [s, a, t] : ts.triples()) {
        reverse[t].push_back(s);
    }
    StateSet reaches = goal;
    std::vector<StateIndex> queue = goal.members();
    while (!queue.empty()) {
        const auto t = queue.back();
        queue.pop_back();
        for (auto s : reverse[t]) {
            if (reaches.insert(s)) {
                queue.push_back(s);
            }
        }
    }
    for (StateIndex s = 0; s < cells.size(); ++s) {
        if (!reaches.contains(s)) {
            throw ModelError("grid spec: cell " + normal.states[s] + " cannot reach the goal region");
        }
    }
    Mmdp out({std::move(normal), std::move(intruder)});
    require_valid(out);
    return out;
}

namespace detail {

inline std::set<Cell> read_cells(const json& doc, const std::string& key) {
    std::set<Cell> out;
    auto it = doc.find(key);
    if (it == doc.end()) {
        return out;
    }
    if (!it->is_array()) {
        schema_error("/" + key, "expected an array of [x, y] pairs");
    }
    for (std::size_t k = 0; k < it->size(); ++k) {
        const auto& c = (*it)[k];
        if (!c.is_array() || c.size() != 2 || !c[0].is_number_integer() || !c[1].is_number_integer()) {
            schema_error("/" + key + "/" + std::to_string(k), "expected an [x, y] integer pair");
        }
        out.emplace(c[0].get<int>(), c[1].get<int>());
    }
    return out;
}

inline double read_number(const json& doc, const std::string& key, double fallback) {
    auto it = doc.find(key);
    if (it == doc.end()) {
        return fallback;
    }
    if (!it->is_number()) {
        schema_error("/" + key, "expected a number");
    }
    return it->get<double>();
}

inline long long read_integer(const json& doc, const std::string& key) {
    const auto& v = require_field(doc, key, "");
    if (!v.is_number_integer()) {
        schema_error("/" + key, "expected an integer");
    }
    return v.get<long long>();
}

}  // namespace detail

/// `{"width","height","goal_region":[[x,y],..],"obstacles":[..],"p_stay",.., "initial":[x,y]}`.
inline GridSpec grid_spec_from_json(const json& doc) {
    if (!doc.is_object()) {
        detail::schema_error("", "expected an object");
    }
    GridSpec spec;
    spec.width = static_cast<int>(detail::read_integer(doc, "width"));
    spec.height = static_cast<int>(detail::read_integer(doc, "height"));
    spec.goal_region = detail::read_cells(doc, "goal_region");
    spec.obstacles = detail::read_cells(doc, "obstacles");
    spec.p_stay = detail::read_number(doc, "p_stay", spec.p_stay);
    spec.p_leave = detail::read_number(doc, "p_leave", spec.p_leave);
    spec.p_stay_active = detail::read_number(doc, "p_stay_active", spec.p_stay_active);
    spec.p_leave_active = detail::read_number(doc, "p_leave_active", spec.p_leave_active);
    if (auto it = doc.find("initial"); it != doc.end()) {
        if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_integer() || !(*it)[1].is_number_integer()) {
            detail::schema_error("/initial", "expected an [x, y] integer pair");
        }
        spec.initial = {(*it)[0].get<int>(), (*it)[1].get<int>()};
    }
    return spec;
}

// ---- recommendation system ---------------------------------------------------

struct RecSysSpec {
    std::size_t items = 10;
    std::size_t types = 6;
    std::size_t history_length = 2;
    /// Drawn uniformly from [0, 1/max(v) - 1] when absent.
    std::optional<double> alpha;
    std::uint64_t seed = 0;
};

/// Everything the generator drew from the seed.
struct RecSysDesign {
    RecSysSpec spec;
    /// Base purchase probabilities, sorted decreasingly: v[r] goes to a type's rank-r item.
    std::vector<double> v;
    double alpha = 0.0;
    /// rankings[k][r] = item at rank r for type k (0-based items).
    std::vector<std::vector<std::size_t>> rankings;
    /// (state, recommended item) whose row loses the type's lowest-ranked item.
    std::vector<std::pair<StateIndex, std::size_t>> revealing;
};

inline double recsys_alpha_bound(const std::vector<double>& v) {
    return 1.0 / *std::max_element(v.begin(), v.end()) - 1.0;
}

/// State names "[]", "[i]", "[i,j]" (1-based items) in that order.
inline std::vector<std::string> recsys_states(std::size_t items) {
    std::vector<std::string> out{"[]"};
    for (std::size_t i = 1; i <= items; ++i) {
        out.push_back("[" + std::to_string(i) + "]");
    }
    for (std::size_t i = 1; i <= items; ++i) {
        for (std::size_t j = 1; j <= items; ++j) {
            out.push_back("[" + std::to_string(i) + "," + std::to_string(j) + "]");
        }
    }
    return out;
}

/// Successor history after buying `item` (0-based) at state `s`.
inline StateIndex recsys_next(std::size_t items, StateIndex s, std::size_t item) {
    if (s == 0) {
        return 1 + item;
    }
    const std::size_t last = s <= items ? s - 1 : (s - 1 - items) % items;
    return 1 + items + last * items + item;
}

inline RecSysDesign recsys_design(const RecSysSpec& spec) {
    if (spec.items < 3) {
        throw ModelError("recsys spec: at least 3 items required");
    }
    if (spec.types < 2 || spec.types > ActiveSet::kMaxModels) {
        throw ModelError("recsys spec: type count must lie in [2, 64]");
    }
    if (spec.history_length != 2) {
        throw ModelError("recsys spec: only history length 2 is supported");
    }
    const std::size_t num_states = 1 + spec.items + spec.items * spec.items;
    if (spec.types > (num_states - 1) * (spec.items - 1)) {
        throw ModelError("recsys spec: too many types for distinct revealing rows");
    }
    Rng rng(spec.seed, 0);
    RecSysDesign d;
    d.spec = spec;
    double total = 0.0;
    for (std::size_t i = 0; i < spec.items; ++i) {
        d.v.push_back(rng.exponential());
        total += d.v.back();
    }
    for (auto& x : d.v) {
        x /= total;
    }
    std::sort(d.v.begin(), d.v.end(), std::greater<>());
    const double bound = recsys_alpha_bound(d.v);
    if (spec.alpha) {
        if (!(*spec.alpha >= 0.0 && *spec.alpha <= bound)) {
            throw ModelError("recsys spec: alpha outside [0, 1/max(v) - 1] = [0, " + std::to_string(bound) + "]");
        }
        d.alpha = *spec.alpha;
    } else {
        d.alpha = rng.uniform() * bound;
    }

    double permutations = 1.0;
    for (std::size_t i = 2; i <= spec.items; ++i) {
        permutations *= static_cast<double>(i);
    }
    if (static_cast<double>(spec.types) > permutations) {
        throw ModelError("recsys spec: more types than distinct rankings");
    }
    std::set<std::vector<std::size_t>> seen;
    while (d.rankings.size() < spec.types) {
        std::vector<std::size_t> ranking(spec.items);
        for (std::size_t i = 0; i < spec.items; ++i) {
            ranking[i] = i;
        }
        rng.shuffle(ranking);
        if (seen.insert(ranking).second) {
            d.rankings.push_back(std::move(ranking));
        }
    }

    std::set<std::pair<StateIndex, std::size_t>> taken;
    for (std::size_t k = 0; k < spec.types; ++k) {
        const auto lowest = d.rankings[k].back();
        while (true) {
            const auto s = 1 + rng.below(num_states - 1);
            auto rec = rng.below(spec.items - 1);
            if (rec >= lowest) {
                ++rec;
            }
            if (taken.emplace(s, rec).second) {
                d.revealing.emplace_back(s, rec);
                break;
            }
        }
    }
    return d;
}

/// Purchase probabilities of type k with item `rec` recommended (all items positive before any zeroing).
inline std::vector<double> recsys_purchase_row(const RecSysDesign& d, std::size_t k, std::size_t rec) {
    const auto n = d.spec.items;
    std::vector<double> p(n);
    for (std::size_t r = 0; r < n; ++r) {
        p[d.rankings[k][r]] = d.v[r];
    }
    const double boosted = p[rec] * (1.0 + d.alpha);
    const double scale = p[rec] < 1.0 ? (1.0 - boosted) / (1.0 - p[rec]) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = i == rec ? boosted : p[i] * scale;
    }
    return p;
}

inline Mmdp gen_recsys(const RecSysDesign& d) {
    const auto n = d.spec.items;
    const auto names = recsys_states(n);
    std::vector<std::string> recs;
    for (std::size_t i = 1; i <= n; ++i) {
        recs.push_back("r" + std::to_string(i));
    }
    std::vector<Mdp> models;
    for (std::size_t k = 0; k < d.spec.types; ++k) {
        Mdp m;
        m.name = "type" + std::to_string(k + 1);
        m.states = names;
        m.actions.assign(names.size(), recs);
        m.initial = 0;
        m.kernel.resize(names.size());
        for (StateIndex s = 0; s < names.size(); ++s) {
            for (std::size_t rec = 0; rec < n; ++rec) {
                auto p = recsys_purchase_row(d, k, rec);
                if (d.revealing[k] == std::pair{s, rec}) {
                    p[d.rankings[k].back()] = 0.0;
                    double total = 0.0;
                    for (auto x : p) {
                        total += x;
                    }
                    for (auto& x : p) {
                        x /= total;
                    }
                }
                Distribution row;
                for (std::size_t item = 0; item < n; ++item) {
                    row.push_back({recsys_next(n, s, item), p[item]});
                }
                m.kernel[s].push_back(normalize_layout(std::move(row)));
            }
        }
        models.push_back(std::move(m));
    }
    Mmdp out(std::move(models));
    require_valid(out);
    return out;
}

inline Mmdp gen_recsys(const RecSysSpec& spec) { return gen_recsys(recsys_design(spec)); }

/// `{"items":10,"types":6,"seed":0,"alpha":0.3,"history_length":2}`; everything but items/types optional.
inline RecSysSpec recsys_spec_from_json(const json& doc) {
    if (!doc.is_object()) {
        detail::schema_error("", "expected an object");
    }
    RecSysSpec spec;
    auto count = [&](const std::string& key) {
        const auto v = detail::read_integer(doc, key);
        if (v < 0) {
            detail::schema_error("/" + key, "must be nonnegative");
        }
        return static_cast<std::size_t>(v);
    };
    spec.items = count("items");
    spec.types = count("types");
    if (doc.contains("history_length")) {
        spec.history_length = count("history_length");
    }
    if (doc.contains("seed")) {
        const auto& v = doc.at("seed");
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            detail::schema_error("/seed", "expected a nonnegative integer");
        }
        spec.seed = v.get<std::uint64_t>();
    }
    if (doc.contains("alpha")) {
        spec.alpha = detail::read_number(doc, "alpha", 0.0);
    }
    return spec;
}

}  // namespace apd

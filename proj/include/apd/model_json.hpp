#pragma once

#include <apd/model.hpp>

#include <json.hpp>

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>

namespace apd {

using json = nlohmann::json;

namespace detail {

[[noreturn]] inline void schema_error(const std::string& path, const std::string& what) {
    throw ModelError("schema violation at " + path + ": " + what);
}

inline const json& require_field(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) {
        schema_error(path, "expected an object");
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
        schema_error(path + "/" + key, "missing field");
    }
    return *it;
}

inline const std::string& require_string(const json& v, const std::string& path) {
    if (!v.is_string()) {
        schema_error(path, "expected a string");
    }
    return v.get_ref<const std::string&>();
}

}  // namespace detail

/**
 * Reads the model document
 * `{"states":[..], "actions":{s:[..]}, "initial":s, "models":[{"name":..,"delta":[{"from","action","to","p"}]}]}`.
 *
 * Zero-probability entries are dropped. Throws ModelError on schema
 * violations (with a JSON-pointer path) and on rows that do not sum to one.
 */
inline Mmdp parse_mmdp(const json& doc) {
    using detail::require_field;
    using detail::require_string;
    using detail::schema_error;

    const auto& states_json = require_field(doc, "states", "");
    if (!states_json.is_array() || states_json.empty()) {
        schema_error("/states", "expected a nonempty array of state identifiers");
    }
    std::vector<std::string> states;
    std::unordered_map<std::string, StateIndex> state_index;
    for (std::size_t k = 0; k < states_json.size(); ++k) {
        const auto& id = require_string(states_json[k], "/states/" + std::to_string(k));
        if (!state_index.emplace(id, states.size()).second) {
            schema_error("/states/" + std::to_string(k), "duplicate state '" + id + "'");
        }
        states.push_back(id);
    }

    const auto& actions_json = require_field(doc, "actions", "");
    if (!actions_json.is_object()) {
        schema_error("/actions", "expected an object mapping states to action lists");
    }
    std::vector<std::vector<std::string>> actions(states.size());
    std::vector<std::unordered_map<std::string, ActionIndex>> action_index(states.size());
    for (const auto& [key, list] : actions_json.items()) {
        auto it = state_index.find(key);
        if (it == state_index.end()) {
            schema_error("/actions/" + key, "unknown state");
        }
        if (!list.is_array() || list.empty()) {
            schema_error("/actions/" + key, "expected a nonempty array of action identifiers");
        }
        for (std::size_t k = 0; k < list.size(); ++k) {
            const auto& a = require_string(list[k], "/actions/" + key + "/" + std::to_string(k));
            if (!action_index[it->second].emplace(a, actions[it->second].size()).second) {
                schema_error("/actions/" + key + "/" + std::to_string(k), "duplicate action '" + a + "'");
            }
            actions[it->second].push_back(a);
        }
    }
    for (StateIndex s = 0; s < states.size(); ++s) {
        if (actions[s].empty()) {
            schema_error("/actions/" + states[s], "missing action list");
        }
    }

    const auto& initial_json = require_field(doc, "initial", "");
    if (!initial_json.is_string()) {
        schema_error("/initial", "expected a single state identifier (initial distributions are not supported)");
    }
    auto init_it = state_index.find(initial_json.get<std::string>());
    if (init_it == state_index.end()) {
        schema_error("/initial", "unknown state '" + initial_json.get<std::string>() + "'");
    }

    const auto& models_json = require_field(doc, "models", "");
    if (!models_json.is_array()) {
        schema_error("/models", "expected an array");
    }
    std::vector<Mdp> models;
    for (std::size_t i = 0; i < models_json.size(); ++i) {
        const auto path = "/models/" + std::to_string(i);
        const auto& mj = models_json[i];
        if (!mj.is_object()) {
            schema_error(path, "expected an object");
        }
        Mdp m;
        m.states = states;
        m.actions = actions;
        m.initial = init_it->second;
        m.name = "M" + std::to_string(i + 1);
        if (auto it = mj.find("name"); it != mj.end()) {
            m.name = require_string(*it, path + "/name");
        }
        m.kernel.resize(states.size());
        for (StateIndex s = 0; s < states.size(); ++s) {
            m.kernel[s].resize(actions[s].size());
        }
        std::set<std::tuple<StateIndex, ActionIndex, StateIndex>> seen;
        const auto& delta = require_field(mj, "delta", path);
        if (!delta.is_array()) {
            schema_error(path + "/delta", "expected an array");
        }
        for (std::size_t k = 0; k < delta.size(); ++k) {
            const auto epath = path + "/delta/" + std::to_string(k);
            const auto& e = delta[k];
            const auto& from = require_string(require_field(e, "from", epath), epath + "/from");
            const auto& act = require_string(require_field(e, "action", epath), epath + "/action");
            const auto& to = require_string(require_field(e, "to", epath), epath + "/to");
            const auto& pj = require_field(e, "p", epath);
            if (!pj.is_number()) {
                schema_error(epath + "/p", "expected a number");
            }
            const double p = pj.get<double>();
            auto fs = state_index.find(from);
            if (fs == state_index.end()) {
                schema_error(epath + "/from", "unknown state '" + from + "'");
            }
            auto fa = action_index[fs->second].find(act);
            if (fa == action_index[fs->second].end()) {
                schema_error(epath + "/action", "action '" + act + "' not available at state '" + from + "'");
            }
            auto ts = state_index.find(to);
            if (ts == state_index.end()) {
                schema_error(epath + "/to", "dangling successor '" + to + "'");
            }
            if (!(p >= 0.0 && p <= 1.0)) {
                schema_error(epath + "/p", "probability outside [0,1]");
            }
            if (!seen.emplace(fs->second, fa->second, ts->second).second) {
                schema_error(epath, "duplicate transition (" + from + ", " + act + ", " + to + ")");
            }
            if (p > 0.0) {
                m.kernel[fs->second][fa->second].push_back({ts->second, p});
            }
        }
        for (StateIndex s = 0; s < states.size(); ++s) {
            for (ActionIndex a = 0; a < actions[s].size(); ++a) {
                auto& row = m.kernel[s][a];
                row = normalize_layout(std::move(row));
                const double sum = total_mass(row);
                if (std::abs(sum - 1.0) > kProbabilityTolerance) {
                    std::ostringstream msg;
                    msg.precision(17);
                    msg << "probability-sum violation in model " << (i + 1) << " (" << m.name << ") at (state "
                        << states[s] << ", action " << actions[s][a] << "): sum = " << sum;
                    throw ModelError(msg.str());
                }
            }
        }
        models.push_back(std::move(m));
    }

    Mmdp out(std::move(models));
    require_valid(out);
    return out;
}

inline Mmdp parse_mmdp(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ModelError(std::string("malformed JSON: ") + e.what());
    }
    return parse_mmdp(doc);
}

/// Inverse of parse_mmdp; zero entries are omitted.
inline json serialize_mmdp(const Mmdp& m) {
    json doc;
    doc["states"] = m.states();
    json acts = json::object();
    for (StateIndex s = 0; s < m.num_states(); ++s) {
        acts[m.states()[s]] = m.actions(s);
    }
    doc["actions"] = acts;
    doc["initial"] = m.states()[m.initial()];
    json models = json::array();
    for (const auto& mdp : m.models()) {
        json delta = json::array();
        for (StateIndex s = 0; s < mdp.num_states(); ++s) {
            for (ActionIndex a = 0; a < mdp.num_actions(s); ++a) {
                for (const auto& e : mdp.row(s, a)) {
                    delta.push_back({{"from", mdp.states[s]},
                                     {"action", mdp.actions[s][a]},
                                     {"to", mdp.states[e.state]},
                                     {"p", e.probability}});
                }
            }
        }
        models.push_back({{"name", mdp.name}, {"delta", delta}});
    }
    doc["models"] = models;
    return doc;
}

}  // namespace apd

#pragma once

#include <apd/apd.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace apd::cli {

enum ExitCode : int { ok = 0, usage = 1, invalid_model = 2, no_policy = 3, contract_breach = 4 };

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CLI::ValidationError("cannot open " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ModelError(path + ": malformed JSON: " + e.what());
    }
}

inline std::string number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline StateIndex state_named(const Mmdp& m, const std::string& id) {
    auto s = m.skeleton().find_state(id);
    if (!s) {
        throw ModelError("unknown state '" + id + "'");
    }
    return *s;
}

inline ModelIndex model_number(const Mmdp& m, long long i, const std::string& flag) {
    if (i < 1 || i > static_cast<long long>(m.size())) {
        throw CLI::ValidationError(flag, "model index must lie in [1, " + std::to_string(m.size()) + "]");
    }
    return static_cast<ModelIndex>(i - 1);
}

inline json mec_json(const Mec& mec, const TransitionSystem& ts) {
    json states = json::object();
    for (const auto& [s, acts] : mec.choices) {
        json names = json::array();
        for (auto a : acts) {
            names.push_back(ts.actions[s][a]);
        }
        states[ts.states[s]] = names;
    }
    return {{"states", states}};
}

inline json mecs_json(const std::vector<Mec>& mecs, const TransitionSystem& ts) {
    json out = json::array();
    for (const auto& mec : mecs) {
        out.push_back(mec_json(mec, ts));
    }
    return out;
}

inline json active_json(ActiveSet a) {
    json out = json::array();
    for (auto i : a.indices()) {
        out.push_back(i + 1);
    }
    return out;
}

inline json pairs_json(const std::set<StateAction>& pairs, const Mmdp& m) {
    json out = json::array();
    for (const auto& p : pairs) {
        out.push_back({{"state", m.states()[p.state]}, {"action", m.actions(p.state)[p.action]}});
    }
    return out;
}

inline json diagnostics_json(const ApdDiagnostics& d, const Mmdp& m) {
    const auto& ts = d.structure;
    json reach = json::array();
    for (auto s : d.reach_set.members()) {
        reach.push_back(ts.states[s]);
    }
    json out = {{"mecs", mecs_json(d.mecs, ts)},
                {"informative_mecs", mecs_json(d.informative_mecs, ts)},
                {"reach_set", reach},
                {"cache", {{"hits", d.cache.hits}, {"misses", d.cache.misses}}}};
    out["trap_witness"] = d.trap_witness ? mec_json(*d.trap_witness, ts) : json(nullptr);
    json explored = json::array();
    for (const auto& [s, _] : d.explored) {
        explored.push_back(m.states()[s]);
    }
    out["explored"] = explored;
    json edges = json::array();
    for (const auto& e : d.terminal_edges) {
        edges.push_back({{"state", m.states()[e.state]},
                         {"action", m.actions(e.state)[e.action]},
                         {"successor", m.states()[e.successor]},
                         {"possible", active_json(e.possible)},
                         {"flag", e.detectable ? 1 : 0}});
    }
    out["terminal_edges"] = edges;
    return out;
}

inline std::vector<double> parse_vector(const std::string& text, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw CLI::ValidationError(flag, "expected comma-separated numbers");
        }
    }
    return out;
}

}  // namespace detail

/**
 * Entry point shared by the executable and the tests. `args` excludes the
 * program name.
 */
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Detection policies for multi-model MDPs", "apd"};
    app.require_subcommand(1);
    std::string output;
    app.add_option("-o,--output", output, "Write the result to this file instead of stdout");

    std::string model_path;
    std::string policy_path;
    std::string spec_path;
    std::string initial;

    auto* validate = app.add_subcommand("validate", "Check a model file");
    validate->add_option("model", model_path)->required()->check(CLI::ExistingFile);

    auto* classify = app.add_subcommand("classify", "Informative and revealing state-action pairs");
    classify->add_option("model", model_path)->required()->check(CLI::ExistingFile);

    long long mec_model = 1;
    bool informative = false;
    auto* mec = app.add_subcommand("mec", "Maximal end components");
    mec->add_option("file", model_path, "Model file")->required()->check(CLI::ExistingFile);
    auto* mec_model_opt = mec->add_option("--model", mec_model, "MECs of the i-th model (1-based)");
    mec->add_flag("--informative", informative, "Informative MECs of a binary model's informative structure")
        ->excludes(mec_model_opt);

    bool no_memo = false;
    auto* synthesize = app.add_subcommand("synthesize", "Synthesize a detection policy");
    synthesize->add_option("model", model_path)->required()->check(CLI::ExistingFile);
    synthesize->add_option("--initial", initial, "Initial state (default: the model's)");
    synthesize->add_flag("--no-memo", no_memo, "Disable subproblem memoization");

    std::optional<long long> truth;
    std::uint64_t seed = 0;
    double threshold = 0.98;
    std::size_t max_steps = 10000;
    std::size_t trials = 1;
    std::size_t threads = 1;
    auto* simulate = app.add_subcommand("simulate", "Run the policy against a ground-truth model");
    simulate->add_option("model", model_path)->required()->check(CLI::ExistingFile);
    simulate->add_option("policy", policy_path)->required()->check(CLI::ExistingFile);
    simulate->add_option("--truth", truth, "Ground-truth model (1-based); drawn uniformly when omitted");
    simulate->add_option("--seed", seed)->required();
    simulate->add_option("--threshold", threshold)->capture_default_str();
    simulate->add_option("--max-steps", max_steps)->capture_default_str();
    simulate->add_option("--trials", trials)->capture_default_str()->check(CLI::PositiveNumber);
    simulate->add_option("--threads", threads)->capture_default_str()->check(CLI::PositiveNumber);
    simulate->add_option("--initial", initial, "Initial state (default: the model's)");

    std::size_t horizon = 0;
    std::string pair_text;
    std::string bounds_text;
    auto* bc = app.add_subcommand("bc", "Bhattacharyya coefficient curves and error bounds");
    bc->add_option("model", model_path)->required()->check(CLI::ExistingFile);
    bc->add_option("policy", policy_path)->required()->check(CLI::ExistingFile);
    bc->add_option("--horizon", horizon)->required();
    bc->add_option("--pair", pair_text, "Model pair i,j (default 1,2)");
    bc->add_option("--bounds", bounds_text, "Priors q1,..,qN:theta1,..,thetaN");
    bc->add_option("--initial", initial, "Initial state (default: the model's)");

    std::string kind;
    auto* gen = app.add_subcommand("gen", "Generate a scenario model");
    gen->add_option("kind", kind)->required()->check(CLI::IsMember({"grid", "recsys"}));
    gen->add_option("spec", spec_path)->required()->check(CLI::ExistingFile);

    std::vector<std::string> argv_store{"apd"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) {
        argv.push_back(a.data());
    }

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? ExitCode::ok : ExitCode::usage;
    }

    std::ostringstream result;
    int code = ExitCode::ok;
    try {
        auto load_model = [&] {
            auto m = parse_mmdp(detail::read_json(model_path));
            if (!initial.empty()) {
                m = m.with_initial(detail::state_named(m, initial));
            }
            return m;
        };
        if (*validate) {
            const auto m = load_model();
            result << "valid: " << m.size() << " models, " << m.num_states() << " states\n";
        } else if (*classify) {
            const auto m = load_model();
            json pairs = json::array();
            for (ModelIndex i = 0; i < m.size(); ++i) {
                for (ModelIndex j = i + 1; j < m.size(); ++j) {
                    const auto c = classify_pairs(m.model(i), m.model(j));
                    json states = json::array();
                    for (StateIndex s = 0; s < m.num_states(); ++s) {
                        if (c.states[s] == StateKind::revealing) {
                            states.push_back(m.states()[s]);
                        }
                    }
                    json chosen = json::object();
                    for (const auto& [s, a] : c.chosen_revealing) {
                        chosen[m.states()[s]] = m.actions(s)[a];
                    }
                    pairs.push_back({{"pair", {i + 1, j + 1}},
                                     {"informative", detail::pairs_json(c.isa(), m)},
                                     {"revealing", detail::pairs_json(c.pairs_of_kind(PairKind::revealing), m)},
                                     {"revealing_states", states},
                                     {"chosen_revealing", chosen}});
                }
            }
            result << json{{"pairs", pairs}}.dump(2) << "\n";
        } else if (*mec) {
            const auto m = load_model();
            if (informative) {
                if (m.size() != 2) {
                    throw CLI::ValidationError("--informative", "requires a model file with exactly two models");
                }
                const auto p = preprocess(m.model(0), m.model(1));
                const auto ts = informative_structure(p);
                const auto mecs = informative_mecs(ts, p.isa);
                result << json{{"mecs", detail::mecs_json(mecs, ts)}}.dump(2) << "\n";
            } else {
                const auto i = detail::model_number(m, mec_model, "--model");
                const auto ts = induced_transition_system(m.model(i));
                result << json{{"mecs", detail::mecs_json(mec_decompose(ts), ts)}}.dump(2) << "\n";
            }
        } else if (*synthesize) {
            const auto m = load_model();
            const auto outcome = general_apd(m, m.initial(), GeneralApdOptions{!no_memo});
            json doc = outcome.policy ? policy_to_json(*outcome.policy, m) : json{{"entries", json::array()}};
            doc["exists"] = outcome.exists;
            doc["diagnostics"] = detail::diagnostics_json(outcome.diagnostics, m);
            result << doc.dump(2) << "\n";
            code = outcome.exists ? ExitCode::ok : ExitCode::no_policy;
        } else if (*simulate) {
            const auto m = load_model();
            const auto policy = policy_from_json(detail::read_json(policy_path), m);
            std::optional<ModelIndex> fixed;
            if (truth) {
                fixed = detail::model_number(m, *truth, "--truth");
            }
            SimOptions options;
            options.threshold = threshold;
            options.max_steps = max_steps;
            const DetectionController controller(policy, m);
            if (trials == 1) {
                Rng truth_rng(~seed, 0);
                const auto k = fixed ? *fixed : static_cast<ModelIndex>(truth_rng.below(m.size()));
                const auto trace = apd::simulate(m, k, controller, seed, options);
                result << "t,state,action";
                for (ModelIndex i = 0; i < m.size(); ++i) {
                    result << ",b_" << (i + 1);
                }
                result << "\n";
                for (const auto& row : trace.rows) {
                    result << row.t << "," << m.states()[row.state] << ","
                           << (row.action ? m.actions(row.state)[*row.action] : std::string());
                    for (auto x : row.belief.b) {
                        result << "," << detail::number(x);
                    }
                    result << "\n";
                }
            } else {
                const auto summary = run_batch(m, controller, fixed, trials, seed, options, threads);
                json per_truth = json::array();
                for (ModelIndex i = 0; i < m.size(); ++i) {
                    const auto& row = summary.per_truth[i];
                    per_truth.push_back(
                        {{"truth", i + 1},
                         {"runs", row.runs},
                         {"threshold_stops", row.threshold_stops},
                         {"correct", row.correct},
                         {"undetectable", row.undetectable},
                         {"accuracy", row.threshold_stops > 0 ? json(static_cast<double>(row.correct) /
                                                                     static_cast<double>(row.threshold_stops))
                                                               : json(nullptr)},
                         {"mean_stop_time",
                          row.runs > 0 ? json(row.total_stop_time / static_cast<double>(row.runs)) : json(nullptr)}});
                }
                json doc = {{"seed", seed},
                            {"trials", trials},
                            {"threshold", threshold},
                            {"max_steps", max_steps},
                            {"per_truth", per_truth},
                            {"threshold_stops", summary.threshold_stops},
                            {"undetectable", summary.undetectable},
                            {"error", summary.error.error},
                            {"std_error", summary.error.std_error}};
                result << doc.dump(2) << "\n";
            }
        } else if (*bc) {
            const auto m = load_model();
            const auto policy = policy_from_json(detail::read_json(policy_path), m);
            const auto curves = pairwise_bc_curve(m, policy, horizon);
            if (!bounds_text.empty()) {
                const auto colon = bounds_text.find(':');
                if (colon == std::string::npos) {
                    throw CLI::ValidationError("--bounds", "expected q1,..,qN:theta1,..,thetaN");
                }
                const auto q = detail::parse_vector(bounds_text.substr(0, colon), "--bounds");
                const auto theta = detail::parse_vector(bounds_text.substr(colon + 1), "--bounds");
                if (q.size() != m.size() || theta.size() != m.size()) {
                    throw CLI::ValidationError("--bounds", "expected " + std::to_string(m.size()) + " priors on each side");
                }
                const auto bounds = bounds_along(curves, m.size(), q, theta);
                result << "t,lower,upper_raw,upper_clamped\n";
                for (std::size_t t = 0; t < bounds.size(); ++t) {
                    result << t << "," << detail::number(bounds[t].lower) << "," << detail::number(bounds[t].upper)
                           << "," << detail::number(bounds[t].upper_clamped()) << "\n";
                }
            } else {
                ModelIndex i = 0;
                ModelIndex j = 1;
                if (!pair_text.empty()) {
                    const auto v = detail::parse_vector(pair_text, "--pair");
                    if (v.size() != 2 || v[0] == v[1]) {
                        throw CLI::ValidationError("--pair", "expected two distinct model indices i,j");
                    }
                    i = detail::model_number(m, static_cast<long long>(v[0]), "--pair");
                    j = detail::model_number(m, static_cast<long long>(v[1]), "--pair");
                    if (i > j) {
                        std::swap(i, j);
                    }
                }
                for (const auto& c : curves) {
                    if (c.first == i && c.second == j) {
                        result << "t,B\n";
                        for (std::size_t t = 0; t < c.values.size(); ++t) {
                            result << t << "," << detail::number(c.values[t]) << "\n";
                        }
                    }
                }
            }
        } else if (*gen) {
            const auto spec = detail::read_json(spec_path);
            const auto m = kind == "grid" ? gen_grid(grid_spec_from_json(spec)) : gen_recsys(recsys_spec_from_json(spec));
            result << serialize_mmdp(m).dump(2) << "\n";
        }
    } catch (const CLI::Error& e) {
        err << "error: " << e.what() << "\n";
        return ExitCode::usage;
    } catch (const ModelError& e) {
        err << "error: " << e.what() << "\n";
        return ExitCode::invalid_model;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return ExitCode::contract_breach;
    }

    if (output.empty()) {
        out << result.str();
    } else {
        std::ofstream file(output, std::ios::binary);
        if (!file) {
            err << "error: cannot write " << output << "\n";
            return ExitCode::usage;
        }
        file << result.str();
    }
    return code;
}

}  // namespace apd::cli

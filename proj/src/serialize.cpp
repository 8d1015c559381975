#include "qbex/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace qbex {

using nlohmann::json;

namespace {

json sparse_rows_to_json(const std::vector<const SparseRow*>& rows) {
    json out = json::array();
    for (const SparseRow* row : rows) {
        json jrow = json::array();
        for (std::size_t i = 0; i < row->size(); ++i)
            jrow.push_back(json::array({row->idx[i], row->prob[i]}));
        out.push_back(std::move(jrow));
    }
    return out;
}

std::vector<Index> terminal_from_json(const json& j) {
    std::vector<Index> terminal;
    if (j.contains("terminal_states")) {
        for (const auto& t : j.at("terminal_states")) terminal.push_back(t.get<Index>());
    }
    return terminal;
}

} // namespace

json mdp_to_json(const TabularMdp& mdp, Index dense_limit) {
    json j;
    j["n_states"] = mdp.n_states();
    j["n_actions"] = mdp.n_actions();
    j["discount"] = mdp.discount();
    j["terminal_states"] = mdp.terminal_states();

    json rewards = json::array();
    for (Index x = 0; x < mdp.n_states(); ++x) {
        json row = json::array();
        for (Index u = 0; u < mdp.n_actions(); ++u) row.push_back(mdp.reward(x, u));
        rewards.push_back(std::move(row));
    }
    j["rewards"] = std::move(rewards);

    if (mdp.n_states() <= dense_limit) {
        json tensor = json::array();
        for (Index x = 0; x < mdp.n_states(); ++x) {
            json per_action = json::array();
            for (Index u = 0; u < mdp.n_actions(); ++u) per_action.push_back(mdp.dense_row(x, u));
            tensor.push_back(std::move(per_action));
        }
        j["transitions"] = std::move(tensor);
    } else {
        json tensor = json::array();
        for (Index x = 0; x < mdp.n_states(); ++x) {
            std::vector<const SparseRow*> rows;
            for (Index u = 0; u < mdp.n_actions(); ++u) rows.push_back(&mdp.row(x, u));
            tensor.push_back(sparse_rows_to_json(rows));
        }
        j["transitions_sparse"] = std::move(tensor);
    }
    return j;
}

TabularMdp mdp_from_json(const json& j) {
    const Index n = j.at("n_states").get<Index>();
    const Index m = j.at("n_actions").get<Index>();
    const double discount = j.at("discount").get<double>();

    std::vector<double> rewards;
    for (const auto& row : j.at("rewards")) {
        for (const auto& v : row) rewards.push_back(v.get<double>());
    }

    std::vector<SparseRow> rows(static_cast<std::size_t>(n) * m);
    if (j.contains("transitions")) {
        const auto& tensor = j.at("transitions");
        for (Index x = 0; x < n; ++x) {
            for (Index u = 0; u < m; ++u) {
                const auto& dense = tensor.at(x).at(u);
                SparseRow& row = rows[static_cast<std::size_t>(x) * m + u];
                for (Index next = 0; next < n; ++next) {
                    const double p = dense.at(next).get<double>();
                    if (p > 0.0) {
                        row.idx.push_back(next);
                        row.prob.push_back(p);
                    }
                }
            }
        }
    } else {
        const auto& tensor = j.at("transitions_sparse");
        for (Index x = 0; x < n; ++x) {
            for (Index u = 0; u < m; ++u) {
                SparseRow& row = rows[static_cast<std::size_t>(x) * m + u];
                for (const auto& entry : tensor.at(x).at(u)) {
                    row.idx.push_back(entry.at(0).get<Index>());
                    row.prob.push_back(entry.at(1).get<double>());
                }
            }
        }
    }
    return TabularMdp(n, m, discount, std::move(rows), std::move(rewards),
                      terminal_from_json(j));
}

json model_set_to_json(const IntervalModelSet& model, Index dense_limit) {
    json j;
    j["n_states"] = model.n_states();
    j["n_actions"] = model.n_actions();
    j["discount"] = model.discount();
    j["terminal_states"] = model.terminal_states();

    json r_lo = json::array();
    json r_hi = json::array();
    for (Index x = 0; x < model.n_states(); ++x) {
        json lo_row = json::array();
        json hi_row = json::array();
        for (Index u = 0; u < model.n_actions(); ++u) {
            lo_row.push_back(model.reward_lo(x, u));
            hi_row.push_back(model.reward_hi(x, u));
        }
        r_lo.push_back(std::move(lo_row));
        r_hi.push_back(std::move(hi_row));
    }
    j["reward_lower"] = std::move(r_lo);
    j["reward_upper"] = std::move(r_hi);

    if (model.n_states() <= dense_limit) {
        json lower = json::array();
        json upper = json::array();
        for (Index x = 0; x < model.n_states(); ++x) {
            json lo_actions = json::array();
            json hi_actions = json::array();
            for (Index u = 0; u < model.n_actions(); ++u) {
                std::vector<double> lo_dense(static_cast<std::size_t>(model.n_states()), 0.0);
                std::vector<double> hi_dense(static_cast<std::size_t>(model.n_states()), 0.0);
                const IntervalRow& row = model.row(x, u);
                for (std::size_t i = 0; i < row.size(); ++i) {
                    lo_dense[row.idx[i]] = row.lo[i];
                    hi_dense[row.idx[i]] = row.hi[i];
                }
                lo_actions.push_back(lo_dense);
                hi_actions.push_back(hi_dense);
            }
            lower.push_back(std::move(lo_actions));
            upper.push_back(std::move(hi_actions));
        }
        j["lower_transitions"] = std::move(lower);
        j["upper_transitions"] = std::move(upper);
    } else {
        json tensor = json::array();
        for (Index x = 0; x < model.n_states(); ++x) {
            json per_action = json::array();
            for (Index u = 0; u < model.n_actions(); ++u) {
                const IntervalRow& row = model.row(x, u);
                json jrow;
                jrow["support"] = row.idx;
                jrow["lower"] = row.lo;
                jrow["upper"] = row.hi;
                per_action.push_back(std::move(jrow));
            }
            tensor.push_back(std::move(per_action));
        }
        j["transitions_sparse"] = std::move(tensor);
    }
    return j;
}

IntervalModelSet model_set_from_json(const json& j) {
    const Index n = j.at("n_states").get<Index>();
    const Index m = j.at("n_actions").get<Index>();
    const double discount = j.at("discount").get<double>();

    std::vector<double> r_lo;
    std::vector<double> r_hi;
    for (const auto& row : j.at("reward_lower")) {
        for (const auto& v : row) r_lo.push_back(v.get<double>());
    }
    for (const auto& row : j.at("reward_upper")) {
        for (const auto& v : row) r_hi.push_back(v.get<double>());
    }

    std::vector<IntervalRow> rows(static_cast<std::size_t>(n) * m);
    if (j.contains("lower_transitions")) {
        const auto& lower = j.at("lower_transitions");
        const auto& upper = j.at("upper_transitions");
        for (Index x = 0; x < n; ++x) {
            for (Index u = 0; u < m; ++u) {
                IntervalRow& row = rows[static_cast<std::size_t>(x) * m + u];
                const auto& lo_dense = lower.at(x).at(u);
                const auto& hi_dense = upper.at(x).at(u);
                for (Index next = 0; next < n; ++next) {
                    const double hi = hi_dense.at(next).get<double>();
                    if (hi > 0.0) {
                        row.idx.push_back(next);
                        row.lo.push_back(lo_dense.at(next).get<double>());
                        row.hi.push_back(hi);
                    }
                }
            }
        }
    } else {
        const auto& tensor = j.at("transitions_sparse");
        for (Index x = 0; x < n; ++x) {
            for (Index u = 0; u < m; ++u) {
                IntervalRow& row = rows[static_cast<std::size_t>(x) * m + u];
                const auto& jrow = tensor.at(x).at(u);
                row.idx = jrow.at("support").get<std::vector<Index>>();
                row.lo = jrow.at("lower").get<std::vector<double>>();
                row.hi = jrow.at("upper").get<std::vector<double>>();
            }
        }
    }
    return IntervalModelSet(n, m, discount, std::move(rows), std::move(r_lo), std::move(r_hi),
                            terminal_from_json(j));
}

json counts_to_json(const TransitionCounts& counts, const ObservedRewards& rewards) {
    json j;
    j["n_states"] = counts.n_states();
    j["n_actions"] = counts.n_actions();
    json jcounts = json::array();
    json jrewards = json::array();
    for (Index x = 0; x < counts.n_states(); ++x) {
        json count_row = json::array();
        json reward_row = json::array();
        for (Index u = 0; u < counts.n_actions(); ++u) {
            json entries = json::array();
            for (const auto& [next, c] : counts.row(x, u))
                entries.push_back(json::array({next, c}));
            count_row.push_back(std::move(entries));
            if (rewards.has(x, u)) {
                reward_row.push_back(rewards.value(x, u));
            } else {
                reward_row.push_back(nullptr);
            }
        }
        jcounts.push_back(std::move(count_row));
        jrewards.push_back(std::move(reward_row));
    }
    j["counts"] = std::move(jcounts);
    j["observed_rewards"] = std::move(jrewards);
    return j;
}

std::pair<TransitionCounts, ObservedRewards> counts_from_json(const json& j) {
    const Index n = j.at("n_states").get<Index>();
    const Index m = j.at("n_actions").get<Index>();
    TransitionCounts counts(n, m);
    ObservedRewards rewards(n, m);
    const auto& jcounts = j.at("counts");
    const auto& jrewards = j.at("observed_rewards");
    for (Index x = 0; x < n; ++x) {
        for (Index u = 0; u < m; ++u) {
            for (const auto& entry : jcounts.at(x).at(u))
                counts.add(x, u, entry.at(0).get<Index>(), entry.at(1).get<std::int64_t>());
            const auto& r = jrewards.at(x).at(u);
            if (!r.is_null()) rewards.observe(x, u, r.get<double>());
        }
    }
    return {std::move(counts), std::move(rewards)};
}

json learner_state_to_json(const LearnerState& state) {
    json j;
    j["n_states"] = state.q.n_states;
    j["n_actions"] = state.q.n_actions;
    j["episode"] = state.episode;
    j["q"] = state.q.values;
    j["has_bounds"] = state.has_bounds;
    if (state.has_bounds) {
        j["bounds_lower"] = state.bounds.lower.values;
        j["bounds_upper"] = state.bounds.upper.values;
    }
    j["data"] = counts_to_json(state.counts, state.observed_rewards);
    j["rng_state"] = state.rng.serialize();
    return j;
}

LearnerState learner_state_from_json(const json& j) {
    const Index n = j.at("n_states").get<Index>();
    const Index m = j.at("n_actions").get<Index>();
    LearnerState state(n, m, 0);
    state.episode = j.at("episode").get<std::int64_t>();
    state.q.values = j.at("q").get<std::vector<double>>();
    state.has_bounds = j.at("has_bounds").get<bool>();
    if (state.has_bounds) {
        state.bounds.lower.values = j.at("bounds_lower").get<std::vector<double>>();
        state.bounds.upper.values = j.at("bounds_upper").get<std::vector<double>>();
    }
    auto [counts, rewards] = counts_from_json(j.at("data"));
    state.counts = std::move(counts);
    state.observed_rewards = std::move(rewards);
    state.rng.restore(j.at("rng_state").get<std::array<std::uint64_t, 4>>());
    return state;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("cannot parse " + path + ": " + e.what());
    }
    return j;
}

void save_json_file(const json& j, const std::string& path, int indent) {
    write_file_atomic(path, j.dump(indent) + "\n");
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open file for writing: " + tmp);
        out << contents;
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

} // namespace qbex

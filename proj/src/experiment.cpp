#include "qbex/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "qbex/serialize.hpp"

namespace qbex {

using nlohmann::json;

namespace {

Variant variant_from_string(const std::string& name) {
    if (name == "epsilon_greedy_baseline") return Variant::EpsilonGreedyBaseline;
    if (name == "bounds_L_infinity") return Variant::BoundsExploreOnly;
    if (name == "bounds_regularized") return Variant::BoundsRegularized;
    throw std::invalid_argument("unknown algorithm variant '" + name + "'");
}

BetaKind beta_from_json(const json& j, double& constant) {
    if (j.is_object()) {
        constant = j.at("constant").get<double>();
        return BetaKind::Constant;
    }
    const std::string name = j.get<std::string>();
    if (name == "expected_improvement") return BetaKind::ExpectedImprovement;
    if (name == "probability_of_improvement") return BetaKind::ProbabilityOfImprovement;
    throw std::invalid_argument("unknown beta weighting '" + name + "'");
}

json beta_to_json(const ExplorationParams& p) {
    switch (p.beta) {
    case BetaKind::ExpectedImprovement: return "expected_improvement";
    case BetaKind::ProbabilityOfImprovement: return "probability_of_improvement";
    case BetaKind::Constant: return json{{"constant", p.beta_constant}};
    }
    return {};
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace

const char* variant_name(Variant v) {
    switch (v) {
    case Variant::EpsilonGreedyBaseline: return "epsilon_greedy_baseline";
    case Variant::BoundsExploreOnly: return "bounds_L_infinity";
    case Variant::BoundsRegularized: return "bounds_regularized";
    }
    return "unknown";
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig config;

    if (j.contains("environment")) {
        const auto& env = j.at("environment");
        const std::string type = env.at("type").get<std::string>();
        if (type == "frozen_lake") {
            config.env_kind = EnvKind::FrozenLake;
            if (env.contains("grid"))
                config.frozen_lake.grid = env.at("grid").get<std::vector<std::string>>();
            else if (env.contains("map"))
                config.frozen_lake.grid = frozen_lake_map(env.at("map").get<std::string>());
            config.frozen_lake.slippery = env.value("slippery", true);
        } else if (type == "cartpole") {
            config.env_kind = EnvKind::Cartpole;
            CartpoleSpec& cp = config.cartpole;
            cp.gravity = env.value("gravity", cp.gravity);
            cp.cart_mass = env.value("cart_mass", cp.cart_mass);
            cp.pole_half_length = env.value("pole_half_length", cp.pole_half_length);
            cp.force = env.value("force", cp.force);
            cp.dt = env.value("dt", cp.dt);
            cp.pole_mass = env.value("pole_mass", cp.pole_mass);
            if (env.contains("mass_sweep"))
                cp.mass_sweep = env.at("mass_sweep").get<std::vector<double>>();
            if (env.contains("bins")) {
                const auto bins = env.at("bins").get<std::vector<int>>();
                if (bins.size() != 4) throw std::invalid_argument("cartpole: bins needs 4 values");
                std::copy(bins.begin(), bins.end(), cp.bins.begin());
            }
            if (env.contains("ranges")) {
                const auto ranges = env.at("ranges").get<std::vector<double>>();
                if (ranges.size() != 4)
                    throw std::invalid_argument("cartpole: ranges needs 4 values");
                std::copy(ranges.begin(), ranges.end(), cp.ranges.begin());
            }
            cp.samples_per_cell = env.value("samples_per_cell", cp.samples_per_cell);
            cp.shaping_angle = env.value("shaping_angle", cp.shaping_angle);
            cp.shaping_position = env.value("shaping_position", cp.shaping_position);
            cp.start_range = env.value("start_range", cp.start_range);
            cp.tensor_seed = env.value("tensor_seed", cp.tensor_seed);
        } else {
            throw std::invalid_argument("unknown environment type '" + type + "'");
        }
    }

    if (j.contains("variants")) {
        config.variants.clear();
        for (const auto& v : j.at("variants"))
            config.variants.push_back(variant_from_string(v.get<std::string>()));
        if (config.variants.empty()) throw std::invalid_argument("variants must be nonempty");
    }

    if (j.contains("learner")) {
        const auto& l = j.at("learner");
        LearnerConfig& lc = config.learner;
        lc.alpha = l.value("alpha", lc.alpha);
        if (l.contains("alpha_schedule")) {
            const std::string s = l.at("alpha_schedule").get<std::string>();
            if (s == "constant")
                lc.alpha_schedule = AlphaSchedule::Constant;
            else if (s == "robbins_monro")
                lc.alpha_schedule = AlphaSchedule::RobbinsMonro;
            else
                throw std::invalid_argument("unknown alpha schedule '" + s + "'");
        }
        lc.alpha_a = l.value("alpha_a", lc.alpha_a);
        lc.alpha_b = l.value("alpha_b", lc.alpha_b);
        lc.gamma = l.value("gamma", lc.gamma);
        lc.epsilon_start = l.value("epsilon_start", lc.epsilon_start);
        lc.epsilon_end = l.value("epsilon_end", lc.epsilon_end);
        lc.epsilon_decay = l.value("epsilon_decay", lc.epsilon_decay);
        if (l.contains("L")) {
            const auto& L = l.at("L");
            lc.bound_period = L.is_null() ? 0 : L.get<std::int64_t>();
        }
        lc.max_steps_per_episode = l.value("max_steps_per_episode", lc.max_steps_per_episode);
        lc.exploring_starts = l.value("exploring_starts", lc.exploring_starts);
        lc.assume_deterministic = l.value("assume_deterministic", lc.assume_deterministic);
        lc.bound_tol = l.value("bound_tol", lc.bound_tol);
        lc.bound_max_iters = l.value("bound_max_iters", lc.bound_max_iters);
    }

    if (j.contains("exploration")) {
        const auto& e = j.at("exploration");
        config.exploration.xi = e.value("xi", config.exploration.xi);
        config.exploration.zeta = e.value("zeta", config.exploration.zeta);
        if (e.contains("beta"))
            config.exploration.beta = beta_from_json(e.at("beta"), config.exploration.beta_constant);
    }

    if (j.contains("lambda")) {
        config.lambda_c = j.at("lambda").value("c", config.lambda_c);
        config.lambda_delta = j.at("lambda").value("delta", config.lambda_delta);
    }

    config.n_runs = j.value("n_runs", config.n_runs);
    config.n_episodes = j.value("n_episodes", config.n_episodes);
    config.eval_every = j.value("eval_every", config.eval_every);
    config.eval_rollouts = j.value("eval_rollouts", config.eval_rollouts);
    config.seed = j.value("seed", config.seed);
    config.threads = j.value("threads", config.threads);

    if (config.n_runs < 1) throw std::invalid_argument("n_runs must be at least 1");
    if (config.eval_every < 1) throw std::invalid_argument("eval_every must be at least 1");
    if (config.eval_rollouts < 1) throw std::invalid_argument("eval_rollouts must be at least 1");
    if (config.n_episodes < 0) throw std::invalid_argument("n_episodes must be nonnegative");
    return config;
}

json config_to_json(const ExperimentConfig& config) {
    json env;
    if (config.env_kind == EnvKind::FrozenLake) {
        env["type"] = "frozen_lake";
        env["grid"] = config.frozen_lake.grid;
        env["slippery"] = config.frozen_lake.slippery;
    } else {
        const CartpoleSpec& cp = config.cartpole;
        env["type"] = "cartpole";
        env["gravity"] = cp.gravity;
        env["cart_mass"] = cp.cart_mass;
        env["pole_half_length"] = cp.pole_half_length;
        env["force"] = cp.force;
        env["dt"] = cp.dt;
        env["pole_mass"] = cp.pole_mass;
        env["mass_sweep"] = cp.mass_sweep.empty() ? default_mass_sweep(cp) : cp.mass_sweep;
        env["bins"] = cp.bins;
        env["ranges"] = cp.ranges;
        env["samples_per_cell"] = cp.samples_per_cell;
        env["shaping_angle"] = cp.shaping_angle;
        env["shaping_position"] = cp.shaping_position;
        env["start_range"] = cp.start_range;
        env["tensor_seed"] = cp.tensor_seed;
    }

    json variants = json::array();
    for (Variant v : config.variants) variants.push_back(variant_name(v));

    const LearnerConfig& lc = config.learner;
    json learner{{"alpha", lc.alpha},
                 {"alpha_schedule",
                  lc.alpha_schedule == AlphaSchedule::Constant ? "constant" : "robbins_monro"},
                 {"alpha_a", lc.alpha_a},
                 {"alpha_b", lc.alpha_b},
                 {"gamma", lc.gamma},
                 {"epsilon_start", lc.epsilon_start},
                 {"epsilon_end", lc.epsilon_end},
                 {"epsilon_decay", lc.epsilon_decay},
                 {"L", lc.bound_period > 0 ? json(lc.bound_period) : json(nullptr)},
                 {"max_steps_per_episode", lc.max_steps_per_episode},
                 {"exploring_starts", lc.exploring_starts},
                 {"assume_deterministic", lc.assume_deterministic},
                 {"bound_tol", lc.bound_tol},
                 {"bound_max_iters", lc.bound_max_iters}};

    return json{{"environment", env},
                {"variants", variants},
                {"learner", learner},
                {"exploration",
                 {{"xi", config.exploration.xi},
                  {"zeta", config.exploration.zeta},
                  {"beta", beta_to_json(config.exploration)}}},
                {"lambda", {{"c", config.lambda_c}, {"delta", config.lambda_delta}}},
                {"n_runs", config.n_runs},
                {"n_episodes", config.n_episodes},
                {"eval_every", config.eval_every},
                {"eval_rollouts", config.eval_rollouts},
                {"seed", config.seed},
                {"threads", config.threads}};
}

EvalPoint evaluate_greedy(const Environment& env, const QTable& q, int rollouts, int max_steps,
                          Rng rng) {
    const TabularMdp& mdp = env.mdp;
    std::vector<Index> policy(static_cast<std::size_t>(mdp.n_states()));
    for (Index x = 0; x < mdp.n_states(); ++x) policy[x] = q.greedy_action(x);

    double return_sum = 0.0;
    int successes = 0;
    for (int r = 0; r < rollouts; ++r) {
        Index x = env.sample_start(rng);
        double ret = 0.0;
        int steps = 0;
        bool terminated = mdp.is_terminal(x);
        bool success = terminated && env.success_state[x] != 0;
        while (!terminated && steps < max_steps) {
            const Index u = policy[x];
            const SparseRow& row = mdp.row(x, u);
            const Index next = row.idx[static_cast<std::size_t>(rng.sample_weighted(row.prob, 1.0))];
            ret += env.eval_reward(x, u);
            ++steps;
            if (mdp.is_terminal(next)) {
                terminated = true;
                success = env.success_state[next] != 0;
            }
            x = next;
        }
        if (!terminated && env.success_is_survival && steps == max_steps) success = true;
        return_sum += ret;
        if (success) ++successes;
    }
    EvalPoint point;
    point.mean_return = return_sum / rollouts;
    point.success_rate = static_cast<double>(successes) / rollouts;
    return point;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& config) {
    const bool needs_bounds =
        std::any_of(config.variants.begin(), config.variants.end(),
                    [](Variant v) { return v != Variant::EpsilonGreedyBaseline; });

    Environment env = [&] {
        if (config.env_kind == EnvKind::FrozenLake) {
            FrozenLakeSpec spec = config.frozen_lake;
            spec.discount = config.learner.gamma;
            return make_frozen_lake_environment(spec);
        }
        CartpoleSpec spec = config.cartpole;
        spec.discount = config.learner.gamma;
        return make_cartpole_environment(spec);
    }();

    std::optional<IntervalModelSet> model;
    std::optional<QBounds> init_bounds;
    if (needs_bounds) {
        if (config.env_kind == EnvKind::FrozenLake) {
            FrozenLakeSpec spec = config.frozen_lake;
            spec.discount = config.learner.gamma;
            model.emplace(frozen_lake_model_set(spec));
        } else {
            CartpoleSpec spec = config.cartpole;
            spec.discount = config.learner.gamma;
            model.emplace(cartpole_model_set(spec));
        }
        // The unregularized fixed point is data-independent; compute it once
        // and share it across runs.
        init_bounds = bound_iteration(*model, BoundOptions{config.learner.bound_tol,
                                                           config.learner.bound_max_iters})
                          .bounds;
    }

    const LambdaSchedule schedule(config.lambda_c, config.lambda_delta,
                                  env.mdp.n_states() * env.mdp.n_actions());

    struct Task {
        std::size_t variant_idx;
        int run_id;
    };
    std::vector<Task> tasks;
    for (std::size_t vi = 0; vi < config.variants.size(); ++vi) {
        for (int run = 0; run < config.n_runs; ++run) tasks.push_back({vi, run});
    }
    std::vector<RunRecord> records(tasks.size());

    const auto run_task = [&](std::size_t ti) {
        const Task& task = tasks[ti];
        const Variant variant = config.variants[task.variant_idx];
        RunRecord& record = records[ti];
        record.variant = variant_name(variant);
        record.run_id = task.run_id;
        try {
            const std::uint64_t run_seed = derive_seed(config.seed, task.variant_idx,
                                                       static_cast<std::uint64_t>(task.run_id));
            const EpisodeCallback callback = [&](std::int64_t episode, const LearnerState& st) {
                if (episode % config.eval_every != 0 && episode != config.n_episodes) return;
                const std::uint64_t eval_seed =
                    derive_seed(config.seed ^ 0x45564c5345454453ULL, task.variant_idx,
                                static_cast<std::uint64_t>(task.run_id),
                                static_cast<std::uint64_t>(episode));
                EvalPoint point =
                    evaluate_greedy(env, st.q, config.eval_rollouts,
                                    config.learner.max_steps_per_episode, Rng(eval_seed));
                point.episode = episode;
                record.points.push_back(point);
            };
            train(env, model ? &*model : nullptr, config.learner, config.exploration, schedule,
                  config.n_episodes, run_seed, variant, init_bounds ? &*init_bounds : nullptr,
                  callback);
        } catch (const std::exception& e) {
            record.failed = true;
            record.error = e.what();
            record.points.clear();
        }
    };

    unsigned n_threads = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                            : std::thread::hardware_concurrency();
    if (n_threads == 0) n_threads = 1;
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(tasks.size()));

    if (n_threads <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (unsigned t = 0; t < n_threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) run_task(i);
            });
        }
        for (auto& th : pool) th.join();
    }
    return records;
}

double nearest_rank_percentile(std::vector<double> values, double p) {
    if (values.empty())
        throw std::invalid_argument("nearest_rank_percentile: empty sample");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

std::vector<PercentileRow> aggregate(const std::vector<RunRecord>& records) {
    if (records.empty()) throw std::invalid_argument("aggregate: no run records");

    std::vector<std::string> variant_order;
    for (const RunRecord& r : records) {
        if (std::find(variant_order.begin(), variant_order.end(), r.variant) ==
            variant_order.end())
            variant_order.push_back(r.variant);
    }

    std::vector<PercentileRow> table;
    for (const std::string& variant : variant_order) {
        std::vector<const RunRecord*> runs;
        for (const RunRecord& r : records) {
            if (r.variant == variant && !r.failed) runs.push_back(&r);
        }
        if (runs.empty())
            throw std::runtime_error("aggregate: every run failed for variant " + variant);
        const std::size_t n_points = runs.front()->points.size();
        for (const RunRecord* r : runs) {
            if (r->points.size() != n_points)
                throw std::runtime_error("aggregate: evaluation grids differ across runs");
        }
        for (std::size_t pi = 0; pi < n_points; ++pi) {
            PercentileRow row;
            row.variant = variant;
            row.episode = runs.front()->points[pi].episode;
            std::vector<double> returns;
            std::vector<double> successes;
            for (const RunRecord* r : runs) {
                if (r->points[pi].episode != row.episode)
                    throw std::runtime_error("aggregate: evaluation grids differ across runs");
                returns.push_back(r->points[pi].mean_return);
                successes.push_back(r->points[pi].success_rate);
            }
            row.p05 = nearest_rank_percentile(returns, 5);
            row.p50 = nearest_rank_percentile(returns, 50);
            row.p95 = nearest_rank_percentile(returns, 95);
            row.s05 = nearest_rank_percentile(successes, 5);
            row.s50 = nearest_rank_percentile(successes, 50);
            row.s95 = nearest_rank_percentile(successes, 95);
            table.push_back(std::move(row));
        }
    }
    return table;
}

void emit_outputs(const std::vector<PercentileRow>& table, const ExperimentConfig& config,
                  const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::string results = "episode,variant,p05,p50,p95\n";
    std::string success = "episode,variant,p05,p50,p95\n";
    for (const PercentileRow& row : table) {
        const std::string prefix = std::to_string(row.episode) + "," + row.variant + ",";
        results += prefix + format_value(row.p05) + "," + format_value(row.p50) + "," +
                   format_value(row.p95) + "\n";
        success += prefix + format_value(row.s05) + "," + format_value(row.s50) + "," +
                   format_value(row.s95) + "\n";
    }
    write_file_atomic((fs::path(out_dir) / "results.csv").string(), results);
    write_file_atomic((fs::path(out_dir) / "success.csv").string(), success);
    save_json_file(config_to_json(config), (fs::path(out_dir) / "config.resolved.json").string(),
                   2);

    std::string variants;
    for (const Variant v : config.variants) {
        if (!variants.empty()) variants += " ";
        variants += variant_name(v);
    }
    std::string plot;
    plot += "# Percentile learning curves. Render with: gnuplot plot.gp\n";
    plot += "set datafile separator ','\n";
    plot += "set terminal pngcairo size 960,640\n";
    plot += "set output 'results.png'\n";
    plot += "set xlabel 'episode'\n";
    plot += "set ylabel 'evaluation return'\n";
    plot += "set key bottom right\n";
    plot += "variants = '" + variants + "'\n";
    plot += "plot for [v in variants] 'results.csv' using 1:(strcol(2) eq v ? column(3) : NaN):"
            "(strcol(2) eq v ? column(5) : NaN) with filledcurves fs transparent solid 0.15 "
            "notitle, \\\n";
    plot += "     for [v in variants] 'results.csv' using 1:(strcol(2) eq v ? column(4) : NaN) "
            "with lines lw 2 title v\n";
    write_file_atomic((fs::path(out_dir) / "plot.gp").string(), plot);
}

double optimal_success_rate(const Environment& env, int max_steps) {
    const TabularMdp& mdp = env.mdp;
    const ExactSolution sol = solve_exact(mdp);

    const Index n = mdp.n_states();
    std::vector<double> value(static_cast<std::size_t>(n));
    std::vector<double> next(static_cast<std::size_t>(n));
    for (Index x = 0; x < n; ++x) {
        if (env.success_is_survival) {
            value[x] = mdp.is_terminal(x) ? 0.0 : 1.0;
        } else {
            value[x] = 0.0;
        }
    }
    for (int t = 0; t < max_steps; ++t) {
        for (Index x = 0; x < n; ++x) {
            if (mdp.is_terminal(x)) {
                next[x] = 0.0;
                continue;
            }
            const SparseRow& row = mdp.row(x, sol.policy.action_of[x]);
            double acc = 0.0;
            for (std::size_t i = 0; i < row.size(); ++i) {
                const Index succ = row.idx[i];
                double v;
                if (mdp.is_terminal(succ)) {
                    v = env.success_state[succ] != 0 ? 1.0 : 0.0;
                } else {
                    v = value[succ];
                }
                acc += row.prob[i] * v;
            }
            next[x] = acc;
        }
        std::swap(value, next);
    }

    double out = 0.0;
    for (std::size_t i = 0; i < env.start.idx.size(); ++i)
        out += env.start.prob[i] * value[env.start.idx[i]];
    return out;
}

} // namespace qbex

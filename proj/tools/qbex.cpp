#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "qbex/experiment.hpp"
#include "qbex/serialize.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_run_failure = 1;
constexpr int exit_config_error = 2;

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<int> runs, std::optional<std::uint64_t> seed,
            std::optional<int> threads) {
    qbex::ExperimentConfig config;
    try {
        config = qbex::config_from_json(qbex::load_json_file(config_path));
        if (runs) config.n_runs = *runs;
        if (seed) config.seed = *seed;
        if (threads) config.threads = *threads;
        if (config.n_runs < 1) throw std::invalid_argument("n_runs must be at least 1");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config_error;
    }

    try {
        const std::vector<qbex::RunRecord> records = qbex::run_experiment(config);
        qbex::emit_outputs(qbex::aggregate(records), config, out_dir);

        int failures = 0;
        for (const qbex::RunRecord& r : records) {
            if (r.failed) {
                ++failures;
                std::cerr << "run failed: variant=" << r.variant << " run=" << r.run_id << ": "
                          << r.error << "\n";
            }
        }
        std::cout << "completed " << records.size() - failures << "/" << records.size()
                  << " runs; outputs in " << out_dir << "\n";
        return failures == 0 ? exit_ok : exit_run_failure;
    } catch (const std::exception& e) {
        std::cerr << "experiment failed: " << e.what() << "\n";
        return exit_run_failure;
    }
}

int cmd_solve(const std::string& mdp_path, double tol, int max_iters) {
    qbex::TabularMdp mdp = [&] {
        try {
            return qbex::mdp_from_json(qbex::load_json_file(mdp_path));
        } catch (const std::exception& e) {
            std::cerr << "config error: " << e.what() << "\n";
            std::exit(exit_config_error);
        }
    }();

    try {
        const qbex::ExactSolution sol = qbex::solve_exact(mdp, {tol, max_iters});
        std::printf("states=%d actions=%d discount=%.6g\n", mdp.n_states(), mdp.n_actions(),
                    mdp.discount());
        std::printf("iterations=%d residual=%.3e\n", sol.iterations, sol.residual);
        for (qbex::Index x = 0; x < mdp.n_states(); ++x) {
            std::printf("state %d: V*=%.10g greedy_action=%d\n", x, sol.q.state_value(x),
                        sol.policy.action_of[x]);
        }
        return exit_ok;
    } catch (const qbex::ConvergenceError& e) {
        std::cerr << "solver failed: " << e.what() << "\n";
        return exit_run_failure;
    }
}

int cmd_bounds(const std::string& model_path, const std::string& counts_path, double c,
               double delta, double tol, int max_iters) {
    std::optional<qbex::IntervalModelSet> model;
    std::optional<std::pair<qbex::TransitionCounts, qbex::ObservedRewards>> data;
    try {
        model.emplace(qbex::model_set_from_json(qbex::load_json_file(model_path)));
        if (!counts_path.empty())
            data = qbex::counts_from_json(qbex::load_json_file(counts_path));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config_error;
    }

    try {
        qbex::QBounds qb;
        if (data) {
            const qbex::LambdaSchedule schedule(c, delta,
                                                model->n_states() * model->n_actions());
            auto result = qbex::regularized_bound_iteration(*model, data->first, data->second,
                                                            schedule, {tol, max_iters});
            std::printf("iterations=%d residual=%.3e fallback_rows=%lld\n", result.iterations,
                        result.residual, static_cast<long long>(result.fallback_rows));
            qb = std::move(result.bounds);
        } else {
            auto result = qbex::bound_iteration(*model, {tol, max_iters});
            std::printf("iterations=%d residual=%.3e\n", result.iterations, result.residual);
            qb = std::move(result.bounds);
        }

        double max_gap = 0.0;
        for (std::size_t i = 0; i < qb.lower.values.size(); ++i)
            max_gap = std::max(max_gap, qb.upper.values[i] - qb.lower.values[i]);
        std::printf("max_gap=%.10g\n", max_gap);

        const qbex::ActionCertificates certs = qbex::certify_actions(qb);
        std::int64_t optimal = 0;
        std::int64_t suboptimal = 0;
        std::int64_t uncertain = 0;
        for (const qbex::Certificate cert : certs.cert) {
            if (cert == qbex::Certificate::GuaranteedOptimal) ++optimal;
            else if (cert == qbex::Certificate::GuaranteedSuboptimal) ++suboptimal;
            else ++uncertain;
        }
        std::printf("certificates: optimal=%lld suboptimal=%lld uncertain=%lld\n",
                    static_cast<long long>(optimal), static_cast<long long>(suboptimal),
                    static_cast<long long>(uncertain));
        if (model->n_states() <= 64) {
            for (qbex::Index x = 0; x < model->n_states(); ++x) {
                std::printf("state %d:", x);
                for (qbex::Index u = 0; u < model->n_actions(); ++u) {
                    const char* mark = "?";
                    if (certs(x, u) == qbex::Certificate::GuaranteedOptimal) mark = "+";
                    if (certs(x, u) == qbex::Certificate::GuaranteedSuboptimal) mark = "-";
                    std::printf(" %s[%.4g, %.4g]", mark, qb.lower(x, u), qb.upper(x, u));
                }
                std::printf("\n");
            }
        }
        return exit_ok;
    } catch (const qbex::ConvergenceError& e) {
        std::cerr << "bound iteration failed: " << e.what() << "\n";
        return exit_run_failure;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Q-bound guided exploration toolkit"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a declarative experiment config");
    std::string config_path;
    std::string out_dir = "out";
    std::optional<int> runs;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    run->add_option("--config", config_path, "Experiment config JSON")->required();
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--runs", runs, "Override the number of Monte Carlo runs");
    run->add_option("--seed", seed, "Override the master seed");
    run->add_option("--threads", threads, "Worker pool width (0 = hardware)");

    auto* solve = app.add_subcommand("solve", "Exact value iteration for an MDP file");
    std::string mdp_path;
    double tol = 1e-8;
    int max_iters = 100000;
    solve->add_option("--mdp", mdp_path, "MDP JSON file")->required();
    solve->add_option("--tol", tol, "Bellman residual tolerance");
    solve->add_option("--max-iters", max_iters, "Iteration cap");

    auto* bounds = app.add_subcommand("bounds", "One-shot Q-bound computation for a model set");
    std::string model_path;
    std::string counts_path;
    double c = 5.0;
    double delta = 0.05;
    double btol = 1e-8;
    int bmax_iters = 100000;
    bounds->add_option("--model", model_path, "Interval model JSON file")->required();
    bounds->add_option("--counts", counts_path, "Counts/rewards JSON for regularization");
    bounds->add_option("--c", c, "Regularization scale");
    bounds->add_option("--delta", delta, "Confidence parameter");
    bounds->add_option("--tol", btol, "Fixed-point tolerance");
    bounds->add_option("--max-iters", bmax_iters, "Iteration cap");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config_error;
    }

    if (run->parsed()) return cmd_run(config_path, out_dir, runs, seed, threads);
    if (solve->parsed()) return cmd_solve(mdp_path, tol, max_iters);
    return cmd_bounds(model_path, counts_path, c, delta, btol, bmax_iters);
}

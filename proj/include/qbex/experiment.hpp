#pragma once

#include <json.hpp>

#include "qbex/cartpole.hpp"
#include "qbex/frozen_lake.hpp"
#include "qbex/learner.hpp"

namespace qbex {

enum class EnvKind : std::uint8_t { FrozenLake, Cartpole };

/// Declarative experiment description; defaults follow the frozen-lake
/// benchmark. See config_from_json for the file schema.
struct ExperimentConfig {
    EnvKind env_kind = EnvKind::FrozenLake;
    FrozenLakeSpec frozen_lake;
    CartpoleSpec cartpole;

    std::vector<Variant> variants = {Variant::EpsilonGreedyBaseline, Variant::BoundsExploreOnly,
                                     Variant::BoundsRegularized};
    LearnerConfig learner;
    ExplorationParams exploration;
    double lambda_c = 5.0;
    double lambda_delta = 0.05;

    int n_runs = 20;
    std::int64_t n_episodes = 2000;
    int eval_every = 25;
    int eval_rollouts = 100;
    std::uint64_t seed = 1;
    int threads = 0; // 0 -> hardware concurrency
};

ExperimentConfig config_from_json(const nlohmann::json& j);
/// Full round-trip with every default materialized.
nlohmann::json config_to_json(const ExperimentConfig& config);

const char* variant_name(Variant v);

struct EvalPoint {
    std::int64_t episode = 0;
    double mean_return = 0.0;
    double success_rate = 0.0;
};

struct RunRecord {
    std::string variant;
    int run_id = 0;
    bool failed = false;
    std::string error;
    std::vector<EvalPoint> points;
};

struct PercentileRow {
    std::string variant;
    std::int64_t episode = 0;
    double p05 = 0, p50 = 0, p95 = 0;       // evaluation return
    double s05 = 0, s50 = 0, s95 = 0;       // success rate
};

/// Rolls out the greedy policy of `q` against the environment with unshaped
/// rewards and no exploration. Never touches learner state.
EvalPoint evaluate_greedy(const Environment& env, const QTable& q, int rollouts, int max_steps,
                          Rng rng);

/// Runs n_runs independent seeded trainings per variant, evaluating the
/// greedy policy every eval_every episodes (and at episode 0). Failed runs
/// are recorded and the rest continue. Results are deterministic in
/// (config, seed) regardless of the thread count.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config);

/// Nearest-rank percentile of an unsorted sample (p in [0, 100]).
double nearest_rank_percentile(std::vector<double> values, double p);

/// Per (variant, episode) 5th/50th/95th percentiles across completed runs.
std::vector<PercentileRow> aggregate(const std::vector<RunRecord>& records);

/// Writes results.csv, success.csv, config.resolved.json, and plot.gp into
/// out_dir (created if missing). All writes are atomic replacements.
void emit_outputs(const std::vector<PercentileRow>& table, const ExperimentConfig& config,
                  const std::string& out_dir);

/// Success probability of the exact optimal policy from the environment's
/// start distribution within max_steps (finite-horizon absorption sweep);
/// the reference target for learning-curve comparisons.
double optimal_success_rate(const Environment& env, int max_steps);

} // namespace qbex

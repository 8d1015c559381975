#pragma once

#include <functional>

#include "qbex/environment.hpp"
#include "qbex/exploration.hpp"
#include "qbex/regularized.hpp"

namespace qbex {

enum class AlphaSchedule : std::uint8_t { Constant, RobbinsMonro };

struct LearnerConfig {
    double alpha = 0.05;
    AlphaSchedule alpha_schedule = AlphaSchedule::Constant;
    double alpha_a = 1.0; // RobbinsMonro: alpha = a / (b + visits(x,u))
    double alpha_b = 1.0;
    double gamma = 0.95;
    double epsilon_start = 1.0;
    double epsilon_end = 0.01;
    /// Per-episode multiplicative factor; <= 0 derives one so epsilon_end is
    /// reached at 90% of training.
    double epsilon_decay = 0.0;
    /// Bound-recompute period L in episodes; <= 0 means never (L = infinity).
    std::int64_t bound_period = 50;
    int max_steps_per_episode = 100;
    bool exploring_starts = false;
    /// Treat observed rows as exact (the lambda = infinity override for
    /// deterministic dynamics).
    bool assume_deterministic = false;
    double bound_tol = 1e-8;
    int bound_max_iters = 100000;
};

enum class Variant : std::uint8_t {
    EpsilonGreedyBaseline, // uniform random exploration, zero-initialized Q
    BoundsExploreOnly,     // exploring policy from bounds computed once
    BoundsRegularized,     // + regularized bound recomputation every L episodes
};

struct LearnerState {
    LearnerState(Index n_states, Index n_actions, std::uint64_t seed)
        : q(n_states, n_actions), bounds{QTable(n_states, n_actions), QTable(n_states, n_actions)},
          counts(n_states, n_actions), observed_rewards(n_states, n_actions), rng(seed) {}

    QTable q;
    QBounds bounds;
    TransitionCounts counts;
    ObservedRewards observed_rewards;
    std::int64_t episode = 0;
    Rng rng;
    bool has_bounds = false;
};

struct EpisodeStats {
    int steps = 0;
    double discounted_return = 0.0;
    bool reached_terminal = false; // false when the step cap truncated the episode
};

/// One tabular Q-learning backup; terminal successors bootstrap zero.
void q_update(QTable& q, Index x, Index u, double reward, Index next, bool next_terminal,
              double alpha, double gamma);

/// Epsilon-exploring action choice: with probability epsilon follow the
/// exploring policy (or uniform for the baseline variant), otherwise act
/// greedily on the learned Q with lowest-index tie-breaking.
Index select_action(LearnerState& state, Index x, double epsilon,
                    const ExplorationParams& params, Variant variant);

/// Runs one episode against the environment, recording every transition into
/// the counts, the observed-reward table, and the Q update.
EpisodeStats run_episode(LearnerState& state, const Environment& env, const LearnerConfig& config,
                         const ExplorationParams& params, Variant variant, double epsilon);

struct TrainResult {
    LearnerState state;
    std::vector<EpisodeStats> history;
};

/// Called after initialization (episode 0) and after every episode; used by
/// the harness for periodic policy evaluation.
using EpisodeCallback = std::function<void(std::int64_t episode, const LearnerState&)>;

/// Full training loop. For the bound-guided variants, `model` must be
/// non-null; bounds initialize from `init_bounds` when given (they must equal
/// the unregularized fixed point) and Q starts at the bound midpoint. The
/// regularized variant recomputes bounds every `bound_period` episodes from
/// the accumulated data, then clamps Q into the new envelope.
TrainResult train(const Environment& env, const IntervalModelSet* model,
                  const LearnerConfig& config, const ExplorationParams& params,
                  const LambdaSchedule& schedule, std::int64_t n_episodes, std::uint64_t seed,
                  Variant variant, const QBounds* init_bounds = nullptr,
                  const EpisodeCallback& on_episode = {});

/// Epsilon for 1-based episode e under the exponential schedule.
double epsilon_at(const LearnerConfig& config, std::int64_t episode, std::int64_t n_episodes);

} // namespace qbex

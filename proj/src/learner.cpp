#include "qbex/learner.hpp"

#include <algorithm>
#include <cmath>

#include "qbex/kernels.hpp"

namespace qbex {

void q_update(QTable& q, Index x, Index u, double reward, Index next, bool next_terminal,
              double alpha, double gamma) {
    const double bootstrap = next_terminal ? 0.0 : q.state_value(next);
    q(x, u) = (1.0 - alpha) * q(x, u) + alpha * (reward + gamma * bootstrap);
}

Index select_action(LearnerState& state, Index x, double epsilon,
                    const ExplorationParams& params, Variant variant) {
    if (state.rng.uniform() < epsilon) {
        if (variant == Variant::EpsilonGreedyBaseline || !state.has_bounds)
            return state.rng.uniform_int(state.q.n_actions);
        const StateWeights weights = compute_weights(state.bounds, x, params);
        return sample_action(weights, state.rng);
    }
    return state.q.greedy_action(x);
}

EpisodeStats run_episode(LearnerState& state, const Environment& env, const LearnerConfig& config,
                         const ExplorationParams& params, Variant variant, double epsilon) {
    const TabularMdp& mdp = env.mdp;

    Index x;
    if (config.exploring_starts) {
        // Uniform over non-terminal states.
        Index pick = state.rng.uniform_int(mdp.n_states());
        while (mdp.is_terminal(pick)) pick = state.rng.uniform_int(mdp.n_states());
        x = pick;
    } else {
        x = env.sample_start(state.rng);
    }

    EpisodeStats stats;
    double discount_pow = 1.0;
    while (stats.steps < config.max_steps_per_episode) {
        const Index u = select_action(state, x, epsilon, params, variant);
        const StepResult sr = step(mdp, x, u, state.rng);

        state.counts.observe(x, u, sr.next_state);
        state.observed_rewards.observe(x, u, sr.reward);

        double alpha = config.alpha;
        if (config.alpha_schedule == AlphaSchedule::RobbinsMonro)
            alpha = config.alpha_a /
                    (config.alpha_b + static_cast<double>(state.counts.total(x, u)));
        q_update(state.q, x, u, sr.reward, sr.next_state, sr.is_terminal, alpha, config.gamma);

        stats.discounted_return += discount_pow * sr.reward;
        discount_pow *= config.gamma;
        ++stats.steps;
        if (sr.is_terminal) {
            stats.reached_terminal = true;
            break;
        }
        x = sr.next_state;
    }
    return stats;
}

double epsilon_at(const LearnerConfig& config, std::int64_t episode, std::int64_t n_episodes) {
    if (config.epsilon_start <= config.epsilon_end) return config.epsilon_end;
    double rho = config.epsilon_decay;
    if (rho <= 0.0) {
        // Reach epsilon_end at 90% of training.
        const double horizon = 0.9 * static_cast<double>(std::max<std::int64_t>(n_episodes, 1));
        rho = std::pow(config.epsilon_end / config.epsilon_start, 1.0 / horizon);
    }
    const double eps =
        config.epsilon_start * std::pow(rho, static_cast<double>(std::max<std::int64_t>(episode - 1, 0)));
    return std::max(config.epsilon_end, eps);
}

TrainResult train(const Environment& env, const IntervalModelSet* model,
                  const LearnerConfig& config, const ExplorationParams& params,
                  const LambdaSchedule& schedule, std::int64_t n_episodes, std::uint64_t seed,
                  Variant variant, const QBounds* init_bounds, const EpisodeCallback& on_episode) {
    const Index n = env.mdp.n_states();
    const Index m = env.mdp.n_actions();
    const bool uses_bounds = variant != Variant::EpsilonGreedyBaseline;
    if (uses_bounds && model == nullptr)
        throw std::invalid_argument("train: bound-guided variants need a model set");
    if (uses_bounds && (model->n_states() != n || model->n_actions() != m))
        throw std::invalid_argument("train: model set does not match the environment");

    TrainResult result{LearnerState(n, m, seed), {}};
    LearnerState& st = result.state;

    std::vector<std::uint8_t> det_rows;
    if (config.assume_deterministic) det_rows.assign(static_cast<std::size_t>(n) * m, 1);

    if (uses_bounds) {
        if (init_bounds != nullptr) {
            st.bounds = *init_bounds;
        } else {
            st.bounds =
                bound_iteration(*model, BoundOptions{config.bound_tol, config.bound_max_iters})
                    .bounds;
        }
        st.has_bounds = true;
        // Q starts at the bound midpoint, which trivially satisfies the
        // envelope membership requirement.
        for (std::size_t i = 0; i < st.q.values.size(); ++i)
            st.q.values[i] = 0.5 * (st.bounds.lower.values[i] + st.bounds.upper.values[i]);
    }

    if (on_episode) on_episode(0, st);

    result.history.reserve(static_cast<std::size_t>(n_episodes));
    for (std::int64_t e = 1; e <= n_episodes; ++e) {
        const double eps = epsilon_at(config, e, n_episodes);
        result.history.push_back(run_episode(st, env, config, params, variant, eps));
        st.episode = e;

        if (variant == Variant::BoundsRegularized && config.bound_period > 0 &&
            e % config.bound_period == 0) {
            RegularizedResult reg = regularized_bound_iteration(
                *model, st.counts, st.observed_rewards, schedule,
                BoundOptions{config.bound_tol, config.bound_max_iters}, &st.bounds,
                config.assume_deterministic ? &det_rows : nullptr);
            st.bounds = std::move(reg.bounds);
            kernels::clamp(st.q.values.data(), st.bounds.lower.values.data(),
                           st.bounds.upper.values.data(), st.q.values.size());
        }

        if (on_episode) on_episode(e, st);
    }
    return result;
}

} // namespace qbex

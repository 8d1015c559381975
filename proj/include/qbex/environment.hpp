#pragma once

#include <string>

#include "qbex/tabular_mdp.hpp"

namespace qbex {

/// A ground-truth world the learner interacts with: the training MDP (whose
/// rewards may be shaped), a separate unshaped reward table for evaluation
/// rollouts, a start distribution, and the success convention for reporting.
struct Environment {
    TabularMdp mdp;
    std::vector<double> eval_rewards;        // per (state, action)
    SparseRow start;                         // start-state distribution
    std::vector<std::uint8_t> success_state; // terminal states that count as success
    bool success_is_survival = false;        // success = reaching the step cap instead
    std::string name;

    Index sample_start(Rng& rng) const {
        const int pick = rng.sample_weighted(start.prob, 1.0);
        return start.idx[static_cast<std::size_t>(pick)];
    }

    double eval_reward(Index x, Index u) const {
        return eval_rewards[static_cast<std::size_t>(x) * mdp.n_actions() + u];
    }
};

} // namespace qbex

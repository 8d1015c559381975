#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qbex/rng.hpp"

namespace qbex {

using Index = std::int32_t;

/// Thrown when an iterative solver fails to reach its tolerance.
class ConvergenceError : public std::runtime_error {
  public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : std::runtime_error(what), residual(residual), iterations(iterations) {}

    double residual;
    int iterations;
};

/// One transition row stored sparsely: successor indices and probabilities.
struct SparseRow {
    std::vector<Index> idx;
    std::vector<double> prob;

    std::size_t size() const { return idx.size(); }
};

/// Dense (state, action) table of reals.
struct QTable {
    QTable() = default;
    QTable(Index n_states, Index n_actions, double fill = 0.0)
        : n_states(n_states), n_actions(n_actions),
          values(static_cast<std::size_t>(n_states) * n_actions, fill) {}

    double& operator()(Index x, Index u) { return values[static_cast<std::size_t>(x) * n_actions + u]; }
    double operator()(Index x, Index u) const {
        return values[static_cast<std::size_t>(x) * n_actions + u];
    }

    /// max_u values(x, u)
    double state_value(Index x) const;
    /// Lowest-index maximizing action.
    Index greedy_action(Index x) const;

    const double* row(Index x) const { return values.data() + static_cast<std::size_t>(x) * n_actions; }

    Index n_states = 0;
    Index n_actions = 0;
    std::vector<double> values;
};

struct GreedyPolicy {
    std::vector<Index> action_of;
};

/// Finite MDP with deterministic (state, action) rewards. Terminal states are
/// stored as absorbing self-loops; the solvers treat their continuation value
/// as zero, so a terminal state is worth exactly its reward.
///
/// Immutable after construction; safe to share across threads.
class TabularMdp {
  public:
    TabularMdp(Index n_states, Index n_actions, double discount, std::vector<SparseRow> rows,
               std::vector<double> rewards, std::vector<Index> terminal_states);

    Index n_states() const { return n_states_; }
    Index n_actions() const { return n_actions_; }
    double discount() const { return discount_; }

    const SparseRow& row(Index x, Index u) const {
        return rows_[static_cast<std::size_t>(x) * n_actions_ + u];
    }
    double reward(Index x, Index u) const {
        return rewards_[static_cast<std::size_t>(x) * n_actions_ + u];
    }
    std::span<const double> rewards() const { return rewards_; }
    bool is_terminal(Index x) const { return terminal_[x] != 0; }
    const std::vector<Index>& terminal_states() const { return terminal_list_; }

    /// Dense probability row (successor probabilities for one state-action
    /// pair); used by serialization and tests.
    std::vector<double> dense_row(Index x, Index u) const;

  private:
    Index n_states_;
    Index n_actions_;
    double discount_;
    std::vector<SparseRow> rows_;
    std::vector<double> rewards_;
    std::vector<std::uint8_t> terminal_;
    std::vector<Index> terminal_list_;
};

struct SolveOptions {
    double tol = 1e-8;
    int max_iters = 100000;
};

struct ExactSolution {
    QTable q;
    GreedyPolicy policy;
    double residual = 0.0;
    int iterations = 0;
};

struct StepResult {
    Index next_state;
    double reward;
    bool is_terminal;
};

/// One application of the Bellman optimality operator:
/// (TQ)(x,u) = g(x,u) + discount * sum_x' max_u' q(x',u') M(x,u,x'),
/// with terminal successors contributing zero continuation value.
QTable bellman_apply(const TabularMdp& mdp, const QTable& q);

/// Value iteration to a sup-norm Bellman residual <= tol, starting from
/// `init` (zeros by default). Ties in the greedy policy break toward the
/// lowest action index. Throws ConvergenceError after max_iters.
ExactSolution solve_exact(const TabularMdp& mdp, const SolveOptions& opts = {},
                          const QTable* init = nullptr);

/// Samples one environment transition. Deterministic given the rng state.
StepResult step(const TabularMdp& mdp, Index state, Index action, Rng& rng);

} // namespace qbex

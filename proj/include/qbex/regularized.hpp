#pragma once

#include <cstdint>
#include <utility>

#include "qbex/interval_model.hpp"

namespace qbex {

/// Observed transition counts T(x, u, x') with cached row totals.
class TransitionCounts {
  public:
    using Entry = std::pair<Index, std::int64_t>;

    TransitionCounts(Index n_states, Index n_actions)
        : n_states_(n_states), n_actions_(n_actions),
          rows_(static_cast<std::size_t>(n_states) * n_actions),
          totals_(static_cast<std::size_t>(n_states) * n_actions, 0) {}

    void observe(Index x, Index u, Index next) { add(x, u, next, 1); }
    void add(Index x, Index u, Index next, std::int64_t count);

    std::int64_t total(Index x, Index u) const {
        return totals_[static_cast<std::size_t>(x) * n_actions_ + u];
    }
    std::int64_t grand_total() const { return grand_total_; }
    const std::vector<Entry>& row(Index x, Index u) const {
        return rows_[static_cast<std::size_t>(x) * n_actions_ + u];
    }

    Index n_states() const { return n_states_; }
    Index n_actions() const { return n_actions_; }

  private:
    Index n_states_;
    Index n_actions_;
    std::vector<std::vector<Entry>> rows_;
    std::vector<std::int64_t> totals_;
    std::int64_t grand_total_ = 0;
};

struct EmpiricalRow {
    std::vector<Index> idx;
    std::vector<double> prob;
};

/// Per-row empirical distributions M_E(x,u,x') = T(x,u,x') / T(x,u); rows
/// without data are flagged.
struct EmpiricalKernel {
    Index n_states = 0;
    Index n_actions = 0;
    std::vector<EmpiricalRow> rows;
    std::vector<std::uint8_t> has_data;

    const EmpiricalRow& row(Index x, Index u) const {
        return rows[static_cast<std::size_t>(x) * n_actions + u];
    }
    bool empty(Index x, Index u) const {
        return has_data[static_cast<std::size_t>(x) * n_actions + u] == 0;
    }
};

EmpiricalKernel empirical_kernel(const TransitionCounts& counts);

/// Regularization strength lambda(x,u) = c * sqrt(T(x,u) / (log(n_pairs)/delta)),
/// zero when the pair has no data.
struct LambdaSchedule {
    LambdaSchedule(double c, double delta, Index n_pairs);

    double value(std::int64_t total) const;

    double c;
    double delta;
    Index n_pairs;
};

/// Set-once record of observed (deterministic) rewards.
class ObservedRewards {
  public:
    ObservedRewards(Index n_states, Index n_actions)
        : n_states_(n_states), n_actions_(n_actions),
          values_(static_cast<std::size_t>(n_states) * n_actions, 0.0),
          seen_(static_cast<std::size_t>(n_states) * n_actions, 0) {}

    /// Records a reward. Re-observing a pair with a different value (beyond
    /// 1e-9) violates the deterministic-reward assumption and throws.
    void observe(Index x, Index u, double reward);

    bool has(Index x, Index u) const { return seen_[flat(x, u)] != 0; }
    double value(Index x, Index u) const { return values_[flat(x, u)]; }
    std::int64_t observed_pairs() const { return observed_; }

    Index n_states() const { return n_states_; }
    Index n_actions() const { return n_actions_; }

  private:
    std::size_t flat(Index x, Index u) const {
        return static_cast<std::size_t>(x) * n_actions_ + u;
    }

    Index n_states_;
    Index n_actions_;
    std::vector<double> values_;
    std::vector<std::uint8_t> seen_;
    std::int64_t observed_ = 0;
};

/// KL divergence sum_i p[i] log(p[i]/ref[i]) with the 0 log 0 = 0 convention;
/// +infinity when p puts mass outside ref's support. Both arguments must be
/// probability vectors of equal length.
double kl_divergence(std::span<const double> p, std::span<const double> ref);

/// Optimizer of (+/-) sum values[i] p[i] - lambda * KL(p || ref) over the
/// interval-constrained simplex (+ for Max, - for Min).
///
/// lambda = 0 delegates to inner_optimize_sorted. For lambda > 0 the solution
/// has the stationary form p[i] = clip(ref[i] exp(s values[i]/lambda - mu),
/// lo[i], hi[i]), with mu found by bisection until the row sums to one within
/// 1e-10. Support entries never observed (ref[i] = 0) are pinned at their
/// lower bounds and the bisection target shrinks by the pinned mass. If the
/// box cannot carry the required mass on the observed support, the sorted
/// lambda = 0 solution is returned and *used_fallback is set.
std::vector<double> inner_optimize_regularized(std::span<const double> values,
                                               std::span<const double> lower,
                                               std::span<const double> upper,
                                               std::span<const double> ref, double lambda,
                                               Sense sense, bool* used_fallback = nullptr);

struct RegularizedResult {
    QBounds bounds;
    double residual = 0.0;
    int iterations = 0;
    /// Rows that fell back to the unregularized solution in the last sweep.
    std::int64_t fallback_rows = 0;
};

/// Fixed point of the data-regularized coupled updates. Per pair, the reward
/// interval collapses to the observed reward when one is recorded, and the
/// transition term optimizes against the empirical row with strength
/// lambda(x,u). Pairs flagged in `deterministic_rows` with data bypass the
/// optimization and use the empirical row directly (the lambda = infinity
/// override).
RegularizedResult regularized_bound_iteration(
    const IntervalModelSet& model, const TransitionCounts& counts, const ObservedRewards& rewards,
    const LambdaSchedule& schedule, const BoundOptions& opts = {}, const QBounds* init = nullptr,
    const std::vector<std::uint8_t>* deterministic_rows = nullptr);

} // namespace qbex

#pragma once

#include <optional>
#include <vector>

#include "qbex/tabular_mdp.hpp"

namespace qbex {

/// Elementwise transition bounds for one (state, action) pair, stored on the
/// support where the upper bound is positive. Successors outside `idx` are
/// impossible (upper bound zero).
struct IntervalRow {
    std::vector<Index> idx;
    std::vector<double> lo;
    std::vector<double> hi;

    std::size_t size() const { return idx.size(); }
};

/// Bounded-parameter model set: interval transition bounds per pair plus a
/// reward interval table. Any member assigns each row probabilities within
/// [lo, hi] summing to one, and rewards within [reward_lo, reward_hi].
///
/// Immutable after construction; safe to share across threads.
class IntervalModelSet {
  public:
    IntervalModelSet(Index n_states, Index n_actions, double discount,
                     std::vector<IntervalRow> rows, std::vector<double> reward_lo,
                     std::vector<double> reward_hi, std::vector<Index> terminal_states = {});

    Index n_states() const { return n_states_; }
    Index n_actions() const { return n_actions_; }
    double discount() const { return discount_; }

    const IntervalRow& row(Index x, Index u) const {
        return rows_[static_cast<std::size_t>(x) * n_actions_ + u];
    }
    double reward_lo(Index x, Index u) const {
        return reward_lo_[static_cast<std::size_t>(x) * n_actions_ + u];
    }
    double reward_hi(Index x, Index u) const {
        return reward_hi_[static_cast<std::size_t>(x) * n_actions_ + u];
    }
    std::span<const double> reward_lo_table() const { return reward_lo_; }
    std::span<const double> reward_hi_table() const { return reward_hi_; }
    bool is_terminal(Index x) const { return terminal_[x] != 0; }
    const std::vector<Index>& terminal_states() const { return terminal_list_; }

    /// Largest support size over all rows; sizes solver scratch buffers.
    std::size_t max_support() const { return max_support_; }

    /// Elementwise membership test for a candidate MDP (same dimensions,
    /// discount, and terminal set; rows within bounds up to `tol`).
    bool contains(const TabularMdp& mdp, double tol = 1e-9) const;

  private:
    Index n_states_;
    Index n_actions_;
    double discount_;
    std::vector<IntervalRow> rows_;
    std::vector<double> reward_lo_;
    std::vector<double> reward_hi_;
    std::vector<std::uint8_t> terminal_;
    std::vector<Index> terminal_list_;
    std::size_t max_support_ = 0;
};

/// Pessimistic / optimistic Q tables.
struct QBounds {
    QTable lower;
    QTable upper;
};

/// V(x) = max_u Q(x, u) for both tables.
std::pair<std::vector<double>, std::vector<double>> value_bounds(const QBounds& qb);

enum class Sense { Min, Max };

/// Exact optimizer of sum_i values[i] * p[i] over the interval-constrained
/// simplex {lo <= p <= hi, sum p = 1}: start from the lower bounds and pour
/// the remaining mass onto entries in value order (ascending for Min,
/// descending for Max), filling each to its upper bound.
std::vector<double> inner_optimize_sorted(std::span<const double> values,
                                          std::span<const double> lower,
                                          std::span<const double> upper, Sense sense);

struct BoundOptions {
    double tol = 1e-8;
    int max_iters = 100000;
};

struct BoundResult {
    QBounds bounds;
    double residual = 0.0;
    int iterations = 0;
};

/// One synchronous application of the coupled interval Bellman operators
/// (min-sense rows against the lower value function, max-sense against the
/// upper). Exposed for contraction property tests.
QBounds bound_sweep(const IntervalModelSet& model, const QBounds& qb);

/// Iterates bound_sweep to the coupled fixed point (sup-norm residual over
/// both tables <= tol). Without `init`, starts from the reward envelope
/// g_min/(1-gamma), g_max/(1-gamma), which encloses any fixed point.
BoundResult bound_iteration(const IntervalModelSet& model, const BoundOptions& opts = {},
                            const QBounds* init = nullptr);

enum class Certificate : std::uint8_t { Uncertain = 0, GuaranteedOptimal, GuaranteedSuboptimal };

struct ActionCertificates {
    Index n_states = 0;
    Index n_actions = 0;
    std::vector<Certificate> cert;

    Certificate operator()(Index x, Index u) const {
        return cert[static_cast<std::size_t>(x) * n_actions + u];
    }
};

/// Classifies each pair from converged bounds: suboptimal iff the pair's
/// upper bound falls strictly below the state's best lower bound, optimal iff
/// its lower bound dominates every other action's upper bound. At most one
/// action per state is marked optimal (lowest index on ties); a lone action
/// is always optimal.
ActionCertificates certify_actions(const QBounds& qb);

/// Draws a member MDP from the model set: per row, a Dirichlet-style sample
/// over the support redistributed into the box until feasible; rewards
/// uniform within their intervals. The result always satisfies contains().
TabularMdp sample_member(const IntervalModelSet& model, Rng& rng);

namespace detail {

/// In-place greedy mass assignment shared by the bound iterations; `order` is
/// sorting scratch. Ties in `values` break toward the lower position.
void optimize_sorted_into(std::span<const double> values, std::span<const double> lo,
                          std::span<const double> hi, Sense sense, std::vector<double>& p,
                          std::vector<int>& order);

} // namespace detail

} // namespace qbex

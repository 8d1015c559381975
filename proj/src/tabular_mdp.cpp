#include "qbex/tabular_mdp.hpp"

#include <cmath>
#include <limits>

#include "qbex/kernels.hpp"

namespace qbex {

namespace {

constexpr double row_sum_tol = 1e-9;

void validate_row(const SparseRow& row, Index n_states, Index x, Index u) {
    const auto tag = [&] {
        return "row (" + std::to_string(x) + ", " + std::to_string(u) + ")";
    };
    if (row.idx.size() != row.prob.size())
        throw std::invalid_argument(tag() + ": index/probability size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < row.idx.size(); ++i) {
        if (row.idx[i] < 0 || row.idx[i] >= n_states)
            throw std::invalid_argument(tag() + ": successor out of range");
        const double p = row.prob[i];
        if (!(p >= 0.0 && p <= 1.0 + row_sum_tol))
            throw std::invalid_argument(tag() + ": probability outside [0, 1]");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > row_sum_tol)
        throw std::invalid_argument(tag() + ": probabilities sum to " + std::to_string(sum));
}

} // namespace

double QTable::state_value(Index x) const {
    return kernels::reduce_max(row(x), static_cast<std::size_t>(n_actions));
}

Index QTable::greedy_action(Index x) const {
    const double* r = row(x);
    Index best = 0;
    for (Index u = 1; u < n_actions; ++u) {
        if (r[u] > r[best]) best = u;
    }
    return best;
}

TabularMdp::TabularMdp(Index n_states, Index n_actions, double discount,
                       std::vector<SparseRow> rows, std::vector<double> rewards,
                       std::vector<Index> terminal_states)
    : n_states_(n_states), n_actions_(n_actions), discount_(discount), rows_(std::move(rows)),
      rewards_(std::move(rewards)), terminal_(n_states, 0),
      terminal_list_(std::move(terminal_states)) {
    if (n_states_ <= 0 || n_actions_ <= 0)
        throw std::invalid_argument("TabularMdp: state and action counts must be positive");
    if (!(discount_ >= 0.0 && discount_ < 1.0))
        throw std::invalid_argument("TabularMdp: discount must lie in [0, 1)");
    const std::size_t n_pairs = static_cast<std::size_t>(n_states_) * n_actions_;
    if (rows_.size() != n_pairs) throw std::invalid_argument("TabularMdp: wrong number of rows");
    if (rewards_.size() != n_pairs)
        throw std::invalid_argument("TabularMdp: wrong number of rewards");
    for (double g : rewards_) {
        if (!std::isfinite(g)) throw std::invalid_argument("TabularMdp: non-finite reward");
    }
    for (Index t : terminal_list_) {
        if (t < 0 || t >= n_states_)
            throw std::invalid_argument("TabularMdp: terminal state out of range");
        terminal_[t] = 1;
    }
    for (Index x = 0; x < n_states_; ++x) {
        for (Index u = 0; u < n_actions_; ++u) {
            const SparseRow& r = row(x, u);
            validate_row(r, n_states_, x, u);
            if (terminal_[x] != 0 &&
                !(r.size() == 1 && r.idx[0] == x && std::fabs(r.prob[0] - 1.0) <= row_sum_tol))
                throw std::invalid_argument("TabularMdp: terminal state must self-loop");
        }
    }
}

std::vector<double> TabularMdp::dense_row(Index x, Index u) const {
    std::vector<double> out(static_cast<std::size_t>(n_states_), 0.0);
    const SparseRow& r = row(x, u);
    for (std::size_t i = 0; i < r.size(); ++i) out[r.idx[i]] += r.prob[i];
    return out;
}

QTable bellman_apply(const TabularMdp& mdp, const QTable& q) {
    const Index n = mdp.n_states();
    const Index m = mdp.n_actions();
    // Continuation values: zero at terminal states.
    std::vector<double> w(static_cast<std::size_t>(n));
    for (Index x = 0; x < n; ++x) w[x] = mdp.is_terminal(x) ? 0.0 : q.state_value(x);

    QTable out(n, m);
    const double gamma = mdp.discount();
    for (Index x = 0; x < n; ++x) {
        for (Index u = 0; u < m; ++u) {
            const SparseRow& r = mdp.row(x, u);
            const double expected =
                kernels::gather_dot(w.data(), r.idx.data(), r.prob.data(), r.size());
            out(x, u) = mdp.reward(x, u) + gamma * expected;
        }
    }
    return out;
}

ExactSolution solve_exact(const TabularMdp& mdp, const SolveOptions& opts, const QTable* init) {
    if (!(opts.tol > 0.0)) throw std::invalid_argument("solve_exact: tol must be positive");

    QTable q = init != nullptr ? *init : QTable(mdp.n_states(), mdp.n_actions());
    double diff = std::numeric_limits<double>::infinity();
    int iters = 0;
    while (iters < opts.max_iters) {
        QTable next = bellman_apply(mdp, q);
        diff = kernels::max_abs_diff(next.values.data(), q.values.data(), q.values.size());
        q = std::move(next);
        ++iters;
        if (diff <= opts.tol) break;
    }
    if (diff > opts.tol)
        throw ConvergenceError("solve_exact: no convergence after " +
                                   std::to_string(opts.max_iters) +
                                   " iterations, residual " + std::to_string(diff),
                               diff, iters);

    ExactSolution sol;
    sol.policy.action_of.resize(mdp.n_states());
    for (Index x = 0; x < mdp.n_states(); ++x) sol.policy.action_of[x] = q.greedy_action(x);
    // One more application certifies the true Bellman residual of the result.
    QTable check = bellman_apply(mdp, q);
    sol.residual = kernels::max_abs_diff(check.values.data(), q.values.data(), q.values.size());
    sol.q = std::move(q);
    sol.iterations = iters;
    return sol;
}

StepResult step(const TabularMdp& mdp, Index state, Index action, Rng& rng) {
    if (state < 0 || state >= mdp.n_states() || action < 0 || action >= mdp.n_actions())
        throw std::invalid_argument("step: state or action out of range");
    const SparseRow& row = mdp.row(state, action);
    const int pick = rng.sample_weighted(row.prob, 1.0);
    const Index next = row.idx[static_cast<std::size_t>(pick)];
    return StepResult{next, mdp.reward(state, action), mdp.is_terminal(next)};
}

} // namespace qbex

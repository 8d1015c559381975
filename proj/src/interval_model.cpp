#include "qbex/interval_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qbex/kernels.hpp"

namespace qbex {

namespace {

constexpr double feas_tol = 1e-9;

struct SweepWorkspace {
    std::vector<double> w_lo; // continuation values, lower
    std::vector<double> w_hi; // continuation values, upper
    std::vector<double> vals;
    std::vector<double> p;
    std::vector<int> order;
};

} // namespace

namespace detail {

void optimize_sorted_into(std::span<const double> vals, std::span<const double> lo,
                          std::span<const double> hi, Sense sense, std::vector<double>& p,
                          std::vector<int>& order) {
    const std::size_t n = vals.size();
    p.assign(lo.begin(), lo.end());
    double rem = 1.0;
    for (double v : lo) rem -= v;
    if (rem <= 0.0) return; // fully determined by the lower bounds

    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    if (sense == Sense::Min) {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (vals[a] != vals[b]) return vals[a] < vals[b];
            return a < b;
        });
    } else {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (vals[a] != vals[b]) return vals[a] > vals[b];
            return a < b;
        });
    }
    for (int i : order) {
        const double take = std::min(hi[i] - lo[i], rem);
        if (take > 0.0) {
            p[i] += take;
            rem -= take;
        }
        if (rem <= 0.0) break;
    }
    if (rem > feas_tol)
        throw std::invalid_argument("inner optimization: row upper bounds sum below 1");
}

} // namespace detail

namespace {

void sweep_into(const IntervalModelSet& model, const QBounds& qb, QBounds& out,
                SweepWorkspace& ws) {
    const Index n = model.n_states();
    const Index m = model.n_actions();
    const double gamma = model.discount();

    ws.w_lo.resize(static_cast<std::size_t>(n));
    ws.w_hi.resize(static_cast<std::size_t>(n));
    for (Index x = 0; x < n; ++x) {
        const bool term = model.is_terminal(x);
        ws.w_lo[x] = term ? 0.0 : qb.lower.state_value(x);
        ws.w_hi[x] = term ? 0.0 : qb.upper.state_value(x);
    }

    ws.vals.reserve(model.max_support());
    ws.p.reserve(model.max_support());
    for (Index x = 0; x < n; ++x) {
        for (Index u = 0; u < m; ++u) {
            const IntervalRow& row = model.row(x, u);
            const std::size_t k = row.size();

            ws.vals.resize(k);
            for (std::size_t i = 0; i < k; ++i) ws.vals[i] = ws.w_lo[row.idx[i]];
            detail::optimize_sorted_into(ws.vals, row.lo, row.hi, Sense::Min, ws.p, ws.order);
            out.lower(x, u) =
                model.reward_lo(x, u) + gamma * kernels::dot(ws.p.data(), ws.vals.data(), k);

            for (std::size_t i = 0; i < k; ++i) ws.vals[i] = ws.w_hi[row.idx[i]];
            detail::optimize_sorted_into(ws.vals, row.lo, row.hi, Sense::Max, ws.p, ws.order);
            out.upper(x, u) =
                model.reward_hi(x, u) + gamma * kernels::dot(ws.p.data(), ws.vals.data(), k);
        }
    }
}

} // namespace

IntervalModelSet::IntervalModelSet(Index n_states, Index n_actions, double discount,
                                   std::vector<IntervalRow> rows, std::vector<double> reward_lo,
                                   std::vector<double> reward_hi,
                                   std::vector<Index> terminal_states)
    : n_states_(n_states), n_actions_(n_actions), discount_(discount), rows_(std::move(rows)),
      reward_lo_(std::move(reward_lo)), reward_hi_(std::move(reward_hi)),
      terminal_(n_states, 0), terminal_list_(std::move(terminal_states)) {
    if (n_states_ <= 0 || n_actions_ <= 0)
        throw std::invalid_argument("IntervalModelSet: dimensions must be positive");
    if (!(discount_ >= 0.0 && discount_ < 1.0))
        throw std::invalid_argument("IntervalModelSet: discount must lie in [0, 1)");
    const std::size_t n_pairs = static_cast<std::size_t>(n_states_) * n_actions_;
    if (rows_.size() != n_pairs || reward_lo_.size() != n_pairs || reward_hi_.size() != n_pairs)
        throw std::invalid_argument("IntervalModelSet: table sizes do not match dimensions");
    for (std::size_t i = 0; i < n_pairs; ++i) {
        if (!std::isfinite(reward_lo_[i]) || !std::isfinite(reward_hi_[i]) ||
            reward_lo_[i] > reward_hi_[i] + feas_tol)
            throw std::invalid_argument("IntervalModelSet: invalid reward interval");
    }
    for (Index t : terminal_list_) {
        if (t < 0 || t >= n_states_)
            throw std::invalid_argument("IntervalModelSet: terminal state out of range");
        terminal_[t] = 1;
    }
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        const IntervalRow& row = rows_[r];
        if (row.idx.size() != row.lo.size() || row.idx.size() != row.hi.size())
            throw std::invalid_argument("IntervalModelSet: ragged row storage");
        double lo_sum = 0.0;
        double hi_sum = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (row.idx[i] < 0 || row.idx[i] >= n_states_)
                throw std::invalid_argument("IntervalModelSet: successor out of range");
            if (!(row.lo[i] >= 0.0) || row.lo[i] > row.hi[i] + feas_tol || row.hi[i] > 1.0 + feas_tol)
                throw std::invalid_argument(
                    "IntervalModelSet: bounds must satisfy 0 <= lo <= hi <= 1");
            lo_sum += row.lo[i];
            hi_sum += row.hi[i];
        }
        if (lo_sum > 1.0 + feas_tol || hi_sum < 1.0 - feas_tol)
            throw std::invalid_argument("IntervalModelSet: empty transition polytope");
        max_support_ = std::max(max_support_, row.size());
    }
}

bool IntervalModelSet::contains(const TabularMdp& mdp, double tol) const {
    if (mdp.n_states() != n_states_ || mdp.n_actions() != n_actions_) return false;
    std::vector<double> dense(static_cast<std::size_t>(n_states_));
    for (Index x = 0; x < n_states_; ++x) {
        for (Index u = 0; u < n_actions_; ++u) {
            std::fill(dense.begin(), dense.end(), 0.0);
            const SparseRow& mrow = mdp.row(x, u);
            for (std::size_t i = 0; i < mrow.size(); ++i) dense[mrow.idx[i]] += mrow.prob[i];
            const IntervalRow& brow = row(x, u);
            for (std::size_t i = 0; i < brow.size(); ++i) {
                const double p = dense[brow.idx[i]];
                if (p < brow.lo[i] - tol || p > brow.hi[i] + tol) return false;
                dense[brow.idx[i]] = 0.0;
            }
            // Any remaining mass sits outside the support.
            for (double rest : dense) {
                if (rest > tol) return false;
            }
            const double g = mdp.reward(x, u);
            if (g < reward_lo(x, u) - tol || g > reward_hi(x, u) + tol) return false;
        }
    }
    return true;
}

std::pair<std::vector<double>, std::vector<double>> value_bounds(const QBounds& qb) {
    const Index n = qb.lower.n_states;
    std::vector<double> v_lo(static_cast<std::size_t>(n));
    std::vector<double> v_hi(static_cast<std::size_t>(n));
    for (Index x = 0; x < n; ++x) {
        v_lo[x] = qb.lower.state_value(x);
        v_hi[x] = qb.upper.state_value(x);
    }
    return {std::move(v_lo), std::move(v_hi)};
}

std::vector<double> inner_optimize_sorted(std::span<const double> values,
                                          std::span<const double> lower,
                                          std::span<const double> upper, Sense sense) {
    if (values.size() != lower.size() || values.size() != upper.size())
        throw std::invalid_argument("inner_optimize_sorted: size mismatch");
    double lo_sum = 0.0;
    double hi_sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (lower[i] > upper[i] + feas_tol)
            throw std::invalid_argument("inner_optimize_sorted: lower bound above upper bound");
        lo_sum += lower[i];
        hi_sum += upper[i];
    }
    if (lo_sum > 1.0 + feas_tol || hi_sum < 1.0 - feas_tol)
        throw std::invalid_argument("inner_optimize_sorted: empty polytope");

    std::vector<double> p;
    std::vector<int> order;
    detail::optimize_sorted_into(values, lower, upper, sense, p, order);
    return p;
}

QBounds bound_sweep(const IntervalModelSet& model, const QBounds& qb) {
    QBounds out{QTable(model.n_states(), model.n_actions()),
                QTable(model.n_states(), model.n_actions())};
    SweepWorkspace ws;
    sweep_into(model, qb, out, ws);
    return out;
}

BoundResult bound_iteration(const IntervalModelSet& model, const BoundOptions& opts,
                            const QBounds* init) {
    if (!(opts.tol > 0.0)) throw std::invalid_argument("bound_iteration: tol must be positive");

    const Index n = model.n_states();
    const Index m = model.n_actions();
    QBounds qb;
    if (init != nullptr) {
        qb = *init;
    } else {
        const auto lo_table = model.reward_lo_table();
        const auto hi_table = model.reward_hi_table();
        const double g_min = kernels::reduce_min(lo_table.data(), lo_table.size());
        const double g_max = kernels::reduce_max(hi_table.data(), hi_table.size());
        const double scale = 1.0 / (1.0 - model.discount());
        qb.lower = QTable(n, m, g_min * scale);
        qb.upper = QTable(n, m, g_max * scale);
    }

    QBounds next{QTable(n, m), QTable(n, m)};
    SweepWorkspace ws;
    double diff = std::numeric_limits<double>::infinity();
    int iters = 0;
    while (iters < opts.max_iters) {
        sweep_into(model, qb, next, ws);
        diff = std::max(kernels::max_abs_diff(next.lower.values.data(), qb.lower.values.data(),
                                              qb.lower.values.size()),
                        kernels::max_abs_diff(next.upper.values.data(), qb.upper.values.data(),
                                              qb.upper.values.size()));
        std::swap(qb, next);
        ++iters;
        if (diff <= opts.tol) break;
    }
    if (diff > opts.tol)
        throw ConvergenceError("bound_iteration: no convergence after " +
                                   std::to_string(opts.max_iters) + " iterations, residual " +
                                   std::to_string(diff),
                               diff, iters);
    return BoundResult{std::move(qb), diff, iters};
}

ActionCertificates certify_actions(const QBounds& qb) {
    const Index n = qb.lower.n_states;
    const Index m = qb.lower.n_actions;
    ActionCertificates out;
    out.n_states = n;
    out.n_actions = m;
    out.cert.assign(static_cast<std::size_t>(n) * m, Certificate::Uncertain);

    for (Index x = 0; x < n; ++x) {
        const double v_lo = qb.lower.state_value(x);
        Index optimal = -1;
        for (Index u = 0; u < m; ++u) {
            double best_other = -std::numeric_limits<double>::infinity();
            for (Index v = 0; v < m; ++v) {
                if (v != u) best_other = std::max(best_other, qb.upper(x, v));
            }
            if (qb.lower(x, u) >= best_other) {
                optimal = u;
                break; // lowest index wins
            }
        }
        for (Index u = 0; u < m; ++u) {
            auto& c = out.cert[static_cast<std::size_t>(x) * m + u];
            if (u == optimal)
                c = Certificate::GuaranteedOptimal;
            else if (qb.upper(x, u) < v_lo)
                c = Certificate::GuaranteedSuboptimal;
        }
    }
    return out;
}

TabularMdp sample_member(const IntervalModelSet& model, Rng& rng) {
    const Index n = model.n_states();
    const Index m = model.n_actions();
    std::vector<SparseRow> rows(static_cast<std::size_t>(n) * m);
    std::vector<double> rewards(static_cast<std::size_t>(n) * m);

    for (Index x = 0; x < n; ++x) {
        for (Index u = 0; u < m; ++u) {
            const IntervalRow& brow = model.row(x, u);
            const std::size_t k = brow.size();
            std::vector<double> p(k);

            // Dirichlet(1) sample over the support, then move mass into the
            // box: clip, then spread the deficit/excess across the remaining
            // slack until the row is feasible.
            double total = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                p[i] = -std::log(1.0 - rng.uniform());
                total += p[i];
            }
            for (std::size_t i = 0; i < k; ++i) p[i] = p[i] / total;

            for (int pass = 0; pass < 64; ++pass) {
                for (std::size_t i = 0; i < k; ++i)
                    p[i] = std::min(brow.hi[i], std::max(brow.lo[i], p[i]));
                double excess = -1.0;
                for (double v : p) excess += v;
                if (std::fabs(excess) <= 1e-14) break;
                if (excess < 0.0) {
                    double slack = 0.0;
                    for (std::size_t i = 0; i < k; ++i) slack += brow.hi[i] - p[i];
                    for (std::size_t i = 0; i < k; ++i)
                        p[i] -= excess * (brow.hi[i] - p[i]) / slack;
                } else {
                    double slack = 0.0;
                    for (std::size_t i = 0; i < k; ++i) slack += p[i] - brow.lo[i];
                    for (std::size_t i = 0; i < k; ++i)
                        p[i] -= excess * (p[i] - brow.lo[i]) / slack;
                }
            }

            double sum = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                if (p[i] < brow.lo[i] - feas_tol || p[i] > brow.hi[i] + feas_tol)
                    throw std::runtime_error("sample_member: projection failed");
                sum += p[i];
            }
            if (std::fabs(sum - 1.0) > feas_tol)
                throw std::runtime_error("sample_member: row does not normalize");

            SparseRow& out = rows[static_cast<std::size_t>(x) * m + u];
            for (std::size_t i = 0; i < k; ++i) {
                if (p[i] > 0.0) {
                    out.idx.push_back(brow.idx[i]);
                    out.prob.push_back(p[i]);
                }
            }
            // Guard against a pathological all-zero row (cannot happen for a
            // feasible polytope, but keep the MDP constructible).
            if (out.idx.empty()) {
                out.idx.push_back(brow.idx[0]);
                out.prob.push_back(1.0);
            }

            rewards[static_cast<std::size_t>(x) * m + u] =
                rng.uniform(model.reward_lo(x, u), model.reward_hi(x, u));
        }
    }
    return TabularMdp(n, m, model.discount(), std::move(rows), std::move(rewards),
                      model.terminal_states());
}

} // namespace qbex

#include "qbex/regularized.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qbex/kernels.hpp"

namespace qbex {

namespace {

constexpr double sum_tol = 1e-10;   // bisection tolerance on the row sum
constexpr double feas_margin = 1e-12;

struct RegScratch {
    std::vector<double> vals;    // full-support continuation values
    std::vector<double> packed;  // values at unpinned positions
    std::vector<double> w;       // ref * exp(s v / lambda - amax)
    std::vector<double> p;       // packed solution
    std::vector<int> order;      // sorting scratch for the lambda = 0 path
};

// Solves sum_i clip(w_pos[i] * exp(-mu), lo[i], hi[i]) = target for mu by
// bisection; mu_cache (may be NaN) warms the bracket. Returns the final mu.
// Caller guarantees target is attainable within the box. The exponent is
// clamped so an overflowing scale can never multiply an underflowed weight
// into NaN while the bracket expands; the crossing itself always lies far
// inside the clamped range.
double bisect_mu(std::span<const double> w, std::span<const double> lo,
                 std::span<const double> hi, double target, double w_sum, double mu_cache) {
    const auto f = [&](double mu) {
        const double t = std::exp(std::clamp(-mu, -745.0, 709.0));
        return kernels::clipped_scale_sum(w.data(), lo.data(), hi.data(), t, w.size());
    };

    double center = std::isfinite(mu_cache) ? mu_cache
                                            : std::log(std::max(w_sum, 1e-300) /
                                                       std::max(target, 1e-300));
    double width = 1.0;
    double a = center - width;
    double b = center + width;
    double fa = f(a);
    double fb = f(b);
    for (int i = 0; i < 200 && (fa < target || fb > target); ++i) {
        width *= 2.0;
        if (fa < target) {
            a = center - width;
            fa = f(a);
        }
        if (fb > target) {
            b = center + width;
            fb = f(b);
        }
    }

    double mid = center;
    for (int i = 0; i < 200; ++i) {
        mid = 0.5 * (a + b);
        const double fm = f(mid);
        if (std::fabs(fm - target) <= sum_tol) break;
        if (fm > target) {
            a = mid;
        } else {
            b = mid;
        }
    }
    return mid;
}

// Regularized row solve on packed (ref > 0) entries. Writes the packed
// solution into ws.p and returns it; ws.w is clobbered.
void solve_packed(std::span<const double> values, std::span<const double> lo,
                  std::span<const double> hi, std::span<const double> ref, double lambda,
                  Sense sense, double target, RegScratch& ws, double* mu_cache) {
    const std::size_t k = values.size();
    const double scale = (sense == Sense::Max ? 1.0 : -1.0) / lambda;

    double amax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) amax = std::max(amax, values[i] * scale);

    ws.w.resize(k);
    kernels::exp_weights(ws.w.data(), ref.data(), values.data(), scale, -amax, k);
    double w_sum = 0.0;
    for (double v : ws.w) w_sum += v;

    const double mu = bisect_mu(ws.w, lo, hi, target, w_sum, mu_cache ? *mu_cache : NAN);
    if (mu_cache != nullptr) *mu_cache = mu;

    ws.p.resize(k);
    const double t = std::exp(std::clamp(-mu, -745.0, 709.0));
    kernels::clipped_scale_store(ws.p.data(), ws.w.data(), lo.data(), hi.data(), t, k);
}

} // namespace

void TransitionCounts::add(Index x, Index u, Index next, std::int64_t count) {
    if (x < 0 || x >= n_states_ || u < 0 || u >= n_actions_ || next < 0 || next >= n_states_)
        throw std::invalid_argument("TransitionCounts: index out of range");
    if (count < 0) throw std::invalid_argument("TransitionCounts: negative count");
    auto& row = rows_[static_cast<std::size_t>(x) * n_actions_ + u];
    auto it = std::find_if(row.begin(), row.end(),
                           [next](const Entry& e) { return e.first == next; });
    if (it == row.end()) {
        row.emplace_back(next, count);
    } else {
        it->second += count;
    }
    totals_[static_cast<std::size_t>(x) * n_actions_ + u] += count;
    grand_total_ += count;
}

EmpiricalKernel empirical_kernel(const TransitionCounts& counts) {
    EmpiricalKernel out;
    out.n_states = counts.n_states();
    out.n_actions = counts.n_actions();
    const std::size_t n_pairs =
        static_cast<std::size_t>(out.n_states) * static_cast<std::size_t>(out.n_actions);
    out.rows.resize(n_pairs);
    out.has_data.assign(n_pairs, 0);
    for (Index x = 0; x < out.n_states; ++x) {
        for (Index u = 0; u < out.n_actions; ++u) {
            const std::int64_t total = counts.total(x, u);
            if (total <= 0) continue;
            const std::size_t flat = static_cast<std::size_t>(x) * out.n_actions + u;
            out.has_data[flat] = 1;
            EmpiricalRow& row = out.rows[flat];
            for (const auto& [next, c] : counts.row(x, u)) {
                if (c <= 0) continue;
                row.idx.push_back(next);
                row.prob.push_back(static_cast<double>(c) / static_cast<double>(total));
            }
        }
    }
    return out;
}

LambdaSchedule::LambdaSchedule(double c, double delta, Index n_pairs)
    : c(c), delta(delta), n_pairs(n_pairs) {
    if (!(c > 0.0)) throw std::invalid_argument("LambdaSchedule: c must be positive");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("LambdaSchedule: delta must lie in (0, 1)");
    if (n_pairs < 2)
        throw std::invalid_argument("LambdaSchedule: need at least two state-action pairs");
}

double LambdaSchedule::value(std::int64_t total) const {
    if (total <= 0) return 0.0;
    const double denom = std::log(static_cast<double>(n_pairs)) / delta;
    return c * std::sqrt(static_cast<double>(total) / denom);
}

void ObservedRewards::observe(Index x, Index u, double reward) {
    if (x < 0 || x >= n_states_ || u < 0 || u >= n_actions_)
        throw std::invalid_argument("ObservedRewards: index out of range");
    const std::size_t f = flat(x, u);
    if (seen_[f] != 0) {
        if (std::fabs(values_[f] - reward) > 1e-9)
            throw std::runtime_error("ObservedRewards: conflicting reward observation at (" +
                                     std::to_string(x) + ", " + std::to_string(u) + ")");
        return;
    }
    seen_[f] = 1;
    values_[f] = reward;
    ++observed_;
}

double kl_divergence(std::span<const double> p, std::span<const double> ref) {
    if (p.size() != ref.size()) throw std::invalid_argument("kl_divergence: size mismatch");
    double p_sum = 0.0;
    double ref_sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < -1e-12 || ref[i] < -1e-12)
            throw std::invalid_argument("kl_divergence: negative entry");
        p_sum += p[i];
        ref_sum += ref[i];
    }
    if (std::fabs(p_sum - 1.0) > 1e-9 || std::fabs(ref_sum - 1.0) > 1e-9)
        throw std::invalid_argument("kl_divergence: inputs must sum to 1");

    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (ref[i] <= 0.0) return std::numeric_limits<double>::infinity();
        acc += p[i] * std::log(p[i] / ref[i]);
    }
    return std::max(acc, 0.0);
}

std::vector<double> inner_optimize_regularized(std::span<const double> values,
                                               std::span<const double> lower,
                                               std::span<const double> upper,
                                               std::span<const double> ref, double lambda,
                                               Sense sense, bool* used_fallback) {
    if (used_fallback != nullptr) *used_fallback = false;
    const std::size_t n = values.size();
    if (lower.size() != n || upper.size() != n)
        throw std::invalid_argument("inner_optimize_regularized: size mismatch");
    if (!(lambda >= 0.0))
        throw std::invalid_argument("inner_optimize_regularized: lambda must be nonnegative");

    if (lambda == 0.0) return inner_optimize_sorted(values, lower, upper, sense);

    if (ref.size() != n) throw std::invalid_argument("inner_optimize_regularized: ref size");
    double ref_sum = 0.0;
    for (double r : ref) {
        if (!(r >= 0.0)) throw std::invalid_argument("inner_optimize_regularized: negative ref");
        ref_sum += r;
    }
    if (!(ref_sum > 0.0) || ref_sum > 1.0 + 1e-9)
        throw std::invalid_argument("inner_optimize_regularized: ref is not a distribution");

    // Split the support: entries the data never observed stay at their lower
    // bounds; the optimization runs on the observed part.
    std::vector<int> packed_pos;
    double pinned_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (ref[i] > 0.0) {
            packed_pos.push_back(static_cast<int>(i));
        } else {
            pinned_mass += lower[i];
        }
    }
    const double target = 1.0 - pinned_mass;

    double lo_sum = 0.0;
    double hi_sum = 0.0;
    RegScratch ws;
    std::vector<double> plo(packed_pos.size()), phi(packed_pos.size()), pref(packed_pos.size());
    ws.packed.resize(packed_pos.size());
    for (std::size_t j = 0; j < packed_pos.size(); ++j) {
        const int i = packed_pos[j];
        plo[j] = lower[i];
        phi[j] = upper[i];
        pref[j] = ref[i];
        ws.packed[j] = values[i];
        lo_sum += plo[j];
        hi_sum += phi[j];
    }

    if (packed_pos.empty() || lo_sum > target + feas_margin || hi_sum < target - feas_margin) {
        if (used_fallback != nullptr) *used_fallback = true;
        return inner_optimize_sorted(values, lower, upper, sense);
    }

    solve_packed(ws.packed, plo, phi, pref, lambda, sense, target, ws, nullptr);

    std::vector<double> out(lower.begin(), lower.end());
    for (std::size_t j = 0; j < packed_pos.size(); ++j) out[packed_pos[j]] = ws.p[j];
    return out;
}

namespace {

struct RowPlan {
    enum class Kind : std::uint8_t { Terminal, Sorted, SortedFallback, Empirical, Regularized };

    Kind kind = Kind::Sorted;
    double lambda = 0.0;
    double r_lo = 0.0;
    double r_hi = 0.0;
    double target = 1.0;
    std::vector<int> packed_pos;  // support positions with observed mass
    std::vector<int> pinned_pos;  // support positions pinned at their lower bound
    std::vector<double> ref_packed;
    std::vector<double> lo_packed;
    std::vector<double> hi_packed;
    std::vector<Index> emp_idx;   // lambda = infinity override rows
    std::vector<double> emp_prob;
    double mu_lower = NAN;
    double mu_upper = NAN;
};

std::vector<RowPlan> build_plans(const IntervalModelSet& model, const TransitionCounts& counts,
                                 const ObservedRewards& rewards, const LambdaSchedule& schedule,
                                 const std::vector<std::uint8_t>* deterministic_rows,
                                 std::int64_t& fallback_rows) {
    const Index n = model.n_states();
    const Index m = model.n_actions();
    std::vector<RowPlan> plans(static_cast<std::size_t>(n) * m);
    std::vector<double> dense(static_cast<std::size_t>(n), 0.0);

    for (Index x = 0; x < n; ++x) {
        for (Index u = 0; u < m; ++u) {
            const std::size_t flat = static_cast<std::size_t>(x) * m + u;
            RowPlan& plan = plans[flat];

            if (rewards.has(x, u)) {
                plan.r_lo = plan.r_hi = rewards.value(x, u);
            } else {
                plan.r_lo = model.reward_lo(x, u);
                plan.r_hi = model.reward_hi(x, u);
            }
            if (model.is_terminal(x)) {
                plan.kind = RowPlan::Kind::Terminal;
                continue;
            }

            const std::int64_t total = counts.total(x, u);
            if (deterministic_rows != nullptr && (*deterministic_rows)[flat] != 0 && total > 0) {
                plan.kind = RowPlan::Kind::Empirical;
                for (const auto& [next, c] : counts.row(x, u)) {
                    if (c <= 0) continue;
                    plan.emp_idx.push_back(next);
                    plan.emp_prob.push_back(static_cast<double>(c) /
                                            static_cast<double>(total));
                }
                continue;
            }

            plan.lambda = schedule.value(total);
            if (plan.lambda == 0.0) {
                plan.kind = RowPlan::Kind::Sorted;
                continue;
            }

            const IntervalRow& row = model.row(x, u);
            for (const auto& [next, c] : counts.row(x, u)) {
                if (c > 0) dense[next] = static_cast<double>(c) / static_cast<double>(total);
            }
            double pinned_mass = 0.0;
            double lo_sum = 0.0;
            double hi_sum = 0.0;
            for (std::size_t i = 0; i < row.size(); ++i) {
                const double r = dense[row.idx[i]];
                if (r > 0.0) {
                    plan.packed_pos.push_back(static_cast<int>(i));
                    plan.ref_packed.push_back(r);
                    plan.lo_packed.push_back(row.lo[i]);
                    plan.hi_packed.push_back(row.hi[i]);
                    lo_sum += row.lo[i];
                    hi_sum += row.hi[i];
                } else {
                    plan.pinned_pos.push_back(static_cast<int>(i));
                    pinned_mass += row.lo[i];
                }
            }
            for (const auto& [next, c] : counts.row(x, u)) dense[next] = 0.0;

            plan.target = 1.0 - pinned_mass;
            if (plan.packed_pos.empty() || lo_sum > plan.target + feas_margin ||
                hi_sum < plan.target - feas_margin) {
                plan.kind = RowPlan::Kind::SortedFallback;
                ++fallback_rows;
            } else {
                plan.kind = RowPlan::Kind::Regularized;
            }
        }
    }
    return plans;
}

void regularized_sweep(const IntervalModelSet& model, std::vector<RowPlan>& plans,
                       const QBounds& qb, QBounds& out, RegScratch& ws, std::vector<double>& w_lo,
                       std::vector<double>& w_hi) {
    const Index n = model.n_states();
    const Index m = model.n_actions();
    const double gamma = model.discount();

    w_lo.resize(static_cast<std::size_t>(n));
    w_hi.resize(static_cast<std::size_t>(n));
    for (Index x = 0; x < n; ++x) {
        const bool term = model.is_terminal(x);
        w_lo[x] = term ? 0.0 : qb.lower.state_value(x);
        w_hi[x] = term ? 0.0 : qb.upper.state_value(x);
    }

    for (Index x = 0; x < n; ++x) {
        for (Index u = 0; u < m; ++u) {
            RowPlan& plan = plans[static_cast<std::size_t>(x) * m + u];
            if (plan.kind == RowPlan::Kind::Terminal) {
                out.lower(x, u) = plan.r_lo;
                out.upper(x, u) = plan.r_hi;
                continue;
            }
            if (plan.kind == RowPlan::Kind::Empirical) {
                const std::size_t k = plan.emp_idx.size();
                out.lower(x, u) =
                    plan.r_lo + gamma * kernels::gather_dot(w_lo.data(), plan.emp_idx.data(),
                                                            plan.emp_prob.data(), k);
                out.upper(x, u) =
                    plan.r_hi + gamma * kernels::gather_dot(w_hi.data(), plan.emp_idx.data(),
                                                            plan.emp_prob.data(), k);
                continue;
            }

            const IntervalRow& row = model.row(x, u);
            const std::size_t k = row.size();
            if (plan.kind == RowPlan::Kind::Sorted || plan.kind == RowPlan::Kind::SortedFallback) {
                ws.vals.resize(k);
                for (std::size_t i = 0; i < k; ++i) ws.vals[i] = w_lo[row.idx[i]];
                detail::optimize_sorted_into(ws.vals, row.lo, row.hi, Sense::Min, ws.p, ws.order);
                out.lower(x, u) =
                    plan.r_lo + gamma * kernels::dot(ws.p.data(), ws.vals.data(), k);

                for (std::size_t i = 0; i < k; ++i) ws.vals[i] = w_hi[row.idx[i]];
                detail::optimize_sorted_into(ws.vals, row.lo, row.hi, Sense::Max, ws.p, ws.order);
                out.upper(x, u) =
                    plan.r_hi + gamma * kernels::dot(ws.p.data(), ws.vals.data(), k);
                continue;
            }

            // Regularized row: solve both senses against the packed support.
            const std::size_t pk = plan.packed_pos.size();
            ws.vals.resize(k);
            ws.packed.resize(pk);

            for (std::size_t i = 0; i < k; ++i) ws.vals[i] = w_lo[row.idx[i]];
            for (std::size_t j = 0; j < pk; ++j) ws.packed[j] = ws.vals[plan.packed_pos[j]];
            solve_packed(ws.packed, plan.lo_packed, plan.hi_packed, plan.ref_packed, plan.lambda,
                         Sense::Min, plan.target, ws, &plan.mu_lower);
            double backup = kernels::dot(ws.p.data(), ws.packed.data(), pk);
            for (int pos : plan.pinned_pos) backup += row.lo[pos] * ws.vals[pos];
            out.lower(x, u) = plan.r_lo + gamma * backup;

            for (std::size_t i = 0; i < k; ++i) ws.vals[i] = w_hi[row.idx[i]];
            for (std::size_t j = 0; j < pk; ++j) ws.packed[j] = ws.vals[plan.packed_pos[j]];
            solve_packed(ws.packed, plan.lo_packed, plan.hi_packed, plan.ref_packed, plan.lambda,
                         Sense::Max, plan.target, ws, &plan.mu_upper);
            backup = kernels::dot(ws.p.data(), ws.packed.data(), pk);
            for (int pos : plan.pinned_pos) backup += row.lo[pos] * ws.vals[pos];
            out.upper(x, u) = plan.r_hi + gamma * backup;
        }
    }
}

} // namespace

RegularizedResult regularized_bound_iteration(const IntervalModelSet& model,
                                              const TransitionCounts& counts,
                                              const ObservedRewards& rewards,
                                              const LambdaSchedule& schedule,
                                              const BoundOptions& opts, const QBounds* init,
                                              const std::vector<std::uint8_t>* deterministic_rows) {
    if (!(opts.tol > 0.0))
        throw std::invalid_argument("regularized_bound_iteration: tol must be positive");
    if (counts.n_states() != model.n_states() || counts.n_actions() != model.n_actions())
        throw std::invalid_argument("regularized_bound_iteration: counts dimension mismatch");
    if (rewards.n_states() != model.n_states() || rewards.n_actions() != model.n_actions())
        throw std::invalid_argument("regularized_bound_iteration: rewards dimension mismatch");

    const Index n = model.n_states();
    const Index m = model.n_actions();
    RegularizedResult result;
    std::vector<RowPlan> plans =
        build_plans(model, counts, rewards, schedule, deterministic_rows, result.fallback_rows);

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
    RegScratch ws;
    std::vector<double> w_lo;
    std::vector<double> w_hi;
    double diff = std::numeric_limits<double>::infinity();
    int iters = 0;
    while (iters < opts.max_iters) {
        regularized_sweep(model, plans, qb, next, ws, w_lo, w_hi);
        diff = std::max(kernels::max_abs_diff(next.lower.values.data(), qb.lower.values.data(),
                                              qb.lower.values.size()),
                        kernels::max_abs_diff(next.upper.values.data(), qb.upper.values.data(),
                                              qb.upper.values.size()));
        std::swap(qb, next);
        ++iters;
        if (diff <= opts.tol) break;
    }
    if (diff > opts.tol)
        throw ConvergenceError("regularized_bound_iteration: no convergence after " +
                                   std::to_string(opts.max_iters) + " iterations, residual " +
                                   std::to_string(diff),
                               diff, iters);

    result.bounds = std::move(qb);
    result.residual = diff;
    result.iterations = iters;
    return result;
}

} // namespace qbex

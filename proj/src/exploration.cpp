#include "qbex/exploration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qbex {

namespace {

constexpr double tight_tol = 1e-9;

} // namespace

double improvement(const QBounds& qb, Index x, Index u) {
    return std::max(0.0, qb.upper(x, u) - qb.lower.state_value(x));
}

double beta_weight(const QBounds& qb, Index x, Index u, BetaKind kind, double constant) {
    if (kind == BetaKind::Constant) return constant;
    const double width = qb.upper(x, u) - qb.lower(x, u);
    if (width <= 0.0)
        throw std::logic_error("beta_weight: degenerate interval should have been routed to a "
                               "certainty case");
    const double imp = improvement(qb, x, u);
    if (kind == BetaKind::ProbabilityOfImprovement) return std::min(1.0, imp / width);
    return imp * imp / (2.0 * width);
}

StateWeights compute_weights(const QBounds& qb, Index x, const ExplorationParams& params) {
    if (!(params.xi > 0.0)) throw std::invalid_argument("compute_weights: xi must be positive");
    if (!(params.zeta >= 0.0))
        throw std::invalid_argument("compute_weights: zeta must be nonnegative");

    const Index m = qb.lower.n_actions;
    const double v_lo = qb.lower.state_value(x);

    Index certain = -1;
    for (Index u = 0; u < m; ++u) {
        double best_other = -std::numeric_limits<double>::infinity();
        for (Index v = 0; v < m; ++v) {
            if (v != u) best_other = std::max(best_other, qb.upper(x, v));
        }
        if (qb.lower(x, u) >= best_other) {
            certain = u;
            break; // ties resolve to the lowest index
        }
    }

    StateWeights out;
    out.weights.resize(static_cast<std::size_t>(m));
    out.cases.resize(static_cast<std::size_t>(m));
    for (Index u = 0; u < m; ++u) {
        if (u == certain) {
            out.weights[u] = params.xi;
            out.cases[u] = WeightCase::CertainOptimal;
            continue;
        }
        const double q_lo = qb.lower(x, u);
        const double q_hi = qb.upper(x, u);
        const bool tight = std::fabs(q_hi - q_lo) <= tight_tol;
        if (!tight && q_hi > v_lo) {
            out.weights[u] = beta_weight(qb, x, u, params.beta, params.beta_constant);
            out.cases[u] = WeightCase::Improvement;
        } else if (tight && q_hi <= v_lo) {
            out.weights[u] = 0.0;
            out.cases[u] = WeightCase::PrunedDominated;
        } else {
            out.weights[u] = params.zeta;
            out.cases[u] = WeightCase::Residual;
        }
    }
    return out;
}

Index sample_action(const StateWeights& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights.weights) total += w;
    if (total <= 0.0) return rng.uniform_int(static_cast<int>(weights.weights.size()));
    return rng.sample_weighted(weights.weights, total);
}

} // namespace qbex

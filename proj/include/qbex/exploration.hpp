#pragma once

#include "qbex/interval_model.hpp"

namespace qbex {

enum class BetaKind : std::uint8_t { ProbabilityOfImprovement, ExpectedImprovement, Constant };

/// Parameters of the bound-guided exploring policy: xi weights certainly
/// optimal actions, zeta weights uncertain-but-dominated ones, and beta
/// scores actions whose interval still reaches above the best worst case.
struct ExplorationParams {
    double xi = 1.0;
    double zeta = 0.0;
    BetaKind beta = BetaKind::ExpectedImprovement;
    double beta_constant = 1.0;
};

/// Which branch of the weighting rule fired for an action.
enum class WeightCase : std::uint8_t {
    CertainOptimal,   // lower bound dominates every other upper bound -> xi
    Improvement,      // uncertain interval reaching above the best worst case -> beta
    PrunedDominated,  // tight and dominated -> 0
    Residual,         // uncertain yet apparently dominated -> zeta
};

struct StateWeights {
    std::vector<double> weights;
    std::vector<WeightCase> cases;
};

/// I(x,u) = max(0, upper(x,u) - max_v lower(x,v)).
double improvement(const QBounds& qb, Index x, Index u);

/// Acquisition weight for an uncertain action, assuming Q uniform within its
/// interval: probability of improvement, expected improvement, or a constant.
/// Requires a non-degenerate interval at (x, u).
double beta_weight(const QBounds& qb, Index x, Index u, BetaKind kind, double constant = 1.0);

/// Per-action sampling weights at one state. Interval tightness is tested
/// with absolute tolerance 1e-9; if several actions qualify as certainly
/// optimal (possible only when tied and tight), the lowest index gets xi and
/// the rest fall through to the dominated case.
StateWeights compute_weights(const QBounds& qb, Index x, const ExplorationParams& params);

/// Samples an action proportionally to the weights; if all weights vanish,
/// falls back to uniform over all actions.
Index sample_action(const StateWeights& weights, Rng& rng);

} // namespace qbex

#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "qbex/exploration.hpp"

using namespace qbex;

namespace {

QBounds one_state(std::vector<double> lo, std::vector<double> hi) {
    const Index m = static_cast<Index>(lo.size());
    QBounds qb{QTable(1, m), QTable(1, m)};
    qb.lower.values = std::move(lo);
    qb.upper.values = std::move(hi);
    return qb;
}

/// Fig.-1-style state: action 1 holds the best lower value, action 0 is
/// uncertain below it, action 2 is dominated outright.
QBounds overlap_scenario() { return one_state({0.2, 1.0, 0.0}, {1.8, 2.0, 0.8}); }

bool predicate_case1(const QBounds& qb, Index u) {
    double best_other = -std::numeric_limits<double>::infinity();
    for (Index v = 0; v < qb.upper.n_actions; ++v) {
        if (v != u) best_other = std::max(best_other, qb.upper(0, v));
    }
    return qb.lower(0, u) >= best_other;
}

} // namespace

TEST_CASE("improvement") {
    const QBounds qb = one_state({1.0, 0.0}, {1.0, 2.0});
    CHECK(improvement(qb, 0, 0) == 0.0);       // upper equals the best lower value
    CHECK(improvement(qb, 0, 1) == 1.0);       // 2 - 1
    const QBounds below = one_state({1.0, 0.0}, {1.0, 0.5});
    CHECK(improvement(below, 0, 1) == 0.0);    // clamped at zero
}

TEST_CASE("beta weights") {
    // lower 0, upper 2, best lower value 1.
    const QBounds qb = one_state({1.0, 0.0}, {1.0, 2.0});
    CHECK(beta_weight(qb, 0, 1, BetaKind::ProbabilityOfImprovement) == doctest::Approx(0.5));
    CHECK(beta_weight(qb, 0, 1, BetaKind::ExpectedImprovement) == doctest::Approx(0.25));
    CHECK(beta_weight(qb, 0, 1, BetaKind::Constant, 0.7) == 0.7);

    SUBCASE("interval entirely above the best worst case") {
        const QBounds high = one_state({0.5, 1.0}, {0.5, 3.0});
        // Action 1's lower bound is the state value, so its whole interval improves.
        CHECK(beta_weight(high, 0, 1, BetaKind::ProbabilityOfImprovement) == doctest::Approx(1.0));
    }
    SUBCASE("degenerate interval is a contract violation") {
        const QBounds tight = one_state({1.0, 0.5}, {1.0, 0.5});
        CHECK_THROWS_AS(beta_weight(tight, 0, 0, BetaKind::ExpectedImprovement),
                        std::logic_error);
    }
    SUBCASE("ranges") {
        Rng rng(123);
        for (int trial = 0; trial < 500; ++trial) {
            const QBounds qb2 = testing::random_qbounds(rng, 1, 4);
            for (Index u = 0; u < 4; ++u) {
                const double width = qb2.upper(0, u) - qb2.lower(0, u);
                if (width <= 1e-9) continue;
                const double pi = beta_weight(qb2, 0, u, BetaKind::ProbabilityOfImprovement);
                const double ei = beta_weight(qb2, 0, u, BetaKind::ExpectedImprovement);
                CHECK(pi >= 0.0);
                CHECK(pi <= 1.0 + 1e-12);
                CHECK(ei >= 0.0);
                CHECK(ei <= width / 2.0 + 1e-12);
            }
        }
    }
}

TEST_CASE("compute_weights") {
    const ExplorationParams params{1.0, 0.0, BetaKind::ExpectedImprovement, 1.0};

    SUBCASE("overlapping intervals weight the improvers and prune the dominated") {
        const StateWeights w = compute_weights(overlap_scenario(), 0, params);
        CHECK(w.cases[0] == WeightCase::Improvement);
        CHECK(w.cases[1] == WeightCase::Improvement);
        CHECK(w.cases[2] == WeightCase::Residual); // uncertain but dominated -> zeta
        CHECK(w.weights[2] == 0.0);
        // EI = (upper - best_lower)^2 / (2 width)
        CHECK(w.weights[0] == doctest::Approx(0.8 * 0.8 / (2.0 * 1.6)));
        CHECK(w.weights[1] == doctest::Approx(1.0 / 2.0));
        CHECK(w.weights[1] > w.weights[0]); // the better candidate gets more pull
    }
    SUBCASE("tight bounds with a strict argmax") {
        const StateWeights w = compute_weights(one_state({1.0, 2.0, 0.5}, {1.0, 2.0, 0.5}), 0,
                                               params);
        CHECK(w.cases[1] == WeightCase::CertainOptimal);
        CHECK(w.weights[1] == 1.0);
        CHECK(w.cases[0] == WeightCase::PrunedDominated);
        CHECK(w.cases[2] == WeightCase::PrunedDominated);
        CHECK(w.weights[0] == 0.0);
    }
    SUBCASE("all bounds identical and tight: lowest index wins, rest prune") {
        const StateWeights w = compute_weights(one_state({1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}), 0,
                                               params);
        CHECK(w.cases[0] == WeightCase::CertainOptimal);
        CHECK(w.cases[1] == WeightCase::PrunedDominated);
        CHECK(w.cases[2] == WeightCase::PrunedDominated);
    }
    SUBCASE("uncertain action whose upper bound exactly equals the state value") {
        // Falls through to the residual case as printed: zeta despite Q-width.
        const StateWeights w = compute_weights(one_state({1.0, 0.0}, {1.0, 1.0}), 0,
                                               ExplorationParams{1.0, 0.25,
                                                                 BetaKind::ExpectedImprovement,
                                                                 1.0});
        CHECK(w.cases[1] == WeightCase::Residual);
        CHECK(w.weights[1] == 0.25);
    }
    SUBCASE("single action is certainly optimal") {
        const StateWeights w = compute_weights(one_state({0.0}, {1.0}), 0, params);
        CHECK(w.cases[0] == WeightCase::CertainOptimal);
    }
    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(compute_weights(overlap_scenario(), 0,
                                        ExplorationParams{0.0, 0.0,
                                                          BetaKind::ExpectedImprovement, 1.0}),
                        std::invalid_argument);
    }
}

TEST_CASE("weight cases partition and exclude") {
    Rng rng(301);
    const ExplorationParams params{1.0, 0.5, BetaKind::ProbabilityOfImprovement, 1.0};
    for (int trial = 0; trial < 2000; ++trial) {
        const Index m = 1 + rng.uniform_int(4);
        const QBounds qb = testing::random_qbounds(rng, 1, m);
        const StateWeights w = compute_weights(qb, 0, params);
        REQUIRE(w.cases.size() == static_cast<std::size_t>(m));

        bool any_case1 = false;
        bool any_case2 = false;
        for (Index u = 0; u < m; ++u) {
            const double q_lo = qb.lower(0, u);
            const double q_hi = qb.upper(0, u);
            const double v_lo = qb.lower.state_value(0);
            const bool tight = std::fabs(q_hi - q_lo) <= 1e-9;
            switch (w.cases[u]) {
            case WeightCase::CertainOptimal:
                CHECK(predicate_case1(qb, u));
                CHECK(w.weights[u] == params.xi);
                any_case1 = true;
                break;
            case WeightCase::Improvement:
                CHECK(!tight);
                CHECK(q_hi > v_lo);
                CHECK(w.weights[u] >= 0.0);
                any_case2 = true;
                break;
            case WeightCase::PrunedDominated:
                CHECK(tight);
                CHECK(q_hi <= v_lo);
                CHECK(w.weights[u] == 0.0);
                break;
            case WeightCase::Residual:
                // Neither of the decisive cases fired.
                CHECK(!(!tight && q_hi > v_lo));
                CHECK(!(tight && q_hi <= v_lo));
                CHECK(w.weights[u] == params.zeta);
                break;
            }
        }
        // An optimality certificate rules out improvement candidates.
        CHECK(!(any_case1 && any_case2));
    }
}

TEST_CASE("weight cases agree with certificates on tie-free tables") {
    Rng rng(302);
    const ExplorationParams params{1.0, 0.5, BetaKind::ExpectedImprovement, 1.0};
    for (int trial = 0; trial < 500; ++trial) {
        const Index m = 2 + rng.uniform_int(3);
        const QBounds qb = testing::random_qbounds(rng, 1, m, /*dominated_tights=*/true);
        const StateWeights w = compute_weights(qb, 0, params);
        const ActionCertificates certs = certify_actions(qb);
        for (Index u = 0; u < m; ++u) {
            CHECK((w.cases[u] == WeightCase::CertainOptimal) ==
                  (certs(0, u) == Certificate::GuaranteedOptimal));
            if (w.cases[u] == WeightCase::PrunedDominated) {
                CHECK(certs(0, u) == Certificate::GuaranteedSuboptimal);
                CHECK(std::fabs(qb.upper(0, u) - qb.lower(0, u)) <= 1e-9);
            }
        }
    }
}

TEST_CASE("sample_action") {
    Rng rng(303);
    SUBCASE("point mass") {
        StateWeights w{{1.0, 0.0, 0.0}, {}};
        for (int i = 0; i < 100; ++i) CHECK(sample_action(w, rng) == 0);
    }
    SUBCASE("even weights split evenly") {
        StateWeights w{{1.0, 1.0}, {}};
        int hits = 0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            if (sample_action(w, rng) == 0) ++hits;
        }
        CHECK(std::fabs(static_cast<double>(hits) / n - 0.5) < 0.01);
    }
    SUBCASE("all-zero weights fall back to uniform") {
        StateWeights w{{0.0, 0.0, 0.0}, {}};
        std::array<int, 3> hits{};
        const int n = 90000;
        for (int i = 0; i < n; ++i) ++hits[static_cast<std::size_t>(sample_action(w, rng))];
        for (const int h : hits)
            CHECK(std::fabs(static_cast<double>(h) / n - 1.0 / 3.0) < 0.01);
    }
    SUBCASE("weights are scale invariant in distribution") {
        StateWeights w{{0.2, 0.5, 0.3}, {}};
        StateWeights scaled{{0.2 * 37.0, 0.5 * 37.0, 0.3 * 37.0}, {}};
        std::array<int, 3> base{};
        std::array<int, 3> multiplied{};
        Rng r1(404);
        Rng r2(404);
        const int n = 50000;
        for (int i = 0; i < n; ++i) {
            ++base[static_cast<std::size_t>(sample_action(w, r1))];
            ++multiplied[static_cast<std::size_t>(sample_action(scaled, r2))];
        }
        for (int i = 0; i < 3; ++i)
            CHECK(std::fabs(base[i] - multiplied[i]) < 0.02 * n);
    }
}

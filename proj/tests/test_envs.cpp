#include <doctest.h>

#include <cmath>
#include <map>

#include "qbex/cartpole.hpp"
#include "qbex/frozen_lake.hpp"

using namespace qbex;

namespace {

std::map<Index, double> row_map(const TabularMdp& mdp, Index x, Index u) {
    std::map<Index, double> out;
    const SparseRow& row = mdp.row(x, u);
    for (std::size_t i = 0; i < row.size(); ++i) out[row.idx[i]] += row.prob[i];
    return out;
}

CartpoleSpec tiny_cartpole() {
    CartpoleSpec spec;
    spec.bins = {3, 3, 4, 4};
    spec.samples_per_cell = 96;
    return spec;
}

} // namespace

TEST_CASE("frozen lake dynamics") {
    const FrozenLakeSpec spec;
    const TabularMdp mdp = frozen_lake_mdp(spec);
    REQUIRE(mdp.n_states() == 16);
    REQUIRE(mdp.n_actions() == 4);

    SUBCASE("interior cell spreads over the intended and perpendicular moves") {
        // Cell 9 (row 2, col 1), action right: right/up/down each 1/3.
        const auto row = row_map(mdp, 9, 2);
        REQUIRE(row.size() == 3);
        CHECK(row.at(10) == doctest::Approx(1.0 / 3.0));
        CHECK(row.at(5) == doctest::Approx(1.0 / 3.0));
        CHECK(row.at(13) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("corner cell folds blocked moves back onto itself") {
        // Cell 0, action left: left and up are blocked, down moves.
        const auto row = row_map(mdp, 0, 0);
        REQUIRE(row.size() == 2);
        CHECK(row.at(0) == doctest::Approx(2.0 / 3.0));
        CHECK(row.at(4) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("holes and the goal absorb") {
        for (const Index x : {5, 7, 11, 12, 15}) {
            CHECK(mdp.is_terminal(x));
            const auto row = row_map(mdp, x, 1);
            REQUIRE(row.size() == 1);
            CHECK(row.at(x) == doctest::Approx(1.0));
            CHECK(mdp.reward(x, 1) == 0.0);
        }
    }
    SUBCASE("rewards equal the chance of stepping into the goal") {
        CHECK(mdp.reward(14, 2) == doctest::Approx(1.0 / 3.0));
        CHECK(mdp.reward(14, 1) == doctest::Approx(1.0 / 3.0));
        CHECK(mdp.reward(1, 2) == 0.0); // far from the goal
    }
    SUBCASE("non-slippery dynamics are deterministic") {
        FrozenLakeSpec plain = spec;
        plain.slippery = false;
        const TabularMdp det = frozen_lake_mdp(plain);
        const auto row = row_map(det, 9, 2);
        REQUIRE(row.size() == 1);
        CHECK(row.at(10) == doctest::Approx(1.0));
        CHECK(det.reward(14, 2) == doctest::Approx(1.0));
    }
    SUBCASE("the 8x8 map builds") {
        FrozenLakeSpec big;
        big.grid = frozen_lake_map("8x8");
        const TabularMdp mdp8 = frozen_lake_mdp(big);
        CHECK(mdp8.n_states() == 64);
        CHECK(mdp8.is_terminal(63));
    }
    SUBCASE("grid validation") {
        CHECK_THROWS_AS(frozen_lake_mdp(FrozenLakeSpec{{"FFFF", "FHFH", "FFFH", "HFFG"}, true, 0.95}),
                        std::invalid_argument);
        CHECK_THROWS_AS(frozen_lake_mdp(FrozenLakeSpec{{"SFS", "FFG"}, true, 0.95}),
                        std::invalid_argument);
        CHECK_THROWS_AS(frozen_lake_mdp(FrozenLakeSpec{{"SFF", "FG"}, true, 0.95}),
                        std::invalid_argument);
        CHECK_THROWS_AS(frozen_lake_map("5x5"), std::invalid_argument);
    }
}

TEST_CASE("frozen lake model set") {
    const FrozenLakeSpec spec;
    const TabularMdp mdp = frozen_lake_mdp(spec);
    const IntervalModelSet model = frozen_lake_model_set(spec);

    SUBCASE("the true model is a member") { CHECK(model.contains(mdp)); }
    SUBCASE("exactly the adjacency-allowed successors carry positive upper bounds") {
        for (Index x = 0; x < 16; ++x) {
            for (Index u = 0; u < 4; ++u) {
                const IntervalRow& brow = model.row(x, u);
                const auto truth = row_map(mdp, x, u);
                REQUIRE(brow.size() == truth.size());
                for (std::size_t i = 0; i < brow.size(); ++i) {
                    CHECK(truth.count(brow.idx[i]) == 1);
                    if (mdp.is_terminal(x)) {
                        CHECK(brow.lo[i] == 1.0);
                    } else {
                        CHECK(brow.lo[i] == 0.0);
                        CHECK(brow.hi[i] == 1.0);
                    }
                }
            }
        }
    }
    SUBCASE("the reward set is the singleton truth") {
        for (Index x = 0; x < 16; ++x) {
            for (Index u = 0; u < 4; ++u) {
                CHECK(model.reward_lo(x, u) == mdp.reward(x, u));
                CHECK(model.reward_hi(x, u) == mdp.reward(x, u));
            }
        }
    }
    SUBCASE("environment wiring") {
        const Environment env = make_frozen_lake_environment(spec);
        CHECK(env.start.idx == std::vector<Index>{0});
        CHECK(env.success_state[15] == 1);
        CHECK(env.success_state[5] == 0);
        CHECK_FALSE(env.success_is_survival);
    }
}

TEST_CASE("cartpole discretization") {
    const CartpoleSpec spec;
    const DiscretizationMap map(spec);
    REQUIRE(map.n_cells() == 6 * 6 * 12 * 12);
    REQUIRE(map.n_states() == map.n_cells() + 1);

    SUBCASE("multi-index round trip") {
        for (const Index cell : {0, 17, 104, 863, 5183}) {
            CHECK(map.flat_index(map.multi_index(cell)) == cell);
            CHECK(map.cell_of(map.cell_center(cell)) == cell);
        }
    }
    SUBCASE("position or angle leaving the range means falling") {
        CHECK(map.cell_of({2.5, 0.0, 0.0, 0.0}) == map.fallen_state());
        CHECK(map.cell_of({0.0, 0.0, -0.22, 0.0}) == map.fallen_state());
    }
    SUBCASE("velocities clamp into the edge bins") {
        const Index cell = map.cell_of({0.1, 99.0, 0.0, -99.0});
        const auto mi = map.multi_index(cell);
        CHECK(mi[1] == 5);
        CHECK(mi[3] == 0);
    }
}

TEST_CASE("cartpole physics step") {
    const CartpoleSpec spec;
    // Upright at rest, push right: with F=10, m_c=1, m_p=0.1, l=0.5 the
    // accelerations are exactly 400/41 (cart) and -600/41 (pole).
    const auto next = cartpole_step(spec, 0.1, {0.0, 0.0, 0.0, 0.0}, 1);
    CHECK(next[0] == doctest::Approx(0.0));
    CHECK(next[1] == doctest::Approx(spec.dt * 400.0 / 41.0).epsilon(1e-12));
    CHECK(next[2] == doctest::Approx(0.0));
    CHECK(next[3] == doctest::Approx(spec.dt * -600.0 / 41.0).epsilon(1e-12));
}

TEST_CASE("cartpole tensor") {
    const CartpoleSpec spec = tiny_cartpole();
    const TabularMdp tensor = cartpole_tensor(spec, spec.pole_mass);

    SUBCASE("rows normalize and the fallen state absorbs") {
        for (Index x = 0; x < tensor.n_states(); ++x) {
            for (Index u = 0; u < 2; ++u) {
                double sum = 0.0;
                for (const double p : tensor.row(x, u).prob) sum += p;
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
        const DiscretizationMap map(spec);
        CHECK(tensor.is_terminal(map.fallen_state()));
        CHECK(tensor.reward(map.fallen_state(), 0) == 0.0);
    }
    SUBCASE("an extreme outward-tilting cell always falls") {
        // Wide angular-velocity range: the top bin starts at 12 rad/s, so one
        // step from the top angle bin always exits the angle range.
        CartpoleSpec fast = spec;
        fast.ranges[3] = 24.0;
        const TabularMdp fast_tensor = cartpole_tensor(fast, fast.pole_mass);
        const DiscretizationMap map(fast);
        const Index cell = map.flat_index({1, 1, fast.bins[2] - 1, fast.bins[3] - 1});
        for (Index u = 0; u < 2; ++u) {
            const auto row = row_map(fast_tensor, cell, u);
            REQUIRE(row.size() == 1);
            CHECK(row.count(map.fallen_state()) == 1);
        }
    }
    SUBCASE("shaped rewards peak at the center and dip at the edges") {
        const DiscretizationMap map(spec);
        const Index center = map.cell_of({0.01, 0.01, 0.001, 0.01});
        const Index edge = map.flat_index({0, 1, 0, 1});
        CHECK(tensor.reward(center, 0) > tensor.reward(edge, 0));
        CHECK(tensor.reward(center, 0) <= 1.0);
    }
    SUBCASE("generation is deterministic in the seed") {
        const TabularMdp again = cartpole_tensor(spec, spec.pole_mass);
        for (const Index x : {0, 7, 50}) {
            CHECK(tensor.row(x, 0).idx == again.row(x, 0).idx);
            CHECK(tensor.row(x, 0).prob == again.row(x, 0).prob);
        }
    }
    SUBCASE("doubling the sample count moves entries less than the noise bound") {
        CartpoleSpec more = spec;
        more.samples_per_cell = 192;
        const TabularMdp fine = cartpole_tensor(more, spec.pole_mass);
        double worst = 0.0;
        for (Index x = 0; x < tensor.n_states(); ++x) {
            const auto a = row_map(tensor, x, 0);
            const auto b = row_map(fine, x, 0);
            for (const auto& [next, p] : a) {
                const auto it = b.find(next);
                worst = std::max(worst, std::fabs(p - (it == b.end() ? 0.0 : it->second)));
            }
        }
        CHECK(worst < 2.0 / std::sqrt(static_cast<double>(spec.samples_per_cell)));
    }
}

TEST_CASE("cartpole model set") {
    CartpoleSpec spec = tiny_cartpole();

    SUBCASE("a singleton sweep pins the box to the true tensor") {
        spec.mass_sweep = {spec.pole_mass};
        const IntervalModelSet model = cartpole_model_set(spec);
        const TabularMdp truth = cartpole_tensor(spec, spec.pole_mass);
        for (const Index x : {0, 11, 60}) {
            const IntervalRow& row = model.row(x, 1);
            const SparseRow& trow = truth.row(x, 1);
            REQUIRE(row.size() == trow.size());
            for (std::size_t i = 0; i < row.size(); ++i) {
                CHECK(row.lo[i] == trow.prob[i]);
                CHECK(row.hi[i] == trow.prob[i]);
            }
        }
    }
    SUBCASE("the default sweep covers the true tensor elementwise") {
        const IntervalModelSet model = cartpole_model_set(spec);
        const TabularMdp truth = cartpole_tensor(spec, spec.pole_mass);
        CHECK(model.contains(truth));
    }
    SUBCASE("the default sweep includes the true mass") {
        const std::vector<double> sweep = default_mass_sweep(spec);
        CHECK(std::any_of(sweep.begin(), sweep.end(),
                          [&](double m) { return std::fabs(m - spec.pole_mass) < 1e-12; }));
    }
    SUBCASE("a sweep that cannot cover the true mass is rejected") {
        spec.mass_sweep = {0.15, 0.2};
        CHECK_THROWS_AS(cartpole_model_set(spec), std::invalid_argument);
    }
}

TEST_CASE("cartpole environment") {
    const CartpoleSpec spec = tiny_cartpole();
    const Environment env = make_cartpole_environment(spec);

    SUBCASE("start distribution is a probability over central cells") {
        double sum = 0.0;
        for (const double p : env.start.prob) sum += p;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        const DiscretizationMap map(spec);
        for (const Index cell : env.start.idx) {
            const auto center = map.cell_center(cell);
            CHECK(std::fabs(center[0]) < 1.0);
            CHECK(std::fabs(center[2]) < 0.2);
        }
    }
    SUBCASE("evaluation pays one per surviving step") {
        const DiscretizationMap map(spec);
        CHECK(env.eval_reward(0, 0) == 1.0);
        CHECK(env.eval_reward(map.fallen_state(), 1) == 0.0);
        CHECK(env.success_is_survival);
    }
}

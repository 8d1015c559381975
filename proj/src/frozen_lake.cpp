#include "qbex/frozen_lake.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace qbex {

namespace {

// Gym action order: left, down, right, up.
constexpr std::array<int, 4> kDRow = {0, 1, 0, -1};
constexpr std::array<int, 4> kDCol = {-1, 0, 1, 0};

struct Layout {
    int rows = 0;
    int cols = 0;
    Index start = -1;
    std::vector<std::uint8_t> hole;
    std::vector<std::uint8_t> goal;
};

Layout parse_grid(const std::vector<std::string>& grid) {
    Layout lay;
    lay.rows = static_cast<int>(grid.size());
    if (lay.rows == 0) throw std::invalid_argument("frozen lake: empty grid");
    lay.cols = static_cast<int>(grid[0].size());
    if (lay.cols == 0) throw std::invalid_argument("frozen lake: empty grid row");

    lay.hole.assign(static_cast<std::size_t>(lay.rows) * lay.cols, 0);
    lay.goal.assign(static_cast<std::size_t>(lay.rows) * lay.cols, 0);
    int starts = 0;
    int goals = 0;
    for (int r = 0; r < lay.rows; ++r) {
        if (static_cast<int>(grid[r].size()) != lay.cols)
            throw std::invalid_argument("frozen lake: grid is not rectangular");
        for (int c = 0; c < lay.cols; ++c) {
            const Index cell = static_cast<Index>(r * lay.cols + c);
            switch (grid[r][c]) {
            case 'S':
                lay.start = cell;
                ++starts;
                break;
            case 'F': break;
            case 'H': lay.hole[cell] = 1; break;
            case 'G':
                lay.goal[cell] = 1;
                ++goals;
                break;
            default: throw std::invalid_argument("frozen lake: unknown cell type");
            }
        }
    }
    if (starts != 1) throw std::invalid_argument("frozen lake: need exactly one start cell");
    if (goals < 1) throw std::invalid_argument("frozen lake: need at least one goal cell");
    return lay;
}

Index move_from(const Layout& lay, Index cell, int dir) {
    const int r = cell / lay.cols + kDRow[dir];
    const int c = cell % lay.cols + kDCol[dir];
    if (r < 0 || r >= lay.rows || c < 0 || c >= lay.cols) return cell; // blocked by the wall
    return static_cast<Index>(r * lay.cols + c);
}

} // namespace

std::vector<std::string> frozen_lake_map(const std::string& name) {
    if (name == "4x4") return {"SFFF", "FHFH", "FFFH", "HFFG"};
    if (name == "8x8")
        return {"SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF",
                "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG"};
    throw std::invalid_argument("frozen_lake_map: unknown map '" + name + "'");
}

TabularMdp frozen_lake_mdp(const FrozenLakeSpec& spec) {
    const Layout lay = parse_grid(spec.grid);
    const Index n = static_cast<Index>(lay.rows * lay.cols);
    const Index m = 4;

    std::vector<SparseRow> rows(static_cast<std::size_t>(n) * m);
    std::vector<double> rewards(static_cast<std::size_t>(n) * m, 0.0);
    std::vector<Index> terminal;

    std::vector<double> dense(static_cast<std::size_t>(n));
    for (Index cell = 0; cell < n; ++cell) {
        const bool absorbing = lay.hole[cell] != 0 || lay.goal[cell] != 0;
        if (absorbing) terminal.push_back(cell);
        for (Index u = 0; u < m; ++u) {
            SparseRow& row = rows[static_cast<std::size_t>(cell) * m + u];
            if (absorbing) {
                row.idx.push_back(cell);
                row.prob.push_back(1.0);
                continue;
            }
            std::fill(dense.begin(), dense.end(), 0.0);
            double reward = 0.0;
            if (spec.slippery) {
                // Intended direction plus the two perpendicular ones.
                for (const int dir : {(u + 3) % 4, static_cast<int>(u), (u + 1) % 4}) {
                    const Index target = move_from(lay, cell, dir);
                    dense[target] += 1.0 / 3.0;
                    if (lay.goal[target] != 0) reward += 1.0 / 3.0;
                }
            } else {
                const Index target = move_from(lay, cell, u);
                dense[target] = 1.0;
                if (lay.goal[target] != 0) reward = 1.0;
            }
            for (Index next = 0; next < n; ++next) {
                if (dense[next] > 0.0) {
                    row.idx.push_back(next);
                    row.prob.push_back(dense[next]);
                }
            }
            rewards[static_cast<std::size_t>(cell) * m + u] = reward;
        }
    }
    return TabularMdp(n, m, spec.discount, std::move(rows), std::move(rewards),
                      std::move(terminal));
}

IntervalModelSet frozen_lake_model_set(const FrozenLakeSpec& spec) {
    const TabularMdp mdp = frozen_lake_mdp(spec);
    const Index n = mdp.n_states();
    const Index m = mdp.n_actions();

    std::vector<IntervalRow> rows(static_cast<std::size_t>(n) * m);
    std::vector<double> reward_lo(static_cast<std::size_t>(n) * m);
    std::vector<double> reward_hi(static_cast<std::size_t>(n) * m);
    for (Index x = 0; x < n; ++x) {
        for (Index u = 0; u < m; ++u) {
            const std::size_t flat = static_cast<std::size_t>(x) * m + u;
            const SparseRow& truth = mdp.row(x, u);
            IntervalRow& row = rows[flat];
            row.idx = truth.idx;
            if (mdp.is_terminal(x)) {
                // Adjacency knowledge pins terminal rows exactly.
                row.lo.assign(truth.size(), 1.0);
                row.hi.assign(truth.size(), 1.0);
            } else {
                row.lo.assign(truth.size(), 0.0);
                row.hi.assign(truth.size(), 1.0);
            }
            reward_lo[flat] = reward_hi[flat] = mdp.reward(x, u);
        }
    }
    return IntervalModelSet(n, m, spec.discount, std::move(rows), std::move(reward_lo),
                            std::move(reward_hi), mdp.terminal_states());
}

Environment make_frozen_lake_environment(const FrozenLakeSpec& spec) {
    const Layout lay = parse_grid(spec.grid);
    Environment env{frozen_lake_mdp(spec), {}, {}, {}, false, "frozen_lake"};
    env.eval_rewards.assign(env.mdp.rewards().begin(), env.mdp.rewards().end());
    env.start.idx.push_back(lay.start);
    env.start.prob.push_back(1.0);
    env.success_state.assign(static_cast<std::size_t>(env.mdp.n_states()), 0);
    for (Index x = 0; x < env.mdp.n_states(); ++x) env.success_state[x] = lay.goal[x];
    return env;
}

} // namespace qbex

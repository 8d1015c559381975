#include "qbex/cartpole.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace qbex {

DiscretizationMap::DiscretizationMap(const CartpoleSpec& spec)
    : bins_(spec.bins), range_(spec.ranges) {
    std::int64_t cells = 1;
    for (int d = 0; d < 4; ++d) {
        if (bins_[d] < 2) throw std::invalid_argument("cartpole: need at least 2 bins per dim");
        if (!(range_[d] > 0.0)) throw std::invalid_argument("cartpole: ranges must be positive");
        width_[d] = 2.0 * range_[d] / bins_[d];
        cells *= bins_[d];
    }
    n_cells_ = static_cast<Index>(cells);
}

Index DiscretizationMap::cell_of(const std::array<double, 4>& s) const {
    // Dimensions 0 (position) and 2 (angle) are failure-bounded.
    if (s[0] < -range_[0] || s[0] > range_[0] || s[2] < -range_[2] || s[2] > range_[2])
        return fallen_state();
    std::array<int, 4> mi;
    for (int d = 0; d < 4; ++d) {
        double v = s[d];
        if (d == 1 || d == 3) v = std::clamp(v, -range_[d], range_[d]);
        int b = static_cast<int>(std::floor((v + range_[d]) / width_[d]));
        mi[d] = std::clamp(b, 0, bins_[d] - 1);
    }
    return flat_index(mi);
}

std::array<int, 4> DiscretizationMap::multi_index(Index cell) const {
    std::array<int, 4> mi;
    for (int d = 3; d >= 0; --d) {
        mi[d] = static_cast<int>(cell % bins_[d]);
        cell /= bins_[d];
    }
    return mi;
}

Index DiscretizationMap::flat_index(const std::array<int, 4>& mi) const {
    Index flat = 0;
    for (int d = 0; d < 4; ++d) flat = flat * bins_[d] + mi[d];
    return flat;
}

std::array<double, 4> DiscretizationMap::cell_lower(Index cell) const {
    const auto mi = multi_index(cell);
    std::array<double, 4> out;
    for (int d = 0; d < 4; ++d) out[d] = -range_[d] + mi[d] * width_[d];
    return out;
}

std::array<double, 4> DiscretizationMap::cell_upper(Index cell) const {
    const auto mi = multi_index(cell);
    std::array<double, 4> out;
    for (int d = 0; d < 4; ++d) out[d] = -range_[d] + (mi[d] + 1) * width_[d];
    return out;
}

std::array<double, 4> DiscretizationMap::cell_center(Index cell) const {
    const auto mi = multi_index(cell);
    std::array<double, 4> out;
    for (int d = 0; d < 4; ++d) out[d] = -range_[d] + (mi[d] + 0.5) * width_[d];
    return out;
}

std::array<double, 4> cartpole_step(const CartpoleSpec& spec, double pole_mass,
                                    const std::array<double, 4>& s, int action) {
    const double force = action == 1 ? spec.force : -spec.force;
    const double total_mass = spec.cart_mass + pole_mass;
    const double pml = pole_mass * spec.pole_half_length;

    const double cos_th = std::cos(s[2]);
    const double sin_th = std::sin(s[2]);
    const double temp = (force + pml * s[3] * s[3] * sin_th) / total_mass;
    const double theta_acc = (spec.gravity * sin_th - cos_th * temp) /
                             (spec.pole_half_length *
                              (4.0 / 3.0 - pole_mass * cos_th * cos_th / total_mass));
    const double x_acc = temp - pml * theta_acc * cos_th / total_mass;

    return {s[0] + spec.dt * s[1], s[1] + spec.dt * x_acc, s[2] + spec.dt * s[3],
            s[3] + spec.dt * theta_acc};
}

namespace {

double shaped_reward(const CartpoleSpec& spec, const std::array<double, 4>& center) {
    const double th = center[2] / spec.ranges[2];
    const double x = center[0] / spec.ranges[0];
    return 1.0 - spec.shaping_angle * th * th - spec.shaping_position * x * x;
}

} // namespace

TabularMdp cartpole_tensor(const CartpoleSpec& spec, double pole_mass) {
    if (spec.samples_per_cell < 1)
        throw std::invalid_argument("cartpole: samples_per_cell must be positive");
    const DiscretizationMap map(spec);
    const Index n = map.n_states();
    const Index m = 2;
    const Index fallen = map.fallen_state();
    const std::uint64_t mass_bits = std::bit_cast<std::uint64_t>(pole_mass);

    std::vector<SparseRow> rows(static_cast<std::size_t>(n) * m);
    std::vector<double> rewards(static_cast<std::size_t>(n) * m, 0.0);

    std::vector<Index> outcomes(static_cast<std::size_t>(spec.samples_per_cell));
    for (Index cell = 0; cell < map.n_cells(); ++cell) {
        const auto lo = map.cell_lower(cell);
        const auto hi = map.cell_upper(cell);
        const double reward = shaped_reward(spec, map.cell_center(cell));
        for (Index u = 0; u < m; ++u) {
            Rng rng(derive_seed(spec.tensor_seed, static_cast<std::uint64_t>(cell),
                                static_cast<std::uint64_t>(u), mass_bits));
            for (int k = 0; k < spec.samples_per_cell; ++k) {
                const std::array<double, 4> s{rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]),
                                              rng.uniform(lo[2], hi[2]),
                                              rng.uniform(lo[3], hi[3])};
                outcomes[static_cast<std::size_t>(k)] = map.cell_of(cartpole_step(spec, pole_mass, s, u));
            }
            std::sort(outcomes.begin(), outcomes.end());

            SparseRow& row = rows[static_cast<std::size_t>(cell) * m + u];
            const double inv = 1.0 / spec.samples_per_cell;
            for (std::size_t i = 0; i < outcomes.size();) {
                std::size_t j = i;
                while (j < outcomes.size() && outcomes[j] == outcomes[i]) ++j;
                row.idx.push_back(outcomes[i]);
                row.prob.push_back(static_cast<double>(j - i) * inv);
                i = j;
            }
            rewards[static_cast<std::size_t>(cell) * m + u] = reward;
        }
    }
    for (Index u = 0; u < m; ++u) {
        SparseRow& row = rows[static_cast<std::size_t>(fallen) * m + u];
        row.idx.push_back(fallen);
        row.prob.push_back(1.0);
    }
    return TabularMdp(n, m, spec.discount, std::move(rows), std::move(rewards), {fallen});
}

std::vector<double> default_mass_sweep(const CartpoleSpec& spec) {
    std::vector<double> sweep;
    constexpr int count = 8;
    constexpr double lo = 0.05;
    constexpr double hi = 0.2;
    for (int i = 0; i < count; ++i)
        sweep.push_back(lo + (hi - lo) * static_cast<double>(i) / (count - 1));
    const bool has_true = std::any_of(sweep.begin(), sweep.end(), [&](double v) {
        return std::fabs(v - spec.pole_mass) < 1e-12;
    });
    if (!has_true) {
        sweep.push_back(spec.pole_mass);
        std::sort(sweep.begin(), sweep.end());
    }
    return sweep;
}

IntervalModelSet cartpole_model_set(const CartpoleSpec& spec) {
    std::vector<double> sweep = spec.mass_sweep.empty() ? default_mass_sweep(spec)
                                                        : spec.mass_sweep;
    if (sweep.empty()) throw std::invalid_argument("cartpole: empty mass sweep");
    const double lo_mass = *std::min_element(sweep.begin(), sweep.end());
    const double hi_mass = *std::max_element(sweep.begin(), sweep.end());
    if (spec.pole_mass < lo_mass - 1e-12 || spec.pole_mass > hi_mass + 1e-12)
        throw std::invalid_argument("cartpole: true pole mass outside the mass sweep range");

    std::vector<TabularMdp> tensors;
    tensors.reserve(sweep.size());
    for (double mass : sweep) tensors.push_back(cartpole_tensor(spec, mass));

    const Index n = tensors.front().n_states();
    const Index m = tensors.front().n_actions();
    std::vector<IntervalRow> rows(static_cast<std::size_t>(n) * m);
    std::vector<double> reward_lo(static_cast<std::size_t>(n) * m);
    std::vector<double> reward_hi(static_cast<std::size_t>(n) * m);

    std::vector<double> min_p(static_cast<std::size_t>(n), 1.0);
    std::vector<double> max_p(static_cast<std::size_t>(n), 0.0);
    std::vector<int> hits(static_cast<std::size_t>(n), 0);
    std::vector<Index> touched;
    const int n_tensors = static_cast<int>(tensors.size());
    for (Index x = 0; x < n; ++x) {
        for (Index u = 0; u < m; ++u) {
            const std::size_t flat = static_cast<std::size_t>(x) * m + u;
            touched.clear();
            for (const TabularMdp& tensor : tensors) {
                const SparseRow& trow = tensor.row(x, u);
                for (std::size_t i = 0; i < trow.size(); ++i) {
                    const Index next = trow.idx[i];
                    if (hits[next] == 0) touched.push_back(next);
                    ++hits[next];
                    min_p[next] = std::min(min_p[next], trow.prob[i]);
                    max_p[next] = std::max(max_p[next], trow.prob[i]);
                }
            }
            std::sort(touched.begin(), touched.end());
            IntervalRow& row = rows[flat];
            for (const Index next : touched) {
                row.idx.push_back(next);
                // A successor missing from some tensor has probability zero there.
                row.lo.push_back(hits[next] == n_tensors ? min_p[next] : 0.0);
                row.hi.push_back(max_p[next]);
                min_p[next] = 1.0;
                max_p[next] = 0.0;
                hits[next] = 0;
            }
            reward_lo[flat] = reward_hi[flat] = tensors.front().reward(x, u);
        }
    }
    return IntervalModelSet(n, m, spec.discount, std::move(rows), std::move(reward_lo),
                            std::move(reward_hi), tensors.front().terminal_states());
}

Environment make_cartpole_environment(const CartpoleSpec& spec) {
    Environment env{cartpole_tensor(spec, spec.pole_mass), {}, {}, {}, true, "cartpole"};
    const Index n = env.mdp.n_states();
    const Index m = env.mdp.n_actions();
    const DiscretizationMap map(spec);

    env.eval_rewards.assign(static_cast<std::size_t>(n) * m, 1.0);
    for (Index u = 0; u < m; ++u)
        env.eval_rewards[static_cast<std::size_t>(map.fallen_state()) * m + u] = 0.0;

    // Start distribution: exact overlap of the uniform [-r, r]^4 box with the
    // grid cells, as a product over dimensions.
    std::array<std::vector<std::pair<int, double>>, 4> dim_bins;
    for (int d = 0; d < 4; ++d) {
        const double r = spec.start_range;
        const double width = map.bin_width(d);
        for (int b = 0; b < spec.bins[d]; ++b) {
            const double lo = -spec.ranges[d] + b * width;
            const double hi = lo + width;
            const double overlap = std::min(hi, r) - std::max(lo, -r);
            if (overlap > 0.0) dim_bins[d].emplace_back(b, overlap / (2.0 * r));
        }
    }
    for (const auto& [b0, w0] : dim_bins[0]) {
        for (const auto& [b1, w1] : dim_bins[1]) {
            for (const auto& [b2, w2] : dim_bins[2]) {
                for (const auto& [b3, w3] : dim_bins[3]) {
                    env.start.idx.push_back(map.flat_index({b0, b1, b2, b3}));
                    env.start.prob.push_back(w0 * w1 * w2 * w3);
                }
            }
        }
    }

    env.success_state.assign(static_cast<std::size_t>(n), 0);
    return env;
}

} // namespace qbex

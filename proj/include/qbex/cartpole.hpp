#pragma once

#include <array>

#include "qbex/environment.hpp"
#include "qbex/interval_model.hpp"

namespace qbex {

/// Discretized cartpole with an uncertain pole mass. State dimensions are
/// (cart position, cart velocity, pole angle, pole angular velocity); the two
/// actions push the cart with force -F / +F. Position or angle beyond its
/// range ends the episode in a single terminal "fallen" state.
struct CartpoleSpec {
    double gravity = 9.8;
    double cart_mass = 1.0;
    double pole_half_length = 0.5;
    double force = 10.0;
    // With the default 6x6x12x12 grid, a 10 ms step keeps the cell-level
    // abstraction controllable; at the classic 20 ms even the exact tabular
    // policy cannot hold the pole reliably.
    double dt = 0.01;
    double pole_mass = 0.1;                          // true value
    std::vector<double> mass_sweep = {};             // empty -> default_mass_sweep()
    std::array<int, 4> bins = {6, 6, 12, 12};
    std::array<double, 4> ranges = {2.4, 3.0, 0.21, 3.5}; // symmetric +-range per dimension
    int samples_per_cell = 256;
    double shaping_angle = 0.5;    // training reward 1 - w_th (th/th_max)^2 - w_x (x/x_max)^2
    double shaping_position = 0.5;
    double start_range = 0.05;     // start uniform in [-r, r]^4
    double discount = 0.97;
    std::uint64_t tensor_seed = 90210; // stream for the cell-sampling estimator
};

/// Bin edges and cell indexing for the four state dimensions. Velocity
/// dimensions clamp out-of-range values into the edge bins; position and
/// angle beyond their ranges mean the pole has fallen.
class DiscretizationMap {
  public:
    explicit DiscretizationMap(const CartpoleSpec& spec);

    Index n_cells() const { return n_cells_; }
    Index n_states() const { return n_cells_ + 1; }
    Index fallen_state() const { return n_cells_; }

    /// Flat cell index, or fallen_state() when position/angle left the range.
    Index cell_of(const std::array<double, 4>& s) const;

    std::array<int, 4> multi_index(Index cell) const;
    Index flat_index(const std::array<int, 4>& mi) const;

    std::array<double, 4> cell_lower(Index cell) const;
    std::array<double, 4> cell_upper(Index cell) const;
    std::array<double, 4> cell_center(Index cell) const;

    double bin_width(int dim) const { return width_[dim]; }

  private:
    std::array<int, 4> bins_;
    std::array<double, 4> range_;
    std::array<double, 4> width_;
    Index n_cells_;
};

/// One Euler step of the cart-pole dynamics.
std::array<double, 4> cartpole_step(const CartpoleSpec& spec, double pole_mass,
                                    const std::array<double, 4>& s, int action);

/// Monte-Carlo cell-transition tensor for a given pole mass: per (cell,
/// action), samples_per_cell states drawn uniformly within the cell are
/// integrated one step and binned. Rewards are the shaped value at the cell
/// center; the fallen state is absorbing with zero reward. Deterministic in
/// (spec.tensor_seed, cell, action, mass).
TabularMdp cartpole_tensor(const CartpoleSpec& spec, double pole_mass);

/// Eight evenly spaced masses over [0.05, 0.2], plus the true mass when the
/// grid misses it (the model set must contain the true tensor).
std::vector<double> default_mass_sweep(const CartpoleSpec& spec);

/// Elementwise min/max envelope of the tensors across the mass sweep;
/// rewards are the singleton shaped reward.
IntervalModelSet cartpole_model_set(const CartpoleSpec& spec);

/// Environment view: true-mass tensor with shaped training rewards, +1 per
/// step evaluation rewards, start cells induced by the uniform
/// [-start_range, start_range]^4 initial distribution, success = surviving
/// to the step cap.
Environment make_cartpole_environment(const CartpoleSpec& spec);

} // namespace qbex

#pragma once

#include "qbex/environment.hpp"
#include "qbex/interval_model.hpp"

namespace qbex {

/// Gridworld map: 'S' start, 'F' frozen, 'H' hole, 'G' goal. With slippery
/// ice, the intended move and the two perpendicular moves each happen with
/// probability 1/3; moves off the grid keep the agent in place.
struct FrozenLakeSpec {
    std::vector<std::string> grid = {"SFFF", "FHFH", "FFFH", "HFFG"};
    bool slippery = true;
    double discount = 0.95;
};

/// The standard "4x4" or "8x8" layout.
std::vector<std::string> frozen_lake_map(const std::string& name);

/// Actions are 0 left, 1 down, 2 right, 3 up. Holes and goals are absorbing
/// with zero reward; the reward of a pair is the probability of stepping
/// into a goal from it.
TabularMdp frozen_lake_mdp(const FrozenLakeSpec& spec);

/// Adjacency-knowledge model set: the upper transition bound is 1 exactly
/// where the true dynamics can move (0 elsewhere), all lower bounds are 0,
/// and the reward interval is the singleton true reward.
IntervalModelSet frozen_lake_model_set(const FrozenLakeSpec& spec);

/// Environment view: fixed start at 'S', evaluation rewards equal the
/// training rewards, success = absorbing into a goal cell.
Environment make_frozen_lake_environment(const FrozenLakeSpec& spec);

} // namespace qbex

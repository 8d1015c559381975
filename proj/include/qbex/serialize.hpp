#pragma once

#include <string>

#include <json.hpp>

#include "qbex/learner.hpp"

namespace qbex {

// JSON formats for the file interfaces. Transition tensors are written as
// dense nested arrays for small models and as sparse per-row [successor,
// value] pair lists above `dense_limit` states; loaders accept either form.

nlohmann::json mdp_to_json(const TabularMdp& mdp, Index dense_limit = 512);
TabularMdp mdp_from_json(const nlohmann::json& j);

nlohmann::json model_set_to_json(const IntervalModelSet& model, Index dense_limit = 512);
IntervalModelSet model_set_from_json(const nlohmann::json& j);

/// Counts plus observed rewards share one document (they are gathered
/// together and restored together).
nlohmann::json counts_to_json(const TransitionCounts& counts, const ObservedRewards& rewards);
std::pair<TransitionCounts, ObservedRewards> counts_from_json(const nlohmann::json& j);

/// Learner checkpoint: Q table, bounds, counts, observed rewards, episode
/// index, and the exact RNG stream position.
nlohmann::json learner_state_to_json(const LearnerState& state);
LearnerState learner_state_from_json(const nlohmann::json& j);

/// Reads a JSON document; throws std::runtime_error with the path on failure.
nlohmann::json load_json_file(const std::string& path);

/// Serializes to `path` atomically (write to temp file, then rename).
void save_json_file(const nlohmann::json& j, const std::string& path, int indent = -1);

/// Atomic replacement text write; used for every emitted artifact.
void write_file_atomic(const std::string& path, const std::string& contents);

} // namespace qbex

#pragma once

#include <filesystem>
#include <vector>

#include "ave/agent/sac.hpp"
#include "ave/train/trainer.hpp"

namespace ave::eval {

/// Means of every state component over the states the deterministic policy
/// visits on a dataset.
agent::ComponentMeans collect_component_means(const train::Model& model, const agent::SacAgent& agent,
                                              const env::Dataset& data, const env::CameraConfig& camera, int max_steps,
                                              std::uint64_t seed);

struct AblationRow {
    agent::Ablation ablation;
    train::EvalMetrics metrics;
};

/// Full state, then each component replaced by its mean on its own.
std::vector<AblationRow> state_ablation(const train::Model& model, const agent::SacAgent& agent,
                                        const env::Dataset& data, const env::CameraConfig& camera, int max_steps,
                                        std::uint64_t seed);

/// One row per configuration: 1 where the component is kept, 0 where it is
/// replaced, then the task metric.
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

} // namespace ave::eval

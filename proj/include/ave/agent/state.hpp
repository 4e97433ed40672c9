#pragma once

#include <memory>
#include <span>
#include <vector>

#include "ave/backbone/encoder.hpp"

namespace ave::agent {

/// Aligned per-patch sequences observed so far. Values are plain tensors, so
/// nothing here can carry gradients back into the backbone.
struct AgentState {
    Tensor patches;     // [n, d_patch*d_patch*C]
    Tensor coords;      // [n, 3]
    Tensor importances; // [n, 1]
    Tensor latents;     // [n, E]

    std::size_t size() const { return coords.rows(); }
    /// Throws std::invalid_argument if the four sequences disagree in length.
    void validate() const;
    static AgentState empty(std::size_t patch_dim, std::size_t latent_dim);
};

using StatePtr = std::shared_ptr<const AgentState>;

/// Builds a state from the valid patches of a bundle, their encoder latents
/// and their rollout importances (one per valid patch, in bundle order).
AgentState make_state(const backbone::PatchBundle& bundle, const Tensor& latents, std::span<const double> importances);

/// States padded to a common slot count.
struct StateBatch {
    Tensor patches;
    Tensor coords;
    Tensor importances;
    Tensor latents;
    std::vector<unsigned char> mask;
    std::size_t batch = 0;
    std::size_t slots = 0;
};

StateBatch collate_states(std::span<const AgentState* const> states);

/// State components that can be replaced by their dataset mean.
struct Ablation {
    bool patches = false;
    bool coords = false;
    bool importance = false;
    bool latent = false;

    bool any() const { return patches || coords || importance || latent; }
    static Ablation parse(const std::string& name);
    std::string name() const;
};

/// Per-component means over every patch of a set of states.
struct ComponentMeans {
    Tensor patches;     // [P]
    Tensor coords;      // [3]
    Tensor importances; // [1]
    Tensor latents;     // [E]
    std::size_t count = 0; // patches accumulated

    void accumulate(const AgentState& state);
    void finalize();
};

AgentState apply_ablation(const AgentState& state, const Ablation& ablation, const ComponentMeans& means);

} // namespace ave::agent

#pragma once

#include <span>
#include <string>
#include <vector>

#include "ave/agent/sac.hpp"
#include "ave/env/scene.hpp"

namespace ave::train {

/// Chooses the next glimpse for a batch of episodes.
class GlimpsePolicy {
public:
    virtual ~GlimpsePolicy() = default;
    /// One action per state; t is the 1-based index of the glimpse about to be taken.
    virtual std::vector<env::GlimpseAction> act(std::span<const agent::AgentState* const> states, int t, Rng& rng) = 0;
    virtual std::string name() const = 0;
};

/// The learned agent, optionally with state components replaced by their means.
class SacPolicy : public GlimpsePolicy {
public:
    SacPolicy(const agent::SacAgent& agent, bool deterministic);
    SacPolicy(const agent::SacAgent& agent, bool deterministic, agent::Ablation ablation, agent::ComponentMeans means);

    std::vector<env::GlimpseAction> act(std::span<const agent::AgentState* const> states, int t, Rng& rng) override;
    std::string name() const override;

private:
    const agent::SacAgent* agent_;
    bool deterministic_;
    agent::Ablation ablation_;
    agent::ComponentMeans means_;
};

/// Independent U[0,1]^3 actions.
class RandomPolicy : public GlimpsePolicy {
public:
    std::vector<env::GlimpseAction> act(std::span<const agent::AgentState* const> states, int t, Rng& rng) override;
    std::string name() const override { return "random_uniform"; }
};

} // namespace ave::train

#include "ave/train/policy.hpp"

namespace ave::train {

SacPolicy::SacPolicy(const agent::SacAgent& agent, bool deterministic) : agent_(&agent), deterministic_(deterministic)
{
}

SacPolicy::SacPolicy(const agent::SacAgent& agent, bool deterministic, agent::Ablation ablation,
                     agent::ComponentMeans means)
    : agent_(&agent), deterministic_(deterministic), ablation_(ablation), means_(std::move(means))
{
}

std::vector<env::GlimpseAction> SacPolicy::act(std::span<const agent::AgentState* const> states, int, Rng& rng)
{
    std::vector<agent::AgentState> ablated;
    std::vector<const agent::AgentState*> ptrs(states.begin(), states.end());
    if (ablation_.any()) {
        ablated.reserve(states.size());
        for (const auto* s : states) ablated.push_back(agent::apply_ablation(*s, ablation_, means_));
        for (std::size_t i = 0; i < ablated.size(); ++i) ptrs[i] = &ablated[i];
    }
    const agent::PolicyOutput out = agent_->act(ptrs, deterministic_, rng);
    std::vector<env::GlimpseAction> actions(states.size());
    for (std::size_t i = 0; i < actions.size(); ++i)
        actions[i] = {out.action.at(i, 0), out.action.at(i, 1), out.action.at(i, 2)};
    return actions;
}

std::string SacPolicy::name() const
{
    std::string n = deterministic_ ? "adaptive" : "adaptive_stochastic";
    if (ablation_.any()) n += "-" + ablation_.name();
    return n;
}

std::vector<env::GlimpseAction> RandomPolicy::act(std::span<const agent::AgentState* const> states, int, Rng& rng)
{
    std::vector<env::GlimpseAction> actions(states.size());
    for (auto& a : actions) {
        a.x = uniform01(rng);
        a.y = uniform01(rng);
        a.z = uniform01(rng);
    }
    return actions;
}

} // namespace ave::train

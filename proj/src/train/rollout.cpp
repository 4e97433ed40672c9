#include "ave/train/rollout.hpp"

#include <memory>

namespace ave::train {

agent::AgentState state_from_encoding(const backbone::PatchBundle& bundle, const backbone::EncodedBatch& encoded,
                                      std::size_t index)
{
    const backbone::LatentBundle lat = backbone::unpack(encoded, index);
    const std::vector<double> importance = backbone::attention_rollout(lat.attentions);
    return agent::make_state(bundle, lat.latents, importance);
}

RolloutBatch run_episodes(const Model& model, GlimpsePolicy& policy, std::span<const env::ScenePtr> scenes,
                          const env::CameraConfig& camera, const RolloutOptions& options, Rng& rng)
{
    ag::NoGradGuard guard;
    const std::size_t n = scenes.size();
    const auto patch_dim = static_cast<std::size_t>(model.encoder().config().patch_dim());
    const auto latent_dim = static_cast<std::size_t>(model.encoder().config().width);
    const bool classify = model.task() == heads::TaskKind::classification;
    const std::size_t cells = classify ? 0 : model.head().decoder().grid().cells();

    std::vector<const env::SceneImage*> scene_ptrs;
    for (const auto& s : scenes) scene_ptrs.push_back(s.get());
    const heads::TaskTargets all_targets = model.targets(scene_ptrs);

    RolloutBatch out;
    out.episodes.resize(n);
    std::vector<env::GlimpseEnv> envs(n, env::GlimpseEnv(camera, options.max_steps));
    std::vector<agent::StatePtr> states(n);
    const auto empty_state =
        std::make_shared<const agent::AgentState>(agent::AgentState::empty(patch_dim, latent_dim));
    for (std::size_t i = 0; i < n; ++i) {
        envs[i].reset(scenes[i]);
        out.episodes[i].bundle = backbone::PatchBundle::empty(patch_dim);
        states[i] = empty_state;
        if (options.keep_states) out.episodes[i].states.push_back(empty_state);
    }

    std::vector<std::size_t> active(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = i;

    auto evaluate = [&](const std::vector<std::size_t>& idx) {
        std::vector<const backbone::PatchBundle*> bundles;
        for (std::size_t i : idx) bundles.push_back(&out.episodes[i].bundle);
        Model::Output fwd = model.forward(bundles);
        auto res = model.outcomes(fwd, select_targets(all_targets, idx, cells));
        return std::make_pair(std::move(fwd), std::move(res));
    };

    // L_0 from the CLS token alone
    {
        const auto [fwd, res] = evaluate(active);
        for (std::size_t k = 0; k < n; ++k) {
            envs[k].record().losses.push_back(res[k].loss);
            out.episodes[k].outcome = res[k];
        }
    }

    for (int t = 1; t <= options.max_steps && !active.empty(); ++t) {
        std::vector<const agent::AgentState*> current;
        for (std::size_t i : active) current.push_back(states[i].get());
        const std::vector<env::GlimpseAction> actions = policy.act(current, t, rng);
        for (std::size_t k = 0; k < active.size(); ++k) {
            const std::size_t i = active[k];
            envs[i].step(actions[k]);
            out.episodes[i].bundle.append(
                backbone::split_glimpse(envs[i].last_capture(), scenes[i]->height(), scenes[i]->width(), camera));
        }

        const auto [fwd, res] = evaluate(active);
        std::vector<std::size_t> next_active;
        for (std::size_t k = 0; k < active.size(); ++k) {
            const std::size_t i = active[k];
            auto& rec = envs[i].record();
            const double reward = agent::compute_reward(rec.losses.back(), res[k].loss);
            rec.losses.push_back(res[k].loss);
            rec.rewards.push_back(reward);
            if (options.stopping && classify) envs[i].observe_prediction(res[k].probs, options.threshold);
            const bool done = envs[i].done();

            auto next = std::make_shared<const agent::AgentState>(
                state_from_encoding(out.episodes[i].bundle, fwd.encoded, k));
            if (options.collect_transitions)
                out.transitions.push_back(agent::Transition{states[i], envs[i].last_capture().action.clamped(), reward,
                                                            next, done});
            states[i] = next;
            if (options.keep_states) out.episodes[i].states.push_back(next);
            out.episodes[i].outcome = res[k];
            if (!done) next_active.push_back(i);
        }
        active = std::move(next_active);
    }

    for (std::size_t i = 0; i < n; ++i) {
        env::EpisodeRecord& rec = envs[i].record();
        const SampleOutcome& o = out.episodes[i].outcome;
        rec.final_prediction.label = o.label;
        rec.final_prediction.probs = o.probs;
        if (options.drop_pixels)
            for (auto& c : rec.captures) c.pixels = Tensor();
        rec.validate();
        out.episodes[i].record = std::move(rec);
    }
    return out;
}

} // namespace ave::train

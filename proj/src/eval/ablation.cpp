#include "ave/eval/ablation.hpp"

#include <fstream>

namespace ave::eval {

agent::ComponentMeans collect_component_means(const train::Model& model, const agent::SacAgent& agent,
                                              const env::Dataset& data, const env::CameraConfig& camera, int max_steps,
                                              std::uint64_t seed)
{
    train::SacPolicy policy(agent, true);
    train::RolloutOptions ro;
    ro.max_steps = max_steps;
    ro.keep_states = true;
    ro.drop_pixels = true;
    Rng rng(seed);
    agent::ComponentMeans means;
    constexpr std::size_t batch = 64;
    for (std::size_t start = 0; start < data.size(); start += batch) {
        const std::size_t end = std::min(data.size(), start + batch);
        const auto result =
            train::run_episodes(model, policy, std::span(data.scenes.data() + start, end - start), camera, ro, rng);
        for (const auto& ep : result.episodes)
            for (const auto& s : ep.states) means.accumulate(*s);
    }
    means.finalize();
    return means;
}

std::vector<AblationRow> state_ablation(const train::Model& model, const agent::SacAgent& agent,
                                        const env::Dataset& data, const env::CameraConfig& camera, int max_steps,
                                        std::uint64_t seed)
{
    const agent::ComponentMeans means = collect_component_means(model, agent, data, camera, max_steps, seed);
    std::vector<agent::Ablation> configs(5);
    configs[1].patches = true;
    configs[2].coords = true;
    configs[3].importance = true;
    configs[4].latent = true;
    train::EvalOptions opts;
    opts.max_steps = max_steps;
    opts.seed = seed;
    std::vector<AblationRow> rows;
    for (const auto& a : configs) {
        train::SacPolicy policy(agent, true, a, means);
        rows.push_back({a, train::evaluate(model, policy, data, camera, opts)});
    }
    return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const bool cls = rows.empty() || rows.front().metrics.classification;
    out << "patches,coordinates,importance,latent," << (cls ? "accuracy" : "rmse") << '\n';
    for (const auto& r : rows)
        out << !r.ablation.patches << ',' << !r.ablation.coords << ',' << !r.ablation.importance << ','
            << !r.ablation.latent << ',' << (cls ? r.metrics.accuracy : r.metrics.rmse) << '\n';
}

} // namespace ave::eval

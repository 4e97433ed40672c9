#include "ave/agent/state.hpp"

#include <stdexcept>

namespace ave::agent {

void AgentState::validate() const
{
    const std::size_t n = coords.rows();
    if (patches.rows() != n || importances.rows() != n || latents.rows() != n)
        throw std::invalid_argument("agent state: component lengths differ");
    if (n > 0 && (coords.cols() != 3 || importances.cols() != 1))
        throw std::invalid_argument("agent state: coords must be [n, 3] and importances [n, 1]");
}

AgentState AgentState::empty(std::size_t patch_dim, std::size_t latent_dim)
{
    AgentState s;
    s.patches = Tensor({0, patch_dim});
    s.coords = Tensor({0, 3});
    s.importances = Tensor({0, 1});
    s.latents = Tensor({0, latent_dim});
    return s;
}

AgentState make_state(const backbone::PatchBundle& bundle, const Tensor& latents, std::span<const double> importances)
{
    const std::size_t n = bundle.valid_count();
    if (latents.rows() != n || importances.size() != n)
        throw std::invalid_argument("make_state: latents/importances do not match the valid patches");
    const std::size_t p = bundle.patches.cols();
    AgentState s = AgentState::empty(p, latents.cols());
    s.patches = Tensor({n, p});
    s.coords = Tensor({n, 3});
    s.importances = Tensor({n, 1});
    s.latents = latents;
    std::size_t r = 0;
    for (std::size_t i = 0; i < bundle.size(); ++i) {
        if (!bundle.mask[i]) continue;
        std::copy(bundle.patches.row(i).begin(), bundle.patches.row(i).end(), s.patches.row(r).begin());
        std::copy(bundle.coords.row(i).begin(), bundle.coords.row(i).end(), s.coords.row(r).begin());
        s.importances[r] = importances[r];
        ++r;
    }
    return s;
}

StateBatch collate_states(std::span<const AgentState* const> states)
{
    if (states.empty()) throw std::invalid_argument("collate_states: empty batch");
    StateBatch b;
    b.batch = states.size();
    for (const AgentState* s : states) {
        s->validate();
        b.slots = std::max(b.slots, s->size());
    }
    const std::size_t p = states.front()->patches.cols();
    const std::size_t e = states.front()->latents.cols();
    const std::size_t rows = b.batch * b.slots;
    b.patches = Tensor({rows, p});
    b.coords = Tensor({rows, 3});
    b.importances = Tensor({rows, 1});
    b.latents = Tensor({rows, e});
    b.mask.assign(rows, 0);
    for (std::size_t i = 0; i < b.batch; ++i) {
        const AgentState& s = *states[i];
        if (s.size() > 0 && (s.patches.cols() != p || s.latents.cols() != e))
            throw std::invalid_argument("collate_states: component widths differ across states");
        const std::size_t base = i * b.slots;
        std::copy(s.patches.storage().begin(), s.patches.storage().end(), b.patches.data() + base * p);
        std::copy(s.coords.storage().begin(), s.coords.storage().end(), b.coords.data() + base * 3);
        std::copy(s.importances.storage().begin(), s.importances.storage().end(), b.importances.data() + base);
        std::copy(s.latents.storage().begin(), s.latents.storage().end(), b.latents.data() + base * e);
        std::fill_n(b.mask.begin() + static_cast<long>(base), s.size(), 1);
    }
    return b;
}

Ablation Ablation::parse(const std::string& name)
{
    Ablation a;
    if (name == "none" || name.empty()) return a;
    if (name == "patches") a.patches = true;
    else if (name == "coords") a.coords = true;
    else if (name == "importance") a.importance = true;
    else if (name == "latent") a.latent = true;
    else throw std::invalid_argument("unknown ablation " + name);
    return a;
}

std::string Ablation::name() const
{
    std::string out;
    auto add = [&](bool on, const char* n) {
        if (!on) return;
        if (!out.empty()) out += "+";
        out += n;
    };
    add(patches, "patches");
    add(coords, "coords");
    add(importance, "importance");
    add(latent, "latent");
    return out.empty() ? "none" : out;
}

void ComponentMeans::accumulate(const AgentState& state)
{
    if (state.size() == 0) return;
    if (patches.empty()) {
        patches = Tensor({state.patches.cols()});
        coords = Tensor({3});
        importances = Tensor({1});
        latents = Tensor({state.latents.cols()});
    }
    auto add_rows = [](Tensor& acc, const Tensor& t) {
        for (std::size_t r = 0; r < t.rows(); ++r)
            for (std::size_t c = 0; c < t.cols(); ++c) acc[c] += t.at(r, c);
    };
    add_rows(patches, state.patches);
    add_rows(coords, state.coords);
    add_rows(importances, state.importances);
    add_rows(latents, state.latents);
    count += state.size();
}

void ComponentMeans::finalize()
{
    if (count == 0) throw std::invalid_argument("component means: no patches accumulated");
    const double inv = 1.0 / static_cast<double>(count);
    for (Tensor* t : {&patches, &coords, &importances, &latents})
        for (double& v : t->values()) v *= inv;
}

AgentState apply_ablation(const AgentState& state, const Ablation& ablation, const ComponentMeans& means)
{
    if (!ablation.any()) return state;
    AgentState out = state;
    auto fill = [](Tensor& t, const Tensor& mean) {
        for (std::size_t r = 0; r < t.rows(); ++r)
            for (std::size_t c = 0; c < t.cols(); ++c) t.at(r, c) = mean[c];
    };
    if (ablation.patches) fill(out.patches, means.patches);
    if (ablation.coords) fill(out.coords, means.coords);
    if (ablation.importance) fill(out.importances, means.importances);
    if (ablation.latent) fill(out.latents, means.latents);
    return out;
}

} // namespace ave::agent

#include "ave/eval/baselines.hpp"

#include <stdexcept>

namespace ave::eval {

BaselineKind baseline_from_string(const std::string& s)
{
    if (s == "random_uniform" || s == "random") return BaselineKind::random_uniform;
    if (s == "raster_grid") return BaselineKind::raster_grid;
    if (s == "full_then_grid") return BaselineKind::full_then_grid;
    if (s == "center") return BaselineKind::center;
    throw std::invalid_argument("unknown baseline '" + s + "'");
}

const char* to_string(BaselineKind k)
{
    switch (k) {
    case BaselineKind::random_uniform: return "random_uniform";
    case BaselineKind::raster_grid: return "raster_grid";
    case BaselineKind::full_then_grid: return "full_then_grid";
    case BaselineKind::center: return "center";
    }
    return "?";
}

BaselinePolicy::BaselinePolicy(BaselineKind kind, const env::CameraConfig& camera, int height, int width,
                               double center_z)
    : kind_(kind), center_z_(center_z)
{
    camera.validate();
    if (height < camera.d_min || width < camera.d_min) throw std::invalid_argument("baseline: scene smaller than d_min");
    rows_ = (height + camera.d_min - 1) / camera.d_min;
    cols_ = (width + camera.d_min - 1) / camera.d_min;
}

env::GlimpseAction BaselinePolicy::raster(int index) const
{
    const int cell = index % (rows_ * cols_);
    const int r = cell / cols_;
    const int c = cell % cols_;
    return {cols_ > 1 ? static_cast<double>(c) / (cols_ - 1) : 0.0, rows_ > 1 ? static_cast<double>(r) / (rows_ - 1) : 0.0,
            0.0};
}

env::GlimpseAction BaselinePolicy::action(int t, Rng& rng) const
{
    if (t < 1) throw std::invalid_argument("baseline: step index starts at 1");
    switch (kind_) {
    case BaselineKind::random_uniform: {
        const double x = uniform01(rng);
        const double y = uniform01(rng);
        return {x, y, uniform01(rng)};
    }
    case BaselineKind::raster_grid: return raster(t - 1);
    case BaselineKind::full_then_grid: return t == 1 ? env::GlimpseAction{0.0, 0.0, 1.0} : raster(t - 2);
    case BaselineKind::center: return {0.5, 0.5, center_z_};
    }
    return {};
}

std::vector<env::GlimpseAction> BaselinePolicy::act(std::span<const agent::AgentState* const> states, int t, Rng& rng)
{
    std::vector<env::GlimpseAction> out;
    out.reserve(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) out.push_back(action(t, rng));
    return out;
}

} // namespace ave::eval

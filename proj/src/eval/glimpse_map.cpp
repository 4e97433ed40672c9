#include "ave/eval/glimpse_map.hpp"

#include <algorithm>
#include <stdexcept>

#include "ave/core/kernels.hpp"

namespace ave::eval {

double GlimpseMap::mean_value() const
{
    double s = 0.0;
    for (double v : overall.values()) s += v;
    return overall.empty() ? 0.0 : s / static_cast<double>(overall.size());
}

GlimpseMap accumulate_glimpse_map(std::span<const env::EpisodeRecord> records, int height, int width)
{
    if (height < 1 || width < 1) throw std::invalid_argument("glimpse map: empty scene shape");
    GlimpseMap m;
    m.height = height;
    m.width = width;
    m.episodes = records.size();
    const auto h = static_cast<std::size_t>(height);
    const auto w = static_cast<std::size_t>(width);
    m.overall = Tensor({h, w});
    if (records.empty()) return m;
    const double weight = 1.0 / static_cast<double>(records.size());
    for (const auto& r : records) {
        if (r.scene_height != height || r.scene_width != width)
            throw std::invalid_argument("glimpse map: record " + r.scene_id + " has a different scene shape");
        const auto regions = r.regions();
        for (std::size_t t = 0; t < regions.size(); ++t) {
            if (m.per_step.size() <= t) m.per_step.emplace_back(Shape{h, w});
            kernels::accumulate_coverage(m.per_step[t].data(), h, w, std::span(&regions[t], 1), weight);
        }
        kernels::accumulate_coverage(m.overall.data(), h, w, regions, weight);
    }
    return m;
}

Tensor max_normalized(const Tensor& map)
{
    Tensor out = map;
    const double mx = map.empty() ? 0.0 : *std::max_element(map.values().begin(), map.values().end());
    if (mx > 0.0)
        for (double& v : out.values()) v /= mx;
    return out;
}

} // namespace ave::eval

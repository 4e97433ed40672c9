#pragma once

#include <span>
#include <vector>

#include "ave/env/scene.hpp"

namespace ave::eval {

/// Per-pixel observation frequency over a set of episodes: every capture
/// region adds one to the pixels it covers, divided by the episode count.
struct GlimpseMap {
    int height = 0;
    int width = 0;
    std::size_t episodes = 0;
    Tensor overall;               // [H, W], all steps
    std::vector<Tensor> per_step; // [H, W] for step t = index + 1

    double mean_value() const;
};

GlimpseMap accumulate_glimpse_map(std::span<const env::EpisodeRecord> records, int height, int width);

/// Map divided by its maximum (all zeros stay zero).
Tensor max_normalized(const Tensor& map);

} // namespace ave::eval

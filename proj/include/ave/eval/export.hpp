#pragma once

#include <filesystem>
#include <vector>

#include "ave/env/scene.hpp"

namespace ave::eval {

struct ExportOptions {
    /// Fill unobserved composite pixels from their observed neighbours
    /// instead of flat gray.
    bool interpolate = false;
    bool include_pixels = false; // capture pixels in the JSON record
    std::vector<std::string> class_names;
};

/// Scene with the rectangles of captures 1..t drawn on it; the newest in
/// red, older ones in yellow.
Tensor overlay(const env::SceneImage& scene, const env::EpisodeRecord& record, std::size_t t);

/// Captures pasted back at their regions (largest first so finer detail
/// wins); unobserved pixels are 0.5 gray.
Tensor visible_composite(const env::EpisodeRecord& record, int channels, bool interpolate = false);

std::string caption(const env::EpisodeRecord& record, int d_cam, const std::vector<std::string>& class_names);

/// Writes step_<t>.png overlays, composite.png, caption.txt and record.json
/// into dir. Returns the written paths.
std::vector<std::filesystem::path> export_trajectory(const env::EpisodeRecord& record, const env::SceneImage& scene,
                                                     int d_cam, const std::filesystem::path& dir,
                                                     const ExportOptions& options = {});

} // namespace ave::eval

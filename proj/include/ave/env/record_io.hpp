#pragma once

#include <filesystem>

#include <json.hpp>

#include "ave/env/scene.hpp"

namespace ave::env {

/// Coordinates are always stored as absolute pixels plus the normalized
/// action; capture pixels are added as base64 little-endian doubles only
/// when include_pixels is set.
nlohmann::json record_to_json(const EpisodeRecord& record, bool include_pixels);
EpisodeRecord record_from_json(const nlohmann::json& j);

void save_record(const std::filesystem::path& path, const EpisodeRecord& record, bool include_pixels);
EpisodeRecord load_record(const std::filesystem::path& path);

} // namespace ave::env

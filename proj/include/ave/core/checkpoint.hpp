#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ave/core/nn.hpp"

namespace ave {

class CheckpointMismatch : public std::runtime_error {
public:
    explicit CheckpointMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct CheckpointSection {
    std::string name;
    nn::ParamList params;
};

/// Opaque bytes stored next to the parameter sections (optimizer state).
struct CheckpointBlob {
    std::string name;
    std::string bytes;
};

/// Binary checkpoint: magic, format version, architecture JSON, free-form
/// metadata JSON and named parameter sections.
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& architecture,
                     const std::vector<CheckpointSection>& sections, const nlohmann::json& meta = {},
                     const std::vector<CheckpointBlob>& blobs = {});

struct CheckpointInfo {
    nlohmann::json architecture;
    nlohmann::json meta;
    std::vector<std::string> sections;
};

CheckpointInfo inspect_checkpoint(const std::filesystem::path& path);

/// Loads the requested sections. Throws CheckpointMismatch when the stored
/// architecture differs from `architecture` on any key that `architecture`
/// defines, or when a requested section is missing.
void load_checkpoint(const std::filesystem::path& path, const nlohmann::json& architecture,
                     const std::vector<CheckpointSection>& sections);

/// Raw bytes of a blob saved with save_checkpoint.
std::string read_checkpoint_blob(const std::filesystem::path& path, const std::string& name);

} // namespace ave

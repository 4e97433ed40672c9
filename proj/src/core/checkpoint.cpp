#include "ave/core/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "ave/core/serialize.hpp"

namespace ave {

namespace {

constexpr char kMagic[8] = {'A', 'V', 'E', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint64_t kVersion = 1;

struct RawCheckpoint {
    CheckpointInfo info;
    std::map<std::string, std::string> blobs;
};

RawCheckpoint read_raw(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || !std::equal(magic, magic + 8, kMagic)) throw CheckpointMismatch(path.string() + " is not a checkpoint");
    const std::uint64_t version = io::read_u64(in);
    if (version != kVersion)
        throw CheckpointMismatch("checkpoint version " + std::to_string(version) + " is not supported");
    RawCheckpoint raw;
    raw.info.architecture = nlohmann::json::parse(io::read_string(in));
    raw.info.meta = nlohmann::json::parse(io::read_string(in));
    const std::uint64_t n = io::read_u64(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::string name = io::read_string(in);
        raw.info.sections.push_back(name);
        raw.blobs[name] = io::read_string(in);
    }
    return raw;
}

void check_architecture(const nlohmann::json& stored, const nlohmann::json& expected, const std::string& where)
{
    if (!expected.is_object()) {
        if (stored != expected)
            throw CheckpointMismatch("checkpoint config mismatch at " + where + ": stored " + stored.dump() +
                                     ", expected " + expected.dump());
        return;
    }
    for (const auto& [key, value] : expected.items()) {
        if (!stored.is_object() || !stored.contains(key))
            throw CheckpointMismatch("checkpoint config lacks " + where + key);
        check_architecture(stored.at(key), value, where + key + ".");
    }
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& architecture,
                     const std::vector<CheckpointSection>& sections, const nlohmann::json& meta,
                     const std::vector<CheckpointBlob>& blobs)
{
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
        out.write(kMagic, 8);
        io::write_u64(out, kVersion);
        io::write_string(out, architecture.dump());
        io::write_string(out, meta.is_null() ? "{}" : meta.dump());
        io::write_u64(out, sections.size() + blobs.size());
        for (const auto& s : sections) {
            std::ostringstream blob;
            io::write_params(blob, s.params);
            io::write_string(out, s.name);
            io::write_string(out, blob.str());
        }
        for (const auto& b : blobs) {
            io::write_string(out, b.name);
            io::write_string(out, b.bytes);
        }
        if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string read_checkpoint_blob(const std::filesystem::path& path, const std::string& name)
{
    RawCheckpoint raw = read_raw(path);
    const auto it = raw.blobs.find(name);
    if (it == raw.blobs.end()) throw CheckpointMismatch("checkpoint has no blob " + name);
    return std::move(it->second);
}

CheckpointInfo inspect_checkpoint(const std::filesystem::path& path) { return read_raw(path).info; }

void load_checkpoint(const std::filesystem::path& path, const nlohmann::json& architecture,
                     const std::vector<CheckpointSection>& sections)
{
    const RawCheckpoint raw = read_raw(path);
    check_architecture(raw.info.architecture, architecture, "");
    for (const auto& s : sections) {
        const auto it = raw.blobs.find(s.name);
        if (it == raw.blobs.end()) throw CheckpointMismatch("checkpoint has no section " + s.name);
        std::istringstream blob(it->second);
        try {
            io::read_params(blob, s.params);
        } catch (const std::runtime_error& e) {
            throw CheckpointMismatch("section " + s.name + ": " + e.what());
        }
    }
}

} // namespace ave

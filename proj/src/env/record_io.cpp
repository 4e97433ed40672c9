#include "ave/env/record_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ave/core/serialize.hpp"

namespace ave::env {

namespace {

std::vector<std::uint8_t> pack_doubles(const Tensor& t)
{
    static_assert(std::endian::native == std::endian::little, "pixel encoding assumes a little-endian host");
    std::vector<std::uint8_t> bytes(t.size() * sizeof(double));
    std::memcpy(bytes.data(), t.data(), bytes.size());
    return bytes;
}

Tensor unpack_doubles(const std::vector<std::uint8_t>& bytes, Shape shape)
{
    Tensor t(std::move(shape));
    if (bytes.size() != t.size() * sizeof(double)) throw std::runtime_error("episode record: pixel payload size mismatch");
    std::memcpy(t.data(), bytes.data(), bytes.size());
    return t;
}

} // namespace

nlohmann::json record_to_json(const EpisodeRecord& record, bool include_pixels)
{
    nlohmann::json j;
    j["scene_id"] = record.scene_id;
    j["scene_height"] = record.scene_height;
    j["scene_width"] = record.scene_width;
    j["stop_reason"] = to_string(record.stop_reason);
    j["losses"] = record.losses;
    j["rewards"] = record.rewards;
    auto& caps = j["captures"] = nlohmann::json::array();
    for (const auto& c : record.captures) {
        nlohmann::json e;
        e["step"] = c.step_index;
        e["action"] = {{"x", c.action.x}, {"y", c.action.y}, {"z", c.action.z}};
        e["x_abs"] = c.region.x;
        e["y_abs"] = c.region.y;
        e["d"] = c.region.d;
        if (include_pixels && !c.pixels.empty()) {
            e["pixel_shape"] = c.pixels.shape();
            e["pixels_f64le_base64"] = io::base64_encode(pack_doubles(c.pixels));
        }
        caps.push_back(std::move(e));
    }
    j["final_prediction"] = {{"label", record.final_prediction.label},
                             {"probs", record.final_prediction.probs},
                             {"logits", record.final_prediction.logits}};
    return j;
}

EpisodeRecord record_from_json(const nlohmann::json& j)
{
    EpisodeRecord r;
    r.scene_id = j.at("scene_id").get<std::string>();
    r.scene_height = j.at("scene_height").get<int>();
    r.scene_width = j.at("scene_width").get<int>();
    r.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    r.losses = j.at("losses").get<std::vector<double>>();
    r.rewards = j.at("rewards").get<std::vector<double>>();
    for (const auto& e : j.at("captures")) {
        GlimpseCapture c;
        c.step_index = e.at("step").get<int>();
        const auto& a = e.at("action");
        c.action = {a.at("x").get<double>(), a.at("y").get<double>(), a.at("z").get<double>()};
        c.region = {e.at("x_abs").get<int>(), e.at("y_abs").get<int>(), e.at("d").get<int>()};
        if (e.contains("pixels_f64le_base64"))
            c.pixels = unpack_doubles(io::base64_decode(e.at("pixels_f64le_base64").get<std::string>()),
                                      e.at("pixel_shape").get<Shape>());
        r.captures.push_back(std::move(c));
    }
    const auto& p = j.at("final_prediction");
    r.final_prediction.label = p.at("label").get<int>();
    r.final_prediction.probs = p.at("probs").get<std::vector<double>>();
    r.final_prediction.logits = p.at("logits").get<std::vector<double>>();
    return r;
}

void save_record(const std::filesystem::path& path, const EpisodeRecord& record, bool include_pixels)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << record_to_json(record, include_pixels).dump(2) << '\n';
}

EpisodeRecord load_record(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return record_from_json(nlohmann::json::parse(in));
}

} // namespace ave::env

#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace acceptance {

struct Result {
    Result() = default;
    Result(int id, std::string name) : id(id), name(std::move(name)) {}

    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    nlohmann::json data;
    double seconds = 0.0;
};

struct ToyOptions {
    std::vector<std::uint64_t> seeds{0, 1, 2};
    // 0 keeps the preset value
    std::size_t train_count = 0;
    std::size_t test_count = 0;
    int epochs = 0;
    int pretrain_epochs = 0;
    std::string workdir;
};

Result pixel_percentage_oracle();
Result reward_telescoping();
Result bellman_oracle();
Result action_bounds();
Result permutation_padding();
Result rollout_properties();
Result gradient_checks();

/// Criteria 8 to 10 share the trained toy runs.
std::vector<Result> toy_pipeline(const ToyOptions& options);
Result reconstruction_monotone(const ToyOptions& options);
Result determinism_roundtrip(const ToyOptions& options);

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 4);

} // namespace acceptance

#pragma once

#include <string>

#include "ave/env/scene.hpp"
#include "ave/train/policy.hpp"

namespace ave::eval {

enum class BaselineKind { random_uniform, raster_grid, full_then_grid, center };
BaselineKind baseline_from_string(const std::string& s);
const char* to_string(BaselineKind k);

/// Fixed glimpse schedules. raster_grid visits d_min-sized cells row-major
/// (wrapping after the last cell); full_then_grid starts with one glimpse of
/// the whole scene.
class BaselinePolicy : public train::GlimpsePolicy {
public:
    BaselinePolicy(BaselineKind kind, const env::CameraConfig& camera, int height, int width, double center_z = 0.0);

    /// Action for step t >= 1.
    env::GlimpseAction action(int t, Rng& rng) const;
    std::vector<env::GlimpseAction> act(std::span<const agent::AgentState* const> states, int t, Rng& rng) override;
    std::string name() const override { return to_string(kind_); }

    int grid_rows() const { return rows_; }
    int grid_cols() const { return cols_; }

private:
    env::GlimpseAction raster(int index) const;

    BaselineKind kind_;
    int rows_ = 1;
    int cols_ = 1;
    double center_z_ = 0.0;
};

} // namespace ave::eval

#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ave/core/kernels.hpp"
#include "ave/core/tensor.hpp"

namespace ave::env {

/// Scene image, pixels [H, W, C] with values in [0, 1].
struct SceneImage {
    std::string id;
    Tensor pixels;
    std::optional<int> label;
    std::optional<Tensor> dense_target;

    int height() const { return static_cast<int>(pixels.dim(0)); }
    int width() const { return static_cast<int>(pixels.dim(1)); }
    int channels() const { return static_cast<int>(pixels.dim(2)); }
    /// Reconstruction target: dense_target when present, the pixels otherwise.
    const Tensor& target() const { return dense_target ? *dense_target : pixels; }

    /// Throws std::invalid_argument on a malformed image.
    void validate(int d_min) const;
};

struct CameraConfig {
    int d_cam = 32;
    int d_min = 32;
    int d_max = 224;
    int d_patch = 16;

    /// Defaults for a given scene size: d_min = d_cam, d_max = min(H, W).
    static CameraConfig for_scene(int height, int width, int d_cam, int d_patch);

    void validate() const;
    void validate_for(const SceneImage& scene) const;
    /// Patches per glimpse side, ceil(d_cam / d_patch).
    int patches_per_side() const { return (d_cam + d_patch - 1) / d_patch; }
    int patches_per_glimpse() const { return patches_per_side() * patches_per_side(); }
};

/// Normalized action: (x, y) top-left corner in units of the valid placement
/// range, z scale with 0 = narrowest and 1 = widest field of view.
struct GlimpseAction {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    GlimpseAction clamped() const;
};

using Region = kernels::Region;

struct GlimpseCapture {
    Tensor pixels; // [d_cam, d_cam, C]
    Region region; // absolute top-left corner and side in scene pixels
    GlimpseAction action;
    int step_index = 0;
};

enum class StopReason { none, max_steps, confidence };
const char* to_string(StopReason r);
StopReason stop_reason_from_string(const std::string& s);

struct Prediction {
    int label = -1;
    std::vector<double> probs;
    std::vector<double> logits;
};

/// One explored episode. losses holds L_0 (the loss before any glimpse)
/// followed by one entry per capture, so rewards[t-1] = losses[t-1] - losses[t].
struct EpisodeRecord {
    std::string scene_id;
    int scene_height = 0;
    int scene_width = 0;
    std::vector<GlimpseCapture> captures;
    std::vector<double> losses;
    std::vector<double> rewards;
    StopReason stop_reason = StopReason::none;
    Prediction final_prediction;

    std::vector<Region> regions() const;
    /// Throws InvariantViolation if rewards do not telescope the losses.
    void validate() const;
};

Region denormalize_action(const GlimpseAction& action, int height, int width, const CameraConfig& cfg);
Region denormalize_action(const GlimpseAction& action, const SceneImage& scene, const CameraConfig& cfg);

/// Crops the denormalized region and resamples it to d_cam x d_cam.
GlimpseCapture capture_glimpse(const SceneImage& scene, const GlimpseAction& action, const CameraConfig& cfg,
                               int step_index = 1);
/// Resamples an arbitrary integer region; used by capture_glimpse and baselines.
Tensor capture_region(const SceneImage& scene, const Region& region, int d_cam);

double pixel_percentage(std::size_t captures, int d_cam, int height, int width);
double pixel_percentage(std::span<const GlimpseCapture> captures, const SceneImage& scene, const CameraConfig& cfg);

/// True when the most probable class reaches the threshold or the budget is spent.
bool should_stop(std::span<const double> class_probs, double threshold, int t, int max_steps);

/// The AVE process for one scene. Single caller; independent instances may
/// run in parallel.
class GlimpseEnv {
public:
    GlimpseEnv(CameraConfig cfg, int max_steps);

    void reset(std::shared_ptr<const SceneImage> scene);
    /// Captures the next glimpse. Returns true when the step budget is spent.
    /// Stepping a finished episode throws InvariantViolation.
    bool step(const GlimpseAction& action);
    /// Applies the confidence stopping rule to the current prediction and
    /// finishes the episode if it fires. Returns done().
    bool observe_prediction(std::span<const double> class_probs, double threshold);

    bool done() const { return done_; }
    int t() const { return t_; }
    int max_steps() const { return max_steps_; }
    const CameraConfig& camera() const { return cfg_; }
    const SceneImage& scene() const { return *scene_; }
    const std::vector<GlimpseCapture>& history() const { return record_.captures; }
    const GlimpseCapture& last_capture() const { return record_.captures.back(); }
    EpisodeRecord& record() { return record_; }
    const EpisodeRecord& record() const { return record_; }

private:
    CameraConfig cfg_;
    int max_steps_;
    std::shared_ptr<const SceneImage> scene_;
    EpisodeRecord record_;
    int t_ = 0;
    bool done_ = true;
};

/// Lockstep wrapper over independent environments.
class VectorEnv {
public:
    VectorEnv(std::size_t count, CameraConfig cfg, int max_steps);

    void reset(std::span<const std::shared_ptr<const SceneImage>> scenes);
    /// Steps every unfinished environment with its action; finished ones are skipped.
    void step(std::span<const GlimpseAction> actions);
    bool all_done() const;
    std::size_t size() const { return envs_.size(); }
    GlimpseEnv& operator[](std::size_t i) { return envs_[i]; }
    const GlimpseEnv& operator[](std::size_t i) const { return envs_[i]; }

private:
    std::vector<GlimpseEnv> envs_;
};

} // namespace ave::env

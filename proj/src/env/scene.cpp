#include "ave/env/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ave/core/error.hpp"

namespace ave::env {

namespace {

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

double clamp01(double v, const char* name)
{
    if (!std::isfinite(v)) throw std::invalid_argument(std::string("glimpse action component ") + name + " is not finite");
    return std::clamp(v, 0.0, 1.0);
}

} // namespace

void SceneImage::validate(int d_min) const
{
    if (pixels.ndim() != 3) throw std::invalid_argument("scene " + id + ": pixels must be [H, W, C]");
    if (height() < d_min || width() < d_min)
        throw std::invalid_argument("scene " + id + " (" + std::to_string(height()) + "x" + std::to_string(width()) +
                                    ") is smaller than d_min = " + std::to_string(d_min));
    for (double v : pixels.values())
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("scene " + id + ": pixel value outside [0, 1]");
    if (dense_target && dense_target->shape() != pixels.shape())
        throw std::invalid_argument("scene " + id + ": dense target shape differs from pixels");
}

CameraConfig CameraConfig::for_scene(int height, int width, int d_cam, int d_patch)
{
    CameraConfig c;
    c.d_cam = d_cam;
    c.d_min = d_cam;
    c.d_max = std::min(height, width);
    c.d_patch = d_patch;
    return c;
}

void CameraConfig::validate() const
{
    if (d_cam < 1 || d_patch < 1) throw std::invalid_argument("camera: d_cam and d_patch must be positive");
    if (d_min < 1) throw std::invalid_argument("camera: d_min must be at least 1");
    if (d_min > d_max) throw std::invalid_argument("camera: d_min exceeds d_max");
}

void CameraConfig::validate_for(const SceneImage& scene) const
{
    validate();
    if (scene.height() < d_min || scene.width() < d_min)
        throw std::invalid_argument("scene " + scene.id + " is smaller than d_min = " + std::to_string(d_min));
    if (d_max > std::min(scene.height(), scene.width()))
        throw std::invalid_argument("camera: d_max = " + std::to_string(d_max) + " exceeds the scene side of " +
                                    scene.id);
}

GlimpseAction GlimpseAction::clamped() const { return {clamp01(x, "x"), clamp01(y, "y"), clamp01(z, "z")}; }

const char* to_string(StopReason r)
{
    switch (r) {
    case StopReason::max_steps: return "max_steps";
    case StopReason::confidence: return "confidence";
    default: return "none";
    }
}

StopReason stop_reason_from_string(const std::string& s)
{
    if (s == "max_steps") return StopReason::max_steps;
    if (s == "confidence") return StopReason::confidence;
    if (s == "none") return StopReason::none;
    throw std::invalid_argument("unknown stop reason " + s);
}

std::vector<Region> EpisodeRecord::regions() const
{
    std::vector<Region> out;
    out.reserve(captures.size());
    for (const auto& c : captures) out.push_back(c.region);
    return out;
}

void EpisodeRecord::validate() const
{
    ensure(rewards.size() == captures.size(), "episode " + scene_id + ": reward count differs from capture count");
    ensure(losses.size() == captures.size() + 1, "episode " + scene_id + ": expected one loss per capture plus L_0");
    for (std::size_t t = 0; t < rewards.size(); ++t)
        ensure(std::abs(rewards[t] - (losses[t] - losses[t + 1])) <= 1e-6,
               "episode " + scene_id + ": reward at step " + std::to_string(t + 1) + " does not equal L_{t-1} - L_t");
}

Region denormalize_action(const GlimpseAction& action, int height, int width, const CameraConfig& cfg)
{
    cfg.validate();
    if (height < cfg.d_min || width < cfg.d_min)
        throw std::invalid_argument("scene smaller than d_min = " + std::to_string(cfg.d_min));
    if (cfg.d_max > std::min(height, width))
        throw std::invalid_argument("camera: d_max exceeds the scene side");
    const GlimpseAction a = action.clamped();
    const int d = round_half_up(cfg.d_min + a.z * (cfg.d_max - cfg.d_min));
    const int x = round_half_up(a.x * (width - d));
    const int y = round_half_up(a.y * (height - d));
    return {x, y, d};
}

Region denormalize_action(const GlimpseAction& action, const SceneImage& scene, const CameraConfig& cfg)
{
    return denormalize_action(action, scene.height(), scene.width(), cfg);
}

Tensor capture_region(const SceneImage& scene, const Region& region, int d_cam)
{
    if (region.x < 0 || region.y < 0 || region.d < 1 || region.x + region.d > scene.width() ||
        region.y + region.d > scene.height())
        throw std::invalid_argument("capture region outside the scene");
    const auto n = static_cast<std::size_t>(d_cam);
    const auto c = static_cast<std::size_t>(scene.channels());
    Tensor out({n, n, c});
    kernels::resample(scene.pixels.data(), static_cast<std::size_t>(scene.height()),
                      static_cast<std::size_t>(scene.width()), c,
                      kernels::Window{static_cast<double>(region.x), static_cast<double>(region.y),
                                      static_cast<double>(region.d), static_cast<double>(region.d)},
                      n, n, out.data());
    return out;
}

GlimpseCapture capture_glimpse(const SceneImage& scene, const GlimpseAction& action, const CameraConfig& cfg,
                               int step_index)
{
    GlimpseCapture g;
    g.action = action.clamped();
    g.region = denormalize_action(g.action, scene, cfg);
    g.pixels = capture_region(scene, g.region, cfg.d_cam);
    g.step_index = step_index;
    return g;
}

double pixel_percentage(std::size_t captures, int d_cam, int height, int width)
{
    return static_cast<double>(captures) * d_cam * d_cam / (static_cast<double>(height) * width) * 100.0;
}

double pixel_percentage(std::span<const GlimpseCapture> captures, const SceneImage& scene, const CameraConfig& cfg)
{
    return pixel_percentage(captures.size(), cfg.d_cam, scene.height(), scene.width());
}

bool should_stop(std::span<const double> class_probs, double threshold, int t, int max_steps)
{
    if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("stop threshold must lie in (0, 1]");
    if (t >= max_steps) return true;
    if (class_probs.empty()) throw std::invalid_argument("should_stop: empty probability vector");
    double sum = 0.0;
    double best = 0.0;
    for (double p : class_probs) {
        sum += p;
        best = std::max(best, p);
    }
    if (std::abs(sum - 1.0) > 1e-5) throw std::invalid_argument("should_stop: probabilities do not sum to 1");
    return best >= threshold;
}

// ---------------------------------------------------------------------------

GlimpseEnv::GlimpseEnv(CameraConfig cfg, int max_steps) : cfg_(cfg), max_steps_(max_steps)
{
    cfg_.validate();
    if (max_steps < 1) throw std::invalid_argument("episode length T must be at least 1");
}

void GlimpseEnv::reset(std::shared_ptr<const SceneImage> scene)
{
    if (!scene) throw std::invalid_argument("reset: null scene");
    cfg_.validate_for(*scene);
    scene_ = std::move(scene);
    record_ = EpisodeRecord{};
    record_.scene_id = scene_->id;
    record_.scene_height = scene_->height();
    record_.scene_width = scene_->width();
    t_ = 0;
    done_ = false;
}

bool GlimpseEnv::step(const GlimpseAction& action)
{
    ensure(scene_ != nullptr, "step before reset");
    ensure(!done_, "step on a finished episode of scene " + scene_->id);
    record_.captures.push_back(capture_glimpse(*scene_, action, cfg_, t_ + 1));
    ++t_;
    if (t_ >= max_steps_) {
        done_ = true;
        record_.stop_reason = StopReason::max_steps;
    }
    return done_;
}

bool GlimpseEnv::observe_prediction(std::span<const double> class_probs, double threshold)
{
    if (done_) return true;
    if (should_stop(class_probs, threshold, t_, max_steps_)) {
        done_ = true;
        record_.stop_reason = t_ >= max_steps_ ? StopReason::max_steps : StopReason::confidence;
    }
    return done_;
}

VectorEnv::VectorEnv(std::size_t count, CameraConfig cfg, int max_steps) : envs_(count, GlimpseEnv(cfg, max_steps)) {}

void VectorEnv::reset(std::span<const std::shared_ptr<const SceneImage>> scenes)
{
    if (scenes.size() != envs_.size()) throw std::invalid_argument("VectorEnv::reset: scene count mismatch");
    for (std::size_t i = 0; i < envs_.size(); ++i) envs_[i].reset(scenes[i]);
}

void VectorEnv::step(std::span<const GlimpseAction> actions)
{
    if (actions.size() != envs_.size()) throw std::invalid_argument("VectorEnv::step: action count mismatch");
    const auto n = static_cast<long>(envs_.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i)
        if (!envs_[static_cast<std::size_t>(i)].done()) envs_[static_cast<std::size_t>(i)].step(actions[static_cast<std::size_t>(i)]);
}

bool VectorEnv::all_done() const
{
    return std::all_of(envs_.begin(), envs_.end(), [](const GlimpseEnv& e) { return e.done(); });
}

} // namespace ave::env

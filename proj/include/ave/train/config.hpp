#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ave/agent/sac.hpp"
#include "ave/backbone/encoder.hpp"
#include "ave/core/config.hpp"
#include "ave/heads/heads.hpp"

namespace ave::train {

enum class Scale { toy, desk, paper };
Scale scale_from_string(const std::string& s);
const char* to_string(Scale s);

struct TrainConfig {
    // data
    std::string dataset = "digits"; // "digits" or "directory"
    std::string data_dir;
    std::string labels_csv;
    std::string test_dir;
    std::string test_labels_csv;
    int image_size = 64;
    std::size_t train_count = 2000;
    std::size_t val_count = 300;
    std::size_t test_count = 500;
    int digit_min_height = 10;
    int digit_max_height = 20;
    double noise = 0.0;
    bool augment = false;
    bool flip = false;
    double min_crop_scale = 0.8;

    heads::TaskKind task = heads::TaskKind::classification;

    // camera
    int d_cam = 32;
    int d_patch = 16;
    int d_min = 0; // 0 = d_cam
    int d_max = 0; // 0 = min(H, W)
    int T = 12;

    backbone::EncoderConfig encoder;
    heads::DecoderConfig decoder;
    agent::AgentConfig agent;

    // schedule
    int epochs = 30;
    int warmup_agent_epochs = 3;
    int pretrain_epochs = 20;
    int pretrain_glimpses = 16;
    std::size_t episodes_per_epoch = 0; // 0 = whole training set
    int batch = 32;
    double updates_per_transition = 0.25;
    std::size_t replay_warmup = 256;
    bool stochastic_backbone_rollouts = true;

    // optimization
    double backbone_lr = 0.0; // 0 = 1e-5 for classification, 1e-4 otherwise
    double pretrain_lr = 0.0; // 0 = backbone_lr
    double weight_decay = 1e-4;
    double cosine_floor = 1e-8;
    double grad_clip = 1.0;
    int patience = 10;
    bool restore_best = true;

    // evaluation
    double stop_threshold = 0.85;
    std::size_t eval_every = 1;

    std::uint64_t seed = 0;
    int threads = 1;

    static TrainConfig preset(Scale scale);
    /// Reads `key = value` overrides on top of the preset named by
    /// `scale` in the file (default desk). Unknown keys are an error.
    static TrainConfig from_file(const ConfigFile& file);
    static TrainConfig from_json(const nlohmann::json& j);

    /// Fills derived fields (agent widths, default learning rates) and checks ranges.
    void finalize();
    void validate() const;
    double effective_backbone_lr() const;
    double effective_pretrain_lr() const;
    env::CameraConfig camera(int height, int width) const;

    nlohmann::json to_json() const;
    /// 12 hex digits of a hash over the canonical JSON form.
    std::string hash() const;
};

/// Phase of an alternating-schedule epoch.
struct Phase {
    bool train_agent = false;
    bool train_backbone = false;
};

/// Epochs [0, W) train the agent; afterwards even offsets from W train the
/// backbone and odd offsets the agent.
Phase schedule(int epoch, const TrainConfig& cfg);

} // namespace ave::train

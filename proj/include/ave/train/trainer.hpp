#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ave/agent/replay.hpp"
#include "ave/agent/sac.hpp"
#include "ave/core/optim.hpp"
#include "ave/env/dataset.hpp"
#include "ave/train/config.hpp"
#include "ave/train/model.hpp"
#include "ave/train/rollout.hpp"

namespace ave::train {

struct DataSplits {
    env::Dataset train;
    env::Dataset val;
    env::Dataset test;
};

DataSplits load_data(const TrainConfig& cfg);

struct EvalOptions {
    int max_steps = 1;
    bool stopping = false;
    double threshold = 1.0;
    std::size_t batch = 64;
    std::uint64_t seed = 0;
    bool drop_pixels = true;
};

struct EvalMetrics {
    std::string policy;
    std::string mode; // "fixed" or "stopping"
    std::size_t episodes = 0;
    double accuracy = 0.0; // classification
    double rmse = 0.0;     // reconstruction
    double loss = 0.0;
    double mean_glimpses = 0.0;
    double pixel_percent = 0.0;
    bool classification = true;

    /// Higher is better: accuracy in percent, or -RMSE.
    double metric() const { return classification ? accuracy : -rmse; }
    nlohmann::json to_json() const;
};

/// Runs every scene of the dataset once under the policy.
EvalMetrics evaluate(const Model& model, GlimpsePolicy& policy, const env::Dataset& data,
                     const env::CameraConfig& camera, const EvalOptions& options,
                     std::vector<EpisodeResult>* episodes = nullptr);

struct EpochMetrics {
    int epoch = 0;
    std::string phase; // pretrain, agent, backbone
    double lr = 0.0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double mean_return = 0.0;
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha = 0.0;
    std::size_t episodes = 0;
    std::size_t transitions = 0;
    std::size_t updates = 0;
    bool evaluated = false;
    double val_metric = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;

    nlohmann::json to_json() const;
    static std::vector<std::string> csv_header();
    std::vector<std::string> csv_row() const;
};

/// Append-only run history.
class RunLog {
public:
    RunLog() = default;
    RunLog(std::string config_hash, nlohmann::json config);

    void append(const EpochMetrics& m);
    void add_sample(nlohmann::json record);
    const std::vector<EpochMetrics>& epochs() const { return epochs_; }
    const std::string& config_hash() const { return hash_; }
    double wall_seconds() const;

    nlohmann::json to_json() const;
    void write_json(const std::filesystem::path& path) const;
    void write_csv(const std::filesystem::path& path) const;

private:
    std::string hash_;
    nlohmann::json config_;
    std::vector<EpochMetrics> epochs_;
    std::vector<nlohmann::json> samples_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Owns the model, the agent, their optimizers and the replay memory.
class Trainer {
public:
    Trainer(TrainConfig cfg, env::Dataset train, env::Dataset val);

    const TrainConfig& config() const { return cfg_; }
    Model& model() { return model_; }
    const Model& model() const { return model_; }
    agent::SacAgent& agent() { return agent_; }
    const agent::SacAgent& agent() const { return agent_; }
    const agent::ReplayBuffer& replay() const { return *replay_; }
    RunLog& log() { return log_; }
    env::CameraConfig camera() const { return camera_; }

    /// Random-glimpse pretraining: each scene sees between 1 and
    /// pretrain_glimpses uniformly random glimpses.
    EpochMetrics pretrain_epoch(int epoch);
    void pretrain();

    EpochMetrics agent_epoch(int epoch);
    EpochMetrics backbone_epoch(int epoch);
    /// One epoch of the alternating schedule plus validation.
    EpochMetrics train_epoch(int epoch);
    /// Runs the schedule from epoch 0 with early stopping on the validation
    /// metric; restores the best parameters when configured.
    void fit();

    EvalMetrics validate() const;
    /// Called after every schedule epoch (progress reporting).
    void set_epoch_callback(std::function<void(const EpochMetrics&)> cb) { on_epoch_ = std::move(cb); }
    int epochs_done() const { return next_epoch_; }
    bool stopped_early() const { return stopped_early_; }
    double backbone_lr(long step) const;
    long backbone_steps_total() const;

    void save(const std::filesystem::path& path, const nlohmann::json& extra_meta = {}) const;
    /// Loads parameters and optimizer state saved by save(); configs must match.
    void load(const std::filesystem::path& path);

private:
    std::vector<std::size_t> epoch_order(std::size_t count);
    env::ScenePtr maybe_augment(const env::ScenePtr& scene);
    double validation_metric(EpochMetrics& m);

    TrainConfig cfg_;
    env::Dataset train_;
    env::Dataset val_;
    env::CameraConfig camera_;
    Model model_;
    agent::SacAgent agent_;
    std::unique_ptr<agent::ReplayBuffer> replay_;
    optim::AdamW backbone_opt_;
    optim::AdamW pretrain_opt_;
    Rng data_rng_;
    Rng augment_rng_;
    Rng policy_rng_;
    Rng update_rng_;
    Rng pretrain_rng_;
    long backbone_step_ = 0;
    long pretrain_step_ = 0;
    double update_credit_ = 0.0;
    int next_epoch_ = 0;
    bool stopped_early_ = false;
    RunLog log_;
    std::function<void(const EpochMetrics&)> on_epoch_;
};

/// Everything needed to evaluate a saved run.
struct LoadedRun {
    TrainConfig config;
    Model model;
    std::unique_ptr<agent::SacAgent> agent;
    nlohmann::json meta;
};

LoadedRun load_run(const std::filesystem::path& path);

/// Deep copy of a model's parameters into a fresh instance.
Model clone_model(const Model& model);

} // namespace ave::train

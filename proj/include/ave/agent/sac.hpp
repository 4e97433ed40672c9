#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "ave/agent/replay.hpp"
#include "ave/agent/state.hpp"
#include "ave/core/nn.hpp"
#include "ave/core/optim.hpp"

namespace ave::agent {

using ag::Var;

struct AgentConfig {
    int patch_side = 16; // d_patch
    int channels = 3;
    int latent_dim = 192;
    int hidden = 256;
    int pool_heads = 8;
    int conv1 = 16;
    int conv2 = 32;
    double pixel_mean = 0.5;
    double pixel_std = 1.0;
    double gamma = 0.99;
    double tau = 0.005;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double alpha_lr = 3e-4;
    double grad_clip = 1.0;
    int batch = 128;
    std::size_t replay_capacity = 100000;
    double target_entropy = -3.0;
    bool auto_alpha = true;
    double init_alpha = 0.1;
    double log_std_min = -20.0;
    double log_std_max = 2.0;

    void validate() const;
    int patch_dim() const { return patch_side * patch_side * channels; }
    /// Fields that fix parameter shapes.
    nlohmann::json architecture() const;
    nlohmann::json to_json() const;
};

/// Set encoder: a conv stack for patch pixels and 3-layer MLPs for coords,
/// importances and latents, concatenated per patch and reduced by masked
/// attention pooling. A learned null token is always part of the pooled set,
/// so an empty state maps to the pooled null token.
class StateEncoder {
public:
    StateEncoder() = default;
    StateEncoder(const AgentConfig& config, Rng& rng);

    Var operator()(const StateBatch& batch) const; // [batch, hidden]
    void collect(nn::ParamList& out, const std::string& prefix) const;

private:
    Var patch_features(const Tensor& patches) const;

    int side_ = 0;
    int channels_ = 0;
    double pixel_mean_ = 0.5;
    double pixel_std_ = 1.0;
    std::vector<nn::Conv2d> convs_;
    nn::Linear conv_out_;
    nn::Mlp coord_mlp_;
    nn::Mlp importance_mlp_;
    nn::Mlp latent_mlp_;
    Var null_token_;
    nn::AttentionPool pool_;
};

struct PolicyOutput {
    Tensor mean;     // [batch, 3]
    Tensor log_std;  // [batch, 3]
    Tensor action;   // [batch, 3] in [0,1]
    Tensor log_prob; // [batch, 1]
};

/// Squashed-Gaussian policy: u = mean + exp(log_std) * eps, a = sigmoid(u).
class Actor {
public:
    Actor() = default;
    Actor(const AgentConfig& config, Rng& rng);

    struct Sample {
        Var mean;
        Var log_std;
        Var action;
        Var log_prob;
    };

    /// noise [batch, 3] of standard normal draws; empty noise means
    /// deterministic (a = sigmoid(mean), log_prob at eps = 0).
    Sample operator()(const StateBatch& batch, const Tensor& noise) const;
    void collect(nn::ParamList& out, const std::string& prefix) const;

private:
    StateEncoder encoder_;
    nn::Mlp head_;
    double log_std_min_ = -20.0;
    double log_std_max_ = 2.0;
};

/// log density of a = sigmoid(mean + std * eps) given eps, summed over dims.
Var squashed_log_prob(const Var& log_std, const Tensor& noise, const Var& u);

/// One Q-network with its own state encoder.
class Critic {
public:
    Critic() = default;
    Critic(const AgentConfig& config, Rng& rng);

    Var embed(const StateBatch& batch) const { return encoder_(batch); }
    /// Q from a precomputed state embedding [batch, hidden] and actions [batch, 3].
    Var q_from_embedding(const Var& embedding, const Var& action) const;
    Var operator()(const StateBatch& batch, const Var& action) const { return q_from_embedding(embed(batch), action); }
    void collect(nn::ParamList& out, const std::string& prefix) const;
    const nn::Mlp& head() const { return head_; }

private:
    StateEncoder encoder_;
    nn::Mlp head_;
};

double compute_reward(double loss_prev, double loss_cur);

struct SacStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha_loss = 0.0;
    double alpha = 0.0;
    double q_mean = 0.0;
    double log_prob_mean = 0.0;
};

/// Actor, twin critics with target copies and the entropy temperature.
/// Actor and critics share no parameters.
class SacAgent {
public:
    SacAgent() = default;
    SacAgent(const AgentConfig& config, std::uint64_t seed);
    SacAgent(const SacAgent&) = delete;
    SacAgent& operator=(const SacAgent&) = delete;
    SacAgent(SacAgent&&) = default;
    SacAgent& operator=(SacAgent&&) = default;

    PolicyOutput act(std::span<const AgentState* const> states, bool deterministic, Rng& rng) const;

    /// y = r + (1 - done) * gamma * (min(Q1', Q2')(s', a') - alpha * log pi(a'|s'))
    /// with a' = sigmoid(mean' + std' * next_noise).
    Tensor critic_target(const std::vector<Transition>& batch, const Tensor& next_noise) const;

    /// One SAC step on a sampled batch; noise is drawn from rng.
    SacStats update(const std::vector<Transition>& batch, Rng& rng);
    SacStats update(const std::vector<Transition>& batch, const Tensor& next_noise, const Tensor& actor_noise);

    double alpha() const;
    void set_alpha(double alpha);
    const AgentConfig& config() const { return config_; }
    const Actor& actor() const { return actor_; }
    const Critic& critic(int i) const { return i == 0 ? critic1_ : critic2_; }
    const Critic& target_critic(int i) const { return i == 0 ? target1_ : target2_; }

    nn::ParamList actor_params() const;
    nn::ParamList critic_params() const;
    nn::ParamList target_params() const;
    /// Every parameter including log_alpha, for checkpoints and audits.
    nn::ParamList all_params() const;

    void save_optimizers(std::ostream& os) const;
    void load_optimizers(std::istream& is);
    long updates() const { return updates_; }

private:
    AgentConfig config_;
    Actor actor_;
    Critic critic1_;
    Critic critic2_;
    Critic target1_;
    Critic target2_;
    Var log_alpha_;
    optim::AdamW actor_opt_;
    optim::AdamW critic_opt_;
    optim::AdamW alpha_opt_;
    long updates_ = 0;
};

} // namespace ave::agent

#include "ave/agent/sac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "ave/core/error.hpp"
#include "ave/core/serialize.hpp"

namespace ave::agent {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

Tensor actions_tensor(const std::vector<Transition>& batch)
{
    Tensor a({batch.size(), 3});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        a.at(i, 0) = batch[i].action.x;
        a.at(i, 1) = batch[i].action.y;
        a.at(i, 2) = batch[i].action.z;
    }
    return a;
}

StateBatch collate_side(const std::vector<Transition>& batch, bool next)
{
    std::vector<const AgentState*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& t : batch) ptrs.push_back(next ? t.next_state.get() : t.state.get());
    return collate_states(ptrs);
}

Tensor normal_noise(std::size_t rows, Rng& rng) { return randn({rows, 3}, rng); }

} // namespace

void AgentConfig::validate() const
{
    if (patch_side < 4) throw std::invalid_argument("agent: patch side must be at least 4");
    if (channels < 1 || latent_dim < 1 || hidden < 1 || conv1 < 1 || conv2 < 1)
        throw std::invalid_argument("agent: widths must be positive");
    if (pool_heads < 1 || (4 * hidden) % pool_heads != 0 || hidden % pool_heads != 0)
        throw std::invalid_argument("agent: hidden width not divisible by pool heads");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("agent: gamma outside [0,1]");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("agent: tau outside (0,1]");
    if (batch < 1 || replay_capacity < 1) throw std::invalid_argument("agent: batch and replay capacity must be positive");
    if (!(init_alpha > 0.0)) throw std::invalid_argument("agent: initial alpha must be positive");
    if (!(pixel_std > 0.0) || !std::isfinite(pixel_mean)) throw std::invalid_argument("agent: bad pixel statistics");
    if (!(log_std_min < log_std_max)) throw std::invalid_argument("agent: log_std bounds out of order");
}

nlohmann::json AgentConfig::architecture() const
{
    return {{"patch_side", patch_side}, {"channels", channels}, {"latent_dim", latent_dim}, {"hidden", hidden},
            {"pool_heads", pool_heads}, {"conv1", conv1},       {"conv2", conv2},
            {"pixel_mean", pixel_mean}, {"pixel_std", pixel_std}};
}

nlohmann::json AgentConfig::to_json() const
{
    nlohmann::json j = architecture();
    j["gamma"] = gamma;
    j["tau"] = tau;
    j["actor_lr"] = actor_lr;
    j["critic_lr"] = critic_lr;
    j["alpha_lr"] = alpha_lr;
    j["grad_clip"] = grad_clip;
    j["batch"] = batch;
    j["replay_capacity"] = replay_capacity;
    j["target_entropy"] = target_entropy;
    j["auto_alpha"] = auto_alpha;
    j["init_alpha"] = init_alpha;
    return j;
}

// ---------------------------------------------------------------------------

StateEncoder::StateEncoder(const AgentConfig& c, Rng& rng) : side_(c.patch_side), channels_(c.channels), pixel_mean_(c.pixel_mean), pixel_std_(c.pixel_std)
{
    const std::size_t h = sz(c.hidden);
    convs_.emplace_back(sz(c.channels), sz(c.conv1), 3, 2, 1, rng);
    convs_.emplace_back(sz(c.conv1), sz(c.conv2), 3, 2, 1, rng);
    std::size_t s = sz(c.patch_side);
    for (int i = 0; i < 2; ++i) s = (s + 2 - 3) / 2 + 1;
    conv_out_ = nn::Linear(s * s * sz(c.conv2), h, rng);
    coord_mlp_ = nn::Mlp({3, h, h, h}, rng);
    importance_mlp_ = nn::Mlp({1, h, h, h}, rng);
    latent_mlp_ = nn::Mlp({sz(c.latent_dim), h, h, h}, rng);
    null_token_ = Var::parameter(randn({1, 4 * h}, rng, 0.02));
    pool_ = nn::AttentionPool(4 * h, h, sz(c.pool_heads), rng);
}

Var StateEncoder::patch_features(const Tensor& patches) const
{
    const std::size_t n = patches.rows();
    Tensor centered = patches;
    const double inv = 1.0 / pixel_std_;
    for (double& v : centered.values()) v = (v - pixel_mean_) * inv;
    Var x = ag::constant(std::move(centered));
    std::size_t s = sz(side_);
    for (const auto& conv : convs_) {
        x = ag::gelu(conv(x, n, s, s));
        s = (s + 2 - 3) / 2 + 1;
    }
    return ag::gelu(conv_out_(x));
}

Var StateEncoder::operator()(const StateBatch& b) const
{
    const Var null_rows = ag::repeat_rows(null_token_, b.batch);
    nn::SequenceLayout layout;
    layout.batch = b.batch;
    layout.length = b.slots + 1;
    layout.mask.assign(b.batch * layout.length, 1);
    if (b.slots == 0) return pool_(null_rows, layout);

    // Rollout importances sum to about one over the observed patches; rescale
    // by the count so the MLP sees values of order one at any episode length.
    Tensor imp = b.importances;
    for (std::size_t i = 0; i < b.batch; ++i) {
        double count = 0.0;
        for (std::size_t k = 0; k < b.slots; ++k) count += b.mask[i * b.slots + k] ? 1.0 : 0.0;
        for (std::size_t k = 0; k < b.slots; ++k) imp[i * b.slots + k] *= count;
    }
    const Var tokens = ag::concat_cols({patch_features(b.patches), coord_mlp_(ag::constant(b.coords)),
                                        importance_mlp_(ag::constant(std::move(imp))),
                                        latent_mlp_(ag::constant(b.latents))});
    for (std::size_t i = 0; i < b.batch; ++i)
        for (std::size_t k = 0; k < b.slots; ++k) layout.mask[i * layout.length + 1 + k] = b.mask[i * b.slots + k];
    return pool_(ag::concat_seq(null_rows, tokens, b.batch), layout);
}

void StateEncoder::collect(nn::ParamList& out, const std::string& prefix) const
{
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(out, prefix + ".conv" + std::to_string(i));
    conv_out_.collect(out, prefix + ".conv_out");
    coord_mlp_.collect(out, prefix + ".coords");
    importance_mlp_.collect(out, prefix + ".importance");
    latent_mlp_.collect(out, prefix + ".latents");
    out.push_back({prefix + ".null", null_token_});
    pool_.collect(out, prefix + ".pool");
}

// ---------------------------------------------------------------------------

Var squashed_log_prob(const Var& log_std, const Tensor& noise, const Var& u)
{
    Tensor base(noise.shape());
    for (std::size_t i = 0; i < noise.size(); ++i) base[i] = -0.5 * noise[i] * noise[i] - kHalfLog2Pi;
    // log |da/du| for a = sigmoid(u) is -(softplus(u) + softplus(-u))
    const Var jac = ag::add(ag::softplus(u), ag::softplus(ag::neg(u)));
    return ag::row_sum(ag::add(ag::sub(ag::constant(std::move(base)), log_std), jac));
}

Actor::Actor(const AgentConfig& c, Rng& rng)
    : encoder_(c, rng),
      head_({sz(c.hidden), sz(c.hidden), sz(c.hidden), 6}, rng),
      log_std_min_(c.log_std_min),
      log_std_max_(c.log_std_max)
{
}

Actor::Sample Actor::operator()(const StateBatch& batch, const Tensor& noise) const
{
    const Var out = head_(encoder_(batch));
    Sample s;
    s.mean = ag::slice_cols(out, 0, 3);
    s.log_std = ag::clamp(ag::slice_cols(out, 3, 3), log_std_min_, log_std_max_);
    Tensor eps = noise.empty() ? Tensor({batch.batch, 3}) : noise;
    if (eps.rows() != batch.batch || eps.cols() != 3) throw std::invalid_argument("actor: noise must be [batch, 3]");
    const Var u = ag::add(s.mean, ag::mul(ag::exp(s.log_std), ag::constant(eps)));
    s.action = ag::sigmoid(u);
    s.log_prob = squashed_log_prob(s.log_std, eps, u);
    return s;
}

void Actor::collect(nn::ParamList& out, const std::string& prefix) const
{
    encoder_.collect(out, prefix + ".encoder");
    head_.collect(out, prefix + ".head");
}

Critic::Critic(const AgentConfig& c, Rng& rng)
    : encoder_(c, rng), head_({sz(c.hidden) + 3, sz(c.hidden), sz(c.hidden), 1}, rng)
{
}

Var Critic::q_from_embedding(const Var& embedding, const Var& action) const
{
    return head_(ag::concat_cols({embedding, action}));
}

void Critic::collect(nn::ParamList& out, const std::string& prefix) const
{
    encoder_.collect(out, prefix + ".encoder");
    head_.collect(out, prefix + ".head");
}

double compute_reward(double loss_prev, double loss_cur)
{
    if (!std::isfinite(loss_prev) || !std::isfinite(loss_cur))
        throw std::invalid_argument("compute_reward: non-finite loss");
    return loss_prev - loss_cur;
}

// ---------------------------------------------------------------------------

SacAgent::SacAgent(const AgentConfig& config, std::uint64_t seed) : config_(config)
{
    config_.validate();
    Rng rng(seed);
    actor_ = Actor(config_, rng);
    critic1_ = Critic(config_, rng);
    critic2_ = Critic(config_, rng);
    target1_ = Critic(config_, rng);
    target2_ = Critic(config_, rng);
    log_alpha_ = Var::parameter(Tensor::scalar(std::log(config_.init_alpha)));
    nn::ParamList c1, c2, t1, t2;
    critic1_.collect(c1, "c");
    critic2_.collect(c2, "c");
    target1_.collect(t1, "c");
    target2_.collect(t2, "c");
    nn::copy_values(c1, t1);
    nn::copy_values(c2, t2);

    optim::AdamWOptions opts;
    opts.weight_decay = 0.0;
    actor_opt_ = optim::AdamW(actor_params(), opts);
    critic_opt_ = optim::AdamW(critic_params(), opts);
    alpha_opt_ = optim::AdamW({{"log_alpha", log_alpha_}}, opts);
}

nn::ParamList SacAgent::actor_params() const
{
    nn::ParamList p;
    actor_.collect(p, "actor");
    return p;
}

nn::ParamList SacAgent::critic_params() const
{
    nn::ParamList p;
    critic1_.collect(p, "critic1");
    critic2_.collect(p, "critic2");
    return p;
}

nn::ParamList SacAgent::target_params() const
{
    nn::ParamList p;
    target1_.collect(p, "target1");
    target2_.collect(p, "target2");
    return p;
}

nn::ParamList SacAgent::all_params() const
{
    nn::ParamList p = actor_params();
    for (auto& e : critic_params()) p.push_back(e);
    for (auto& e : target_params()) p.push_back(e);
    p.push_back({"log_alpha", log_alpha_});
    return p;
}

double SacAgent::alpha() const { return std::exp(log_alpha_.item()); }

void SacAgent::set_alpha(double alpha)
{
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
    log_alpha_.mutable_value()[0] = alpha > 0.0 ? std::log(alpha) : -std::numeric_limits<double>::infinity();
}

PolicyOutput SacAgent::act(std::span<const AgentState* const> states, bool deterministic, Rng& rng) const
{
    ag::NoGradGuard guard;
    const StateBatch b = collate_states(states);
    const Tensor noise = deterministic ? Tensor() : normal_noise(b.batch, rng);
    const auto s = actor_(b, noise);
    PolicyOutput out{s.mean.value(), s.log_std.value(), s.action.value(), s.log_prob.value()};
    // Far tails of the logistic map round to exactly 0 or 1 in double precision.
    for (double& v : out.action.values()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

Tensor SacAgent::critic_target(const std::vector<Transition>& batch, const Tensor& next_noise) const
{
    if (batch.empty()) throw std::invalid_argument("critic_target: empty batch");
    ag::NoGradGuard guard;
    const StateBatch next = collate_side(batch, true);
    const auto s = actor_(next, next_noise);
    const Var q1 = target1_(next, s.action);
    const Var q2 = target2_(next, s.action);
    const double a = alpha();
    Tensor y({batch.size(), 1});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double v = std::min(q1.value()[i], q2.value()[i]) - (a > 0.0 ? a * s.log_prob.value()[i] : 0.0);
        y[i] = batch[i].reward + (batch[i].done ? 0.0 : config_.gamma * v);
    }
    return y;
}

SacStats SacAgent::update(const std::vector<Transition>& batch, Rng& rng)
{
    const Tensor next_noise = normal_noise(batch.size(), rng);
    const Tensor actor_noise = normal_noise(batch.size(), rng);
    return update(batch, next_noise, actor_noise);
}

SacStats SacAgent::update(const std::vector<Transition>& batch, const Tensor& next_noise, const Tensor& actor_noise)
{
    if (batch.empty()) throw std::invalid_argument("sac update: empty batch");
    SacStats stats;
    const Tensor y = critic_target(batch, next_noise);
    const StateBatch cur = collate_side(batch, false);
    const Var actions = ag::constant(actions_tensor(batch));
    const Var target = ag::constant(y);

    const nn::ParamList cparams = critic_params();
    const nn::ParamList aparams = actor_params();

    {
        const Var q1 = critic1_(cur, actions);
        const Var q2 = critic2_(cur, actions);
        const Var loss = ag::add(ag::mean(ag::square(ag::sub(q1, target))), ag::mean(ag::square(ag::sub(q2, target))));
        stats.critic_loss = loss.item();
        double qm = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i) qm += 0.5 * (q1.value()[i] + q2.value()[i]);
        stats.q_mean = qm / static_cast<double>(batch.size());
        critic_opt_.zero_grad();
        loss.backward();
        optim::clip_grad_norm(cparams, config_.grad_clip);
        critic_opt_.step(config_.critic_lr);
    }

    Tensor log_prob;
    {
        Var e1, e2;
        {
            ag::NoGradGuard guard;
            e1 = critic1_.embed(cur);
            e2 = critic2_.embed(cur);
        }
        const auto s = actor_(cur, actor_noise);
        const Var q = ag::minimum(critic1_.q_from_embedding(e1, s.action), critic2_.q_from_embedding(e2, s.action));
        const Var loss = ag::mean(ag::sub(ag::scale(s.log_prob, alpha()), q));
        stats.actor_loss = loss.item();
        actor_opt_.zero_grad();
        loss.backward();
        optim::clip_grad_norm(aparams, config_.grad_clip);
        actor_opt_.step(config_.actor_lr);
        // the actor loss also reaches the critic heads; those gradients are discarded
        critic_opt_.zero_grad();
        log_prob = s.log_prob.value();
    }

    double lp = 0.0;
    for (double v : log_prob.values()) lp += v;
    lp /= static_cast<double>(log_prob.size());
    stats.log_prob_mean = lp;
    if (config_.auto_alpha) {
        // d/d(log_alpha) of mean(-log_alpha * (log_prob + target_entropy))
        stats.alpha_loss = -log_alpha_.item() * (lp + config_.target_entropy);
        alpha_opt_.zero_grad();
        log_alpha_.mutable_grad()[0] = -(lp + config_.target_entropy);
        alpha_opt_.step(config_.alpha_lr);
        ensure(std::isfinite(log_alpha_.item()), "entropy temperature became non-finite");
    }
    stats.alpha = alpha();

    nn::ParamList c1, c2, t1, t2;
    critic1_.collect(c1, "c");
    critic2_.collect(c2, "c");
    target1_.collect(t1, "c");
    target2_.collect(t2, "c");
    nn::soft_update(c1, t1, config_.tau);
    nn::soft_update(c2, t2, config_.tau);
    ++updates_;
    return stats;
}

void SacAgent::save_optimizers(std::ostream& os) const
{
    actor_opt_.save(os);
    critic_opt_.save(os);
    alpha_opt_.save(os);
    io::write_u64(os, static_cast<std::uint64_t>(updates_));
}

void SacAgent::load_optimizers(std::istream& is)
{
    actor_opt_.load(is);
    critic_opt_.load(is);
    alpha_opt_.load(is);
    updates_ = static_cast<long>(io::read_u64(is));
}

} // namespace ave::agent

#include "ave/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ave/core/checkpoint.hpp"
#include "ave/core/error.hpp"

namespace ave::train {

namespace {

enum Stream : std::uint64_t {
    kData = 1,
    kAugment,
    kPolicy,
    kUpdate,
    kPretrain,
    kEval,
    kModelInit = 10,
    kAgentInit,
    kTrainScenes = 20,
    kValScenes,
    kTestScenes,
    kSplit
};

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

nlohmann::json run_architecture(const Model& model, const agent::SacAgent& agent)
{
    return {{"model", model.architecture()}, {"agent", agent.config().architecture()}};
}

int class_count(const env::Dataset& a, const env::Dataset& b)
{
    int n = std::max(a.num_classes, b.num_classes);
    for (const env::Dataset* d : {&a, &b})
        for (const auto& s : d->scenes)
            if (s->label) n = std::max(n, *s->label + 1);
    return n;
}

} // namespace

// ---------------------------------------------------------------------------

DataSplits load_data(const TrainConfig& cfg)
{
    DataSplits d;
    if (cfg.dataset == "digits") {
        env::DigitSceneOptions o;
        o.size = cfg.image_size;
        o.min_height = cfg.digit_min_height;
        o.max_height = cfg.digit_max_height;
        o.noise = cfg.noise;
        o.count = cfg.train_count;
        o.seed = derive_seed(cfg.seed, kTrainScenes);
        d.train = env::make_digit_scenes(o);
        o.count = std::max<std::size_t>(cfg.val_count, 1);
        o.seed = derive_seed(cfg.seed, kValScenes);
        d.val = env::make_digit_scenes(o);
        o.count = cfg.test_count;
        o.seed = derive_seed(cfg.seed, kTestScenes);
        d.test = env::make_digit_scenes(o);
        return d;
    }
    const std::optional<std::filesystem::path> labels =
        cfg.labels_csv.empty() ? std::nullopt : std::optional<std::filesystem::path>(cfg.labels_csv);
    env::Dataset all = env::load_image_directory(cfg.data_dir, labels, cfg.image_size);
    if (!cfg.test_dir.empty()) {
        const std::optional<std::filesystem::path> tl = cfg.test_labels_csv.empty()
                                                            ? std::nullopt
                                                            : std::optional<std::filesystem::path>(cfg.test_labels_csv);
        d.test = env::load_image_directory(cfg.test_dir, tl, cfg.image_size);
    } else {
        auto [rest, test] = env::split_dataset(all, 0.8, derive_seed(cfg.seed, kSplit));
        all = std::move(rest);
        d.test = std::move(test);
    }
    const double val_fraction =
        std::clamp(static_cast<double>(cfg.val_count) / static_cast<double>(std::max<std::size_t>(all.size(), 1)), 0.0,
                   0.5);
    auto [train, val] = env::split_dataset(all, 1.0 - val_fraction, derive_seed(cfg.seed, kSplit + 1));
    d.train = std::move(train);
    d.val = std::move(val);
    if (d.val.empty()) d.val = d.test;
    return d;
}

// ---------------------------------------------------------------------------

nlohmann::json EvalMetrics::to_json() const
{
    nlohmann::json j{{"policy", policy},
                     {"mode", mode},
                     {"episodes", episodes},
                     {"loss", loss},
                     {"mean_glimpses", mean_glimpses},
                     {"pixel_percent", pixel_percent}};
    if (classification) j["accuracy"] = accuracy;
    else j["rmse"] = rmse;
    return j;
}

EvalMetrics evaluate(const Model& model, GlimpsePolicy& policy, const env::Dataset& data,
                     const env::CameraConfig& camera, const EvalOptions& options, std::vector<EpisodeResult>* episodes)
{
    if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
    Rng rng(options.seed);
    RolloutOptions ro;
    ro.max_steps = options.max_steps;
    ro.stopping = options.stopping;
    ro.threshold = options.threshold;
    ro.drop_pixels = options.drop_pixels;

    EvalMetrics m;
    m.policy = policy.name();
    m.mode = options.stopping ? "stopping" : "fixed";
    m.classification = model.task() == heads::TaskKind::classification;
    double correct = 0.0, rmse = 0.0, loss = 0.0, glimpses = 0.0, pixels = 0.0;
    for (std::size_t start = 0; start < data.size(); start += options.batch) {
        const std::size_t end = std::min(data.size(), start + options.batch);
        const std::span<const env::ScenePtr> scenes(data.scenes.data() + start, end - start);
        RolloutBatch batch = run_episodes(model, policy, scenes, camera, ro, rng);
        for (auto& ep : batch.episodes) {
            correct += ep.outcome.correct ? 1.0 : 0.0;
            rmse += ep.outcome.rmse;
            loss += ep.outcome.loss;
            const std::size_t n = ep.record.captures.size();
            glimpses += static_cast<double>(n);
            pixels += env::pixel_percentage(n, camera.d_cam, ep.record.scene_height, ep.record.scene_width);
            if (episodes) episodes->push_back(std::move(ep));
        }
    }
    const double n = static_cast<double>(data.size());
    m.episodes = data.size();
    m.accuracy = 100.0 * correct / n;
    m.rmse = rmse / n;
    m.loss = loss / n;
    m.mean_glimpses = glimpses / n;
    m.pixel_percent = pixels / n;
    return m;
}

// ---------------------------------------------------------------------------

nlohmann::json EpochMetrics::to_json() const
{
    return {{"epoch", epoch},
            {"phase", phase},
            {"lr", lr},
            {"train_loss", train_loss},
            {"train_accuracy", train_accuracy},
            {"mean_return", mean_return},
            {"critic_loss", critic_loss},
            {"actor_loss", actor_loss},
            {"alpha", alpha},
            {"episodes", episodes},
            {"transitions", transitions},
            {"updates", updates},
            {"evaluated", evaluated},
            {"val_metric", val_metric},
            {"val_loss", val_loss},
            {"seconds", seconds}};
}

std::vector<std::string> EpochMetrics::csv_header()
{
    return {"epoch",   "phase",       "lr",      "train_loss", "train_accuracy", "mean_return",
            "critic_loss", "actor_loss", "alpha", "episodes",   "transitions",    "updates",
            "evaluated", "val_metric", "val_loss", "seconds"};
}

std::vector<std::string> EpochMetrics::csv_row() const
{
    return {std::to_string(epoch),     phase,           fmt(lr),
            fmt(train_loss),           fmt(train_accuracy), fmt(mean_return),
            fmt(critic_loss),          fmt(actor_loss),  fmt(alpha),
            std::to_string(episodes),  std::to_string(transitions), std::to_string(updates),
            evaluated ? "1" : "0",     fmt(val_metric),  fmt(val_loss),
            fmt(seconds)};
}

RunLog::RunLog(std::string config_hash, nlohmann::json config) : hash_(std::move(config_hash)), config_(std::move(config))
{
}

void RunLog::append(const EpochMetrics& m) { epochs_.push_back(m); }

void RunLog::add_sample(nlohmann::json record) { samples_.push_back(std::move(record)); }

double RunLog::wall_seconds() const { return seconds_since(start_); }

nlohmann::json RunLog::to_json() const
{
    nlohmann::json j{{"config_hash", hash_}, {"config", config_}, {"wall_seconds", wall_seconds()}};
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : epochs_) j["epochs"].push_back(e.to_json());
    j["samples"] = samples_;
    return j;
}

void RunLog::write_json(const std::filesystem::path& path) const
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json().dump(2) << '\n';
}

void RunLog::write_csv(const std::filesystem::path& path) const
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    };
    line(EpochMetrics::csv_header());
    for (const auto& e : epochs_) line(e.csv_row());
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, env::Dataset train, env::Dataset val)
    : cfg_(std::move(cfg)), train_(std::move(train)), val_(std::move(val))
{
    cfg_.finalize();
    if (train_.empty()) throw std::invalid_argument("trainer: empty training set");
    const auto& first = *train_.scenes.front();
    cfg_.encoder.channels = first.channels();
    cfg_.finalize();
    camera_ = cfg_.camera(first.height(), first.width());
    for (const auto& s : train_.scenes) camera_.validate_for(*s);

    model_ = Model(cfg_.encoder, cfg_.task, class_count(train_, val_), cfg_.decoder, first.height(), first.width(),
                   derive_seed(cfg_.seed, kModelInit));
    agent_ = agent::SacAgent(cfg_.agent, derive_seed(cfg_.seed, kAgentInit));
    replay_ = std::make_unique<agent::ReplayBuffer>(cfg_.agent.replay_capacity,
                                                    static_cast<std::size_t>(camera_.patches_per_glimpse()));
    optim::AdamWOptions opts;
    opts.weight_decay = cfg_.weight_decay;
    backbone_opt_ = optim::AdamW(model_.params(), opts);
    pretrain_opt_ = optim::AdamW(model_.params(), opts);
    data_rng_.seed(derive_seed(cfg_.seed, kData));
    augment_rng_.seed(derive_seed(cfg_.seed, kAugment));
    policy_rng_.seed(derive_seed(cfg_.seed, kPolicy));
    update_rng_.seed(derive_seed(cfg_.seed, kUpdate));
    pretrain_rng_.seed(derive_seed(cfg_.seed, kPretrain));
    log_ = RunLog(cfg_.hash(), cfg_.to_json());
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t count)
{
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), data_rng_);
    if (count > 0) {
        // cycle through the shuffled set when more episodes than scenes are asked for
        std::vector<std::size_t> out;
        out.reserve(count);
        while (out.size() < count) {
            for (std::size_t i : order) {
                if (out.size() == count) break;
                out.push_back(i);
            }
            std::shuffle(order.begin(), order.end(), data_rng_);
        }
        return out;
    }
    return order;
}

env::ScenePtr Trainer::maybe_augment(const env::ScenePtr& scene)
{
    if (!cfg_.augment) return scene;
    env::AugmentOptions o;
    o.flip = cfg_.flip;
    o.min_crop_scale = cfg_.min_crop_scale;
    return std::make_shared<const env::SceneImage>(env::augment(*scene, o, augment_rng_));
}

long Trainer::backbone_steps_total() const
{
    const std::size_t episodes = cfg_.episodes_per_epoch > 0 ? cfg_.episodes_per_epoch : train_.size();
    const long per_epoch = static_cast<long>((episodes + cfg_.batch - 1) / static_cast<std::size_t>(cfg_.batch));
    long epochs = 0;
    for (int e = 0; e < cfg_.epochs; ++e) epochs += schedule(e, cfg_).train_backbone ? 1 : 0;
    return std::max(1L, epochs * per_epoch);
}

double Trainer::backbone_lr(long step) const
{
    return optim::cosine_lr(step, backbone_steps_total(), cfg_.effective_backbone_lr(), cfg_.cosine_floor);
}

EpochMetrics Trainer::pretrain_epoch(int epoch)
{
    const auto t0 = std::chrono::steady_clock::now();
    EpochMetrics m;
    m.epoch = epoch;
    m.phase = "pretrain";
    const auto order = epoch_order(0);
    const long per_epoch = static_cast<long>((order.size() + cfg_.batch - 1) / static_cast<std::size_t>(cfg_.batch));
    const long total = std::max(1L, per_epoch * cfg_.pretrain_epochs);
    const nn::ParamList params = model_.params();
    const auto patch_dim = static_cast<std::size_t>(cfg_.encoder.patch_dim());
    const bool classify = model_.task() == heads::TaskKind::classification;
    double loss_sum = 0.0, correct = 0.0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch));
        std::vector<env::ScenePtr> scenes;
        std::vector<backbone::PatchBundle> bundles;
        for (std::size_t k = start; k < end; ++k) {
            scenes.push_back(maybe_augment(train_.scenes[order[k]]));
            const int count = std::uniform_int_distribution<int>(1, cfg_.pretrain_glimpses)(pretrain_rng_);
            backbone::PatchBundle b = backbone::PatchBundle::empty(patch_dim);
            for (int g = 0; g < count; ++g) {
                const env::GlimpseAction a{uniform01(pretrain_rng_), uniform01(pretrain_rng_), uniform01(pretrain_rng_)};
                const auto cap = env::capture_glimpse(*scenes.back(), a, camera_, g + 1);
                b.append(backbone::split_glimpse(cap, scenes.back()->height(), scenes.back()->width(), camera_));
            }
            bundles.push_back(std::move(b));
        }
        std::vector<const backbone::PatchBundle*> bp;
        std::vector<const env::SceneImage*> sp;
        for (std::size_t i = 0; i < bundles.size(); ++i) {
            bp.push_back(&bundles[i]);
            sp.push_back(scenes[i].get());
        }
        const auto out = model_.forward(bp);
        const auto targets = model_.targets(sp);
        const Var per = model_.loss_per_sample(out.prediction, targets);
        const Var loss = ag::mean(per);
        if (classify) {
            for (std::size_t b = 0; b < bundles.size(); ++b) {
                const auto row = out.prediction.value().row(b);
                correct += (std::max_element(row.begin(), row.end()) - row.begin()) == targets.labels[b] ? 1.0 : 0.0;
            }
        }
        loss_sum += loss.item() * static_cast<double>(bundles.size());
        m.lr = optim::cosine_lr(pretrain_step_, total, cfg_.effective_pretrain_lr(), cfg_.cosine_floor);
        pretrain_opt_.zero_grad();
        loss.backward();
        optim::clip_grad_norm(params, cfg_.grad_clip);
        pretrain_opt_.step(m.lr);
        ++pretrain_step_;
    }
    m.episodes = order.size();
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_accuracy = 100.0 * correct / static_cast<double>(order.size());
    m.seconds = seconds_since(t0);
    log_.append(m);
    return m;
}

void Trainer::pretrain()
{
    for (int e = 0; e < cfg_.pretrain_epochs; ++e) pretrain_epoch(e);
}

EpochMetrics Trainer::agent_epoch(int epoch)
{
    const auto t0 = std::chrono::steady_clock::now();
    EpochMetrics m;
    m.epoch = epoch;
    m.phase = "agent";
    const auto order = epoch_order(cfg_.episodes_per_epoch);
    SacPolicy policy(agent_, false);
    RolloutOptions ro;
    ro.max_steps = cfg_.T;
    ro.collect_transitions = true;
    ro.drop_pixels = true;
    double ret = 0.0, final_loss = 0.0, correct = 0.0, critic = 0.0, actor = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch));
        std::vector<env::ScenePtr> scenes;
        for (std::size_t k = start; k < end; ++k) scenes.push_back(train_.scenes[order[k]]);
        RolloutBatch batch = run_episodes(model_, policy, scenes, camera_, ro, policy_rng_);
        for (const auto& ep : batch.episodes) {
            ret += ep.record.losses.front() - ep.record.losses.back();
            final_loss += ep.outcome.loss;
            correct += ep.outcome.correct ? 1.0 : 0.0;
        }
        for (auto& t : batch.transitions) replay_->push(std::move(t));
        m.transitions += batch.transitions.size();
        if (replay_->size() < cfg_.replay_warmup) continue;
        update_credit_ += cfg_.updates_per_transition * static_cast<double>(batch.transitions.size());
        while (update_credit_ >= 1.0) {
            update_credit_ -= 1.0;
            const auto sample = replay_->sample(static_cast<std::size_t>(cfg_.agent.batch), update_rng_);
            const agent::SacStats st = agent_.update(sample, update_rng_);
            ensure(st.alpha > 0.0 && std::isfinite(st.alpha), "entropy temperature left (0, inf)");
            critic += st.critic_loss;
            actor += st.actor_loss;
            ++m.updates;
        }
    }
    const double n = static_cast<double>(order.size());
    m.episodes = order.size();
    m.mean_return = ret / n;
    m.train_loss = final_loss / n;
    m.train_accuracy = 100.0 * correct / n;
    if (m.updates > 0) {
        m.critic_loss = critic / static_cast<double>(m.updates);
        m.actor_loss = actor / static_cast<double>(m.updates);
    }
    m.alpha = agent_.alpha();
    m.seconds = seconds_since(t0);
    return m;
}

EpochMetrics Trainer::backbone_epoch(int epoch)
{
    const auto t0 = std::chrono::steady_clock::now();
    EpochMetrics m;
    m.epoch = epoch;
    m.phase = "backbone";
    const auto order = epoch_order(cfg_.episodes_per_epoch);
    SacPolicy policy(agent_, !cfg_.stochastic_backbone_rollouts);
    RolloutOptions ro;
    ro.max_steps = cfg_.T;
    ro.drop_pixels = true;
    const nn::ParamList params = model_.params();
    const bool classify = model_.task() == heads::TaskKind::classification;
    double loss_sum = 0.0, correct = 0.0, ret = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch));
        std::vector<env::ScenePtr> scenes;
        for (std::size_t k = start; k < end; ++k) scenes.push_back(maybe_augment(train_.scenes[order[k]]));
        const RolloutBatch batch = run_episodes(model_, policy, scenes, camera_, ro, policy_rng_);

        // gradients only at the final step, over every glimpse of the episode
        std::vector<const backbone::PatchBundle*> bp;
        std::vector<const env::SceneImage*> sp;
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            bp.push_back(&batch.episodes[i].bundle);
            sp.push_back(scenes[i].get());
            ret += batch.episodes[i].record.losses.front() - batch.episodes[i].record.losses.back();
        }
        const auto out = model_.forward(bp);
        const auto targets = model_.targets(sp);
        const Var loss = ag::mean(model_.loss_per_sample(out.prediction, targets));
        if (classify) {
            for (std::size_t b = 0; b < scenes.size(); ++b) {
                const auto row = out.prediction.value().row(b);
                correct += (std::max_element(row.begin(), row.end()) - row.begin()) == targets.labels[b] ? 1.0 : 0.0;
            }
        }
        loss_sum += loss.item() * static_cast<double>(scenes.size());
        m.lr = backbone_lr(backbone_step_);
        backbone_opt_.zero_grad();
        loss.backward();
        optim::clip_grad_norm(params, cfg_.grad_clip);
        backbone_opt_.step(m.lr);
        ++backbone_step_;
    }
    const double n = static_cast<double>(order.size());
    m.episodes = order.size();
    m.train_loss = loss_sum / n;
    m.train_accuracy = 100.0 * correct / n;
    m.mean_return = ret / n;
    m.alpha = agent_.alpha();
    m.seconds = seconds_since(t0);
    return m;
}

EvalMetrics Trainer::validate() const
{
    SacPolicy policy(agent_, true);
    EvalOptions o;
    o.max_steps = cfg_.T;
    o.seed = derive_seed(cfg_.seed, kEval);
    return evaluate(model_, policy, val_, camera_, o);
}

EpochMetrics Trainer::train_epoch(int epoch)
{
    const Phase phase = schedule(epoch, cfg_);
    EpochMetrics m = phase.train_backbone ? backbone_epoch(epoch) : agent_epoch(epoch);
    if (!val_.empty() && cfg_.eval_every > 0 &&
        (static_cast<std::size_t>(epoch + 1) % cfg_.eval_every == 0 || epoch + 1 == cfg_.epochs)) {
        const EvalMetrics v = validate();
        m.evaluated = true;
        m.val_metric = v.metric();
        m.val_loss = v.loss;
    }
    next_epoch_ = epoch + 1;
    log_.append(m);
    if (on_epoch_) on_epoch_(m);
    return m;
}

void Trainer::fit()
{
    double best = -std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<Tensor> best_values;
    const nn::ParamList model_params = model_.params();
    const nn::ParamList agent_params = agent_.all_params();
    auto snapshot = [&] {
        best_values.clear();
        for (const auto* list : {&model_params, &agent_params})
            for (const auto& p : *list) best_values.push_back(p.var.value());
    };
    for (int epoch = next_epoch_; epoch < cfg_.epochs; ++epoch) {
        const EpochMetrics m = train_epoch(epoch);
        if (!m.evaluated) continue;
        if (m.val_metric > best) {
            best = m.val_metric;
            since_best = 0;
            if (cfg_.restore_best) snapshot();
        } else if (++since_best >= cfg_.patience) {
            stopped_early_ = true;
            break;
        }
    }
    if (cfg_.restore_best && !best_values.empty()) {
        std::size_t k = 0;
        for (const auto* list : {&model_params, &agent_params})
            for (const auto& p : *list) {
                Var v = p.var;
                v.mutable_value() = best_values[k++];
            }
    }
}

void Trainer::save(const std::filesystem::path& path, const nlohmann::json& extra_meta) const
{
    std::ostringstream bopt, popt, aopt;
    backbone_opt_.save(bopt);
    pretrain_opt_.save(popt);
    agent_.save_optimizers(aopt);
    nlohmann::json meta{{"config", cfg_.to_json()},
                        {"config_hash", cfg_.hash()},
                        {"epochs_done", next_epoch_},
                        {"backbone_step", backbone_step_},
                        {"pretrain_step", pretrain_step_},
                        {"num_classes", model_.head().num_classes()}};
    if (!extra_meta.is_null())
        for (const auto& [k, v] : extra_meta.items()) meta[k] = v;
    save_checkpoint(path, run_architecture(model_, agent_),
                    {{"encoder", model_.encoder_params()}, {"head", model_.head_params()}, {"agent", agent_.all_params()}},
                    meta, {{"backbone_optim", bopt.str()}, {"pretrain_optim", popt.str()}, {"agent_optim", aopt.str()}});
}

void Trainer::load(const std::filesystem::path& path)
{
    const CheckpointInfo info = inspect_checkpoint(path);
    load_checkpoint(path, run_architecture(model_, agent_),
                    {{"encoder", model_.encoder_params()}, {"head", model_.head_params()}, {"agent", agent_.all_params()}});
    std::istringstream bopt(read_checkpoint_blob(path, "backbone_optim"));
    backbone_opt_.load(bopt);
    std::istringstream popt(read_checkpoint_blob(path, "pretrain_optim"));
    pretrain_opt_.load(popt);
    std::istringstream aopt(read_checkpoint_blob(path, "agent_optim"));
    agent_.load_optimizers(aopt);
    next_epoch_ = info.meta.value("epochs_done", 0);
    backbone_step_ = info.meta.value("backbone_step", 0L);
    pretrain_step_ = info.meta.value("pretrain_step", 0L);
}

// ---------------------------------------------------------------------------

LoadedRun load_run(const std::filesystem::path& path)
{
    const CheckpointInfo info = inspect_checkpoint(path);
    if (!info.meta.contains("config")) throw CheckpointMismatch(path.string() + " has no stored run config");
    LoadedRun run;
    run.config = TrainConfig::from_json(info.meta.at("config"));
    run.meta = info.meta;
    const auto& arch = info.architecture.at("model");
    backbone::EncoderConfig enc = backbone::EncoderConfig::from_json(arch.at("encoder"));
    const auto& head = arch.at("head");
    const heads::TaskKind task = heads::task_from_string(head.at("task"));
    heads::DecoderConfig dec = run.config.decoder;
    if (head.contains("decoder")) dec = heads::DecoderConfig::from_json(head.at("decoder"));
    run.model = Model(enc, task, head.value("classes", 0), dec, arch.at("scene_height"), arch.at("scene_width"), 0);
    run.config.encoder = enc;
    run.config.finalize();
    run.agent = std::make_unique<agent::SacAgent>(run.config.agent, 0);
    load_checkpoint(path, run_architecture(run.model, *run.agent),
                    {{"encoder", run.model.encoder_params()},
                     {"head", run.model.head_params()},
                     {"agent", run.agent->all_params()}});
    return run;
}

Model clone_model(const Model& model)
{
    const heads::TaskHead& head = model.head();
    Model copy(model.encoder().config(), head.kind(), head.num_classes(), head.decoder().config(), model.scene_height(),
               model.scene_width(), 0);
    nn::copy_values(model.params(), copy.params());
    return copy;
}

} // namespace ave::train

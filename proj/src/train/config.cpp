#include "ave/train/config.hpp"

#include <cstdio>
#include <stdexcept>

#include "ave/core/serialize.hpp"

namespace ave::train {

Scale scale_from_string(const std::string& s)
{
    if (s == "toy") return Scale::toy;
    if (s == "desk") return Scale::desk;
    if (s == "paper") return Scale::paper;
    throw std::invalid_argument("unknown scale '" + s + "' (expected toy, desk or paper)");
}

const char* to_string(Scale s)
{
    switch (s) {
    case Scale::toy: return "toy";
    case Scale::desk: return "desk";
    case Scale::paper: return "paper";
    }
    return "?";
}

TrainConfig TrainConfig::preset(Scale scale)
{
    TrainConfig c;
    if (scale == Scale::toy) {
        c.d_cam = 16;
        c.d_patch = 8;
        c.T = 3;
        c.encoder.blocks = 3;
        c.encoder.width = 64;
        c.encoder.heads = 4;
        c.encoder.mlp_ratio = 2;
        c.encoder.frequencies = 6;
        c.encoder.pixel_mean = 0.015;
        c.encoder.pixel_std = 0.1;
        c.decoder.blocks = 1;
        c.decoder.width = 64;
        c.decoder.heads = 4;
        c.decoder.mlp_ratio = 2;
        c.agent.hidden = 32;
        c.agent.pool_heads = 4;
        c.agent.conv1 = 8;
        c.agent.conv2 = 16;
        c.agent.batch = 32;
        c.agent.actor_lr = 1e-3;
        c.agent.critic_lr = 1e-3;
        c.agent.alpha_lr = 1e-3;
        c.agent.replay_capacity = 10000;
        c.backbone_lr = 1e-3;
        c.batch = 32;
        c.epochs = 12;
        c.warmup_agent_epochs = 3;
        c.pretrain_epochs = 20;
        c.pretrain_glimpses = 6;
        c.patience = 10;
    } else if (scale == Scale::paper) {
        c.image_size = 224;
        c.epochs = 100;
        c.warmup_agent_epochs = 30;
        c.pretrain_epochs = 600;
        c.pretrain_glimpses = 196;
        c.augment = true;
        c.flip = true;
    }
    c.agent.patch_side = c.d_patch;
    c.agent.latent_dim = c.encoder.width;
    c.encoder.d_patch = c.d_patch;
    return c;
}

namespace {

struct Reader {
    const ConfigFile& f;

    void str(const char* key, std::string& v) const { v = f.get_string(key, v); }
    void integer(const char* key, int& v) const { v = static_cast<int>(f.get_int(key, v)); }
    void size(const char* key, std::size_t& v) const
    {
        const long x = f.get_int(key, static_cast<long>(v));
        if (x < 0) throw std::invalid_argument(std::string(key) + " must be non-negative");
        v = static_cast<std::size_t>(x);
    }
    void real(const char* key, double& v) const { v = f.get_double(key, v); }
    void flag(const char* key, bool& v) const { v = f.get_bool(key, v); }
};

} // namespace

TrainConfig TrainConfig::from_file(const ConfigFile& file)
{
    TrainConfig c = preset(scale_from_string(file.get_string("scale", "desk")));
    const Reader r{file};
    r.str("data.dataset", c.dataset);
    r.str("data.dir", c.data_dir);
    r.str("data.labels", c.labels_csv);
    r.str("data.test_dir", c.test_dir);
    r.str("data.test_labels", c.test_labels_csv);
    r.integer("data.image_size", c.image_size);
    r.size("data.train_count", c.train_count);
    r.size("data.val_count", c.val_count);
    r.size("data.test_count", c.test_count);
    r.integer("data.digit_min_height", c.digit_min_height);
    r.integer("data.digit_max_height", c.digit_max_height);
    r.real("data.noise", c.noise);
    r.flag("data.augment", c.augment);
    r.flag("data.flip", c.flip);
    r.real("data.min_crop_scale", c.min_crop_scale);
    c.task = heads::task_from_string(file.get_string("task", heads::to_string(c.task)));

    r.integer("camera.d_cam", c.d_cam);
    r.integer("camera.d_patch", c.d_patch);
    r.integer("camera.d_min", c.d_min);
    r.integer("camera.d_max", c.d_max);
    r.integer("camera.T", c.T);

    r.integer("encoder.blocks", c.encoder.blocks);
    r.integer("encoder.width", c.encoder.width);
    r.integer("encoder.heads", c.encoder.heads);
    r.integer("encoder.mlp_ratio", c.encoder.mlp_ratio);
    r.integer("encoder.frequencies", c.encoder.frequencies);
    r.real("encoder.pixel_mean", c.encoder.pixel_mean);
    r.real("encoder.pixel_std", c.encoder.pixel_std);
    r.integer("decoder.blocks", c.decoder.blocks);
    r.integer("decoder.width", c.decoder.width);
    r.integer("decoder.heads", c.decoder.heads);
    r.integer("decoder.mlp_ratio", c.decoder.mlp_ratio);

    r.integer("agent.hidden", c.agent.hidden);
    r.integer("agent.pool_heads", c.agent.pool_heads);
    r.integer("agent.conv1", c.agent.conv1);
    r.integer("agent.conv2", c.agent.conv2);
    r.real("agent.gamma", c.agent.gamma);
    r.real("agent.tau", c.agent.tau);
    r.real("agent.lr", c.agent.actor_lr);
    c.agent.critic_lr = c.agent.actor_lr;
    c.agent.alpha_lr = c.agent.actor_lr;
    r.real("agent.critic_lr", c.agent.critic_lr);
    r.real("agent.alpha_lr", c.agent.alpha_lr);
    r.integer("agent.batch", c.agent.batch);
    r.size("agent.replay_capacity", c.agent.replay_capacity);
    r.real("agent.target_entropy", c.agent.target_entropy);
    r.flag("agent.auto_alpha", c.agent.auto_alpha);
    r.real("agent.alpha", c.agent.init_alpha);

    r.integer("train.epochs", c.epochs);
    r.integer("train.warmup_agent_epochs", c.warmup_agent_epochs);
    r.integer("train.pretrain_epochs", c.pretrain_epochs);
    r.integer("train.pretrain_glimpses", c.pretrain_glimpses);
    r.size("train.episodes_per_epoch", c.episodes_per_epoch);
    r.integer("train.batch", c.batch);
    r.real("train.updates_per_transition", c.updates_per_transition);
    r.size("train.replay_warmup", c.replay_warmup);
    r.flag("train.stochastic_backbone_rollouts", c.stochastic_backbone_rollouts);
    r.real("train.backbone_lr", c.backbone_lr);
    r.real("train.pretrain_lr", c.pretrain_lr);
    r.real("train.weight_decay", c.weight_decay);
    r.real("train.cosine_floor", c.cosine_floor);
    r.real("train.grad_clip", c.grad_clip);
    r.integer("train.patience", c.patience);
    r.flag("train.restore_best", c.restore_best);
    r.real("eval.stop_threshold", c.stop_threshold);
    r.size("eval.every", c.eval_every);

    long seed = file.get_int("seed", static_cast<long>(c.seed));
    if (seed < 0) throw std::invalid_argument("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    r.integer("threads", c.threads);

    const auto unused = file.unused_keys();
    if (!unused.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : unused) msg += " " + k;
        throw std::invalid_argument(msg);
    }
    c.finalize();
    return c;
}

void TrainConfig::finalize()
{
    encoder.d_patch = d_patch;
    agent.patch_side = d_patch;
    agent.channels = encoder.channels;
    agent.latent_dim = encoder.width;
    agent.grad_clip = grad_clip;
    agent.pixel_mean = encoder.pixel_mean;
    agent.pixel_std = encoder.pixel_std;
    validate();
}

void TrainConfig::validate() const
{
    auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
    if (dataset != "digits" && dataset != "directory") fail("dataset must be digits or directory");
    if (dataset == "directory" && data_dir.empty()) fail("data.dir is required for a directory dataset");
    if (image_size < 1) fail("image_size must be positive");
    if (dataset == "digits" && (train_count == 0 || test_count == 0)) fail("digit dataset needs train and test scenes");
    if (d_cam < 1 || d_patch < 1) fail("d_cam and d_patch must be positive");
    if (T < 1) fail("T must be at least 1");
    if (epochs < 1) fail("epochs must be positive");
    if (warmup_agent_epochs < 0 || warmup_agent_epochs >= epochs) fail("warmup epochs W must satisfy 0 <= W < epochs");
    if (pretrain_epochs < 0 || pretrain_glimpses < 1) fail("pretraining needs a non-negative epoch count and >= 1 glimpse");
    if (batch < 1) fail("batch must be positive");
    if (!(updates_per_transition >= 0.0)) fail("updates_per_transition must be non-negative");
    if (backbone_lr < 0.0 || pretrain_lr < 0.0) fail("learning rates must be positive");
    if (!(effective_backbone_lr() > 0.0) || !(effective_pretrain_lr() > 0.0) || !(agent.actor_lr > 0.0) ||
        !(agent.critic_lr > 0.0) || !(agent.alpha_lr > 0.0))
        fail("all learning rates must be positive");
    if (weight_decay < 0.0 || cosine_floor < 0.0 || !(grad_clip > 0.0)) fail("bad optimizer settings");
    if (patience < 1) fail("patience must be positive");
    if (!(stop_threshold > 0.0 && stop_threshold <= 1.0)) fail("stop threshold must lie in (0, 1]");
    if (threads < 1) fail("threads must be positive");
    encoder.validate();
    decoder.validate();
    agent.validate();
}

double TrainConfig::effective_backbone_lr() const
{
    if (backbone_lr > 0.0) return backbone_lr;
    return task == heads::TaskKind::classification ? 1e-5 : 1e-4;
}

double TrainConfig::effective_pretrain_lr() const { return pretrain_lr > 0.0 ? pretrain_lr : effective_backbone_lr(); }

env::CameraConfig TrainConfig::camera(int height, int width) const
{
    env::CameraConfig cam = env::CameraConfig::for_scene(height, width, d_cam, d_patch);
    if (d_min > 0) cam.d_min = d_min;
    if (d_max > 0) cam.d_max = d_max;
    cam.validate();
    return cam;
}

nlohmann::json TrainConfig::to_json() const
{
    nlohmann::json j;
    j["data"] = {{"dataset", dataset},
                 {"dir", data_dir},
                 {"labels", labels_csv},
                 {"test_dir", test_dir},
                 {"test_labels", test_labels_csv},
                 {"image_size", image_size},
                 {"train_count", train_count},
                 {"val_count", val_count},
                 {"test_count", test_count},
                 {"digit_min_height", digit_min_height},
                 {"digit_max_height", digit_max_height},
                 {"noise", noise},
                 {"augment", augment},
                 {"flip", flip},
                 {"min_crop_scale", min_crop_scale}};
    j["task"] = heads::to_string(task);
    j["camera"] = {{"d_cam", d_cam}, {"d_patch", d_patch}, {"d_min", d_min}, {"d_max", d_max}, {"T", T}};
    j["encoder"] = encoder.to_json();
    j["decoder"] = decoder.to_json();
    j["agent"] = agent.to_json();
    j["train"] = {{"epochs", epochs},
                  {"warmup_agent_epochs", warmup_agent_epochs},
                  {"pretrain_epochs", pretrain_epochs},
                  {"pretrain_glimpses", pretrain_glimpses},
                  {"episodes_per_epoch", episodes_per_epoch},
                  {"batch", batch},
                  {"updates_per_transition", updates_per_transition},
                  {"replay_warmup", replay_warmup},
                  {"stochastic_backbone_rollouts", stochastic_backbone_rollouts},
                  {"backbone_lr", effective_backbone_lr()},
                  {"pretrain_lr", effective_pretrain_lr()},
                  {"weight_decay", weight_decay},
                  {"cosine_floor", cosine_floor},
                  {"grad_clip", grad_clip},
                  {"patience", patience},
                  {"restore_best", restore_best}};
    j["eval"] = {{"stop_threshold", stop_threshold}, {"every", eval_every}};
    j["seed"] = seed;
    j["threads"] = threads;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j)
{
    TrainConfig c;
    const auto& d = j.at("data");
    c.dataset = d.at("dataset");
    c.data_dir = d.at("dir");
    c.labels_csv = d.at("labels");
    c.test_dir = d.value("test_dir", std::string());
    c.test_labels_csv = d.value("test_labels", std::string());
    c.image_size = d.at("image_size");
    c.train_count = d.at("train_count");
    c.val_count = d.at("val_count");
    c.test_count = d.at("test_count");
    c.digit_min_height = d.at("digit_min_height");
    c.digit_max_height = d.at("digit_max_height");
    c.noise = d.at("noise");
    c.augment = d.at("augment");
    c.flip = d.at("flip");
    c.min_crop_scale = d.at("min_crop_scale");
    c.task = heads::task_from_string(j.at("task"));
    const auto& cam = j.at("camera");
    c.d_cam = cam.at("d_cam");
    c.d_patch = cam.at("d_patch");
    c.d_min = cam.at("d_min");
    c.d_max = cam.at("d_max");
    c.T = cam.at("T");
    c.encoder = backbone::EncoderConfig::from_json(j.at("encoder"));
    c.decoder = heads::DecoderConfig::from_json(j.at("decoder"));
    const auto& a = j.at("agent");
    c.agent.hidden = a.at("hidden");
    c.agent.pool_heads = a.at("pool_heads");
    c.agent.conv1 = a.at("conv1");
    c.agent.conv2 = a.at("conv2");
    c.agent.gamma = a.at("gamma");
    c.agent.tau = a.at("tau");
    c.agent.actor_lr = a.at("actor_lr");
    c.agent.critic_lr = a.at("critic_lr");
    c.agent.alpha_lr = a.at("alpha_lr");
    c.agent.batch = a.at("batch");
    c.agent.replay_capacity = a.at("replay_capacity");
    c.agent.target_entropy = a.at("target_entropy");
    c.agent.auto_alpha = a.at("auto_alpha");
    c.agent.init_alpha = a.at("init_alpha");
    const auto& t = j.at("train");
    c.epochs = t.at("epochs");
    c.warmup_agent_epochs = t.at("warmup_agent_epochs");
    c.pretrain_epochs = t.at("pretrain_epochs");
    c.pretrain_glimpses = t.at("pretrain_glimpses");
    c.episodes_per_epoch = t.at("episodes_per_epoch");
    c.batch = t.at("batch");
    c.updates_per_transition = t.at("updates_per_transition");
    c.replay_warmup = t.at("replay_warmup");
    c.stochastic_backbone_rollouts = t.at("stochastic_backbone_rollouts");
    c.backbone_lr = t.at("backbone_lr");
    c.pretrain_lr = t.at("pretrain_lr");
    c.weight_decay = t.at("weight_decay");
    c.cosine_floor = t.at("cosine_floor");
    c.grad_clip = t.at("grad_clip");
    c.patience = t.at("patience");
    c.restore_best = t.at("restore_best");
    c.stop_threshold = j.at("eval").at("stop_threshold");
    c.eval_every = j.at("eval").at("every");
    c.seed = j.at("seed");
    c.threads = j.at("threads");
    c.finalize();
    return c;
}

std::string TrainConfig::hash() const
{
    const std::string text = to_json().dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(io::fnv1a(text.data(), text.size())));
    return std::string(buf, 12);
}

Phase schedule(int epoch, const TrainConfig& cfg)
{
    if (epoch < 0 || epoch >= cfg.epochs)
        throw std::out_of_range("schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(cfg.epochs) + ")");
    Phase p;
    if (epoch < cfg.warmup_agent_epochs || (epoch - cfg.warmup_agent_epochs) % 2 == 1)
        p.train_agent = true;
    else
        p.train_backbone = true;
    return p;
}

} // namespace ave::train

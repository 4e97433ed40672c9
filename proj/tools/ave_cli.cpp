#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ave/core/error.hpp"
#include "ave/env/image_io.hpp"
#include "ave/eval/ablation.hpp"
#include "ave/eval/baselines.hpp"
#include "ave/eval/export.hpp"
#include "ave/eval/glimpse_map.hpp"
#include "ave/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace ave;

namespace {

struct Common {
    std::string config;
    std::string scale;
    std::vector<std::string> sets;
    long seed = -1;
    int threads = 0;
    std::string device = "cpu";
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--scale", c.scale, "preset: toy, desk or paper")->check(CLI::IsMember({"toy", "desk", "paper"}));
    app->add_option("--set", c.sets, "override, e.g. --set train.epochs=5");
    app->add_option("--seed", c.seed, "random seed");
    app->add_option("--threads", c.threads, "OpenMP threads");
    app->add_option("--device", c.device, "compute device")->check(CLI::IsMember({"cpu"}));
}

train::TrainConfig build_config(const Common& c)
{
    ConfigFile file = c.config.empty() ? ConfigFile() : ConfigFile::load(c.config);
    if (!c.scale.empty()) file.set("scale", c.scale);
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + s);
        file.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (c.seed >= 0) file.set("seed", std::to_string(c.seed));
    if (c.threads > 0) file.set("threads", std::to_string(c.threads));
    return train::TrainConfig::from_file(file);
}

void print_epoch(const train::EpochMetrics& m)
{
    std::cout << m.phase << " epoch " << m.epoch << " loss " << m.train_loss << " acc " << m.train_accuracy;
    if (m.phase != "pretrain") std::cout << " return " << m.mean_return << " alpha " << m.alpha << " updates " << m.updates;
    if (m.evaluated) std::cout << " val " << m.val_metric;
    std::cout << " (" << m.seconds << " s)" << std::endl;
}

void write_log(const train::RunLog& log, const std::string& dir, const std::string& stem)
{
    if (dir.empty()) return;
    fs::create_directories(dir);
    log.write_csv(fs::path(dir) / (stem + ".csv"));
    log.write_json(fs::path(dir) / (stem + ".json"));
}

const env::Dataset& pick_split(const train::DataSplits& d, const std::string& split)
{
    if (split == "train") return d.train;
    if (split == "val") return d.val;
    return d.test;
}

std::unique_ptr<train::GlimpsePolicy> make_policy(const std::string& name, const train::LoadedRun& run,
                                                  const env::CameraConfig& cam)
{
    if (name == "adaptive") return std::make_unique<train::SacPolicy>(*run.agent, true);
    return std::make_unique<eval::BaselinePolicy>(eval::baseline_from_string(name), cam, run.model.scene_height(),
                                                  run.model.scene_width());
}

void write_metrics(const std::vector<train::EvalMetrics>& rows, const std::string& json_path,
                   const std::string& csv_path)
{
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) j.push_back(r.to_json());
    std::cout << j.dump(2) << std::endl;
    if (!json_path.empty()) std::ofstream(json_path) << j.dump(2) << '\n';
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        out << "policy,mode,episodes,metric,loss,mean_glimpses,pixel_percent\n";
        for (const auto& r : rows)
            out << r.policy << ',' << r.mode << ',' << r.episodes << ','
                << (r.classification ? r.accuracy : r.rmse) << ',' << r.loss << ',' << r.mean_glimpses << ','
                << r.pixel_percent << '\n';
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Adaptive glimpse exploration: pretraining, training and evaluation"};
    app.require_subcommand(1);

    Common pre_c, train_c;
    std::string pre_out, pre_metrics;
    auto* pre = app.add_subcommand("pretrain", "train the backbone on random glimpses");
    add_common(pre, pre_c);
    pre->add_option("--out", pre_out, "checkpoint path")->required();
    pre->add_option("--metrics-dir", pre_metrics, "directory for CSV/JSON logs");

    std::string train_init, train_out, train_metrics;
    bool skip_pretrain = false;
    auto* tr = app.add_subcommand("train", "alternating backbone/agent training");
    add_common(tr, train_c);
    tr->add_option("--init", train_init, "start from a pretraining checkpoint")->check(CLI::ExistingFile);
    tr->add_flag("--skip-pretrain", skip_pretrain, "do not pretrain when no --init is given");
    tr->add_option("--out", train_out, "checkpoint path")->required();
    tr->add_option("--metrics-dir", train_metrics, "directory for CSV/JSON logs");

    std::string ckpt, split = "test", policy_name = "adaptive", mode = "fixed", out_json, out_csv;
    double threshold = -1.0;
    int steps = 0;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
    ev->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_option("--policy", policy_name)
        ->check(CLI::IsMember({"adaptive", "random_uniform", "raster_grid", "full_then_grid", "center"}));
    ev->add_option("--mode", mode)->check(CLI::IsMember({"fixed", "stopping", "both"}));
    ev->add_option("--threshold", threshold, "confidence threshold for stopping mode");
    ev->add_option("--steps", steps, "glimpse budget (default: T of the run)");
    ev->add_option("--out-json", out_json);
    ev->add_option("--out-csv", out_csv);

    std::string abl_ckpt, abl_split = "test", abl_out;
    auto* ab = app.add_subcommand("ablate", "state-component ablation table");
    ab->add_option("--checkpoint", abl_ckpt)->required()->check(CLI::ExistingFile);
    ab->add_option("--split", abl_split)->check(CLI::IsMember({"train", "val", "test"}));
    ab->add_option("--out", abl_out, "CSV path")->required();

    std::string vis_ckpt, vis_split = "test", vis_out, vis_policy = "adaptive";
    std::size_t vis_count = 8;
    bool vis_interp = false;
    auto* vi = app.add_subcommand("visualize", "export trajectories and average glimpse maps");
    vi->add_option("--checkpoint", vis_ckpt)->required()->check(CLI::ExistingFile);
    vi->add_option("--split", vis_split)->check(CLI::IsMember({"train", "val", "test"}));
    vi->add_option("--policy", vis_policy)
        ->check(CLI::IsMember({"adaptive", "random_uniform", "raster_grid", "full_then_grid", "center"}));
    vi->add_option("--count", vis_count, "number of exported episodes");
    vi->add_option("--out-dir", vis_out)->required();
    vi->add_flag("--interpolate", vis_interp, "fill unobserved composite pixels from neighbours");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pre) {
            const auto cfg = build_config(pre_c);
            omp_set_num_threads(cfg.threads);
            auto data = train::load_data(cfg);
            train::Trainer trainer(cfg, data.train, data.val);
            for (int e = 0; e < cfg.pretrain_epochs; ++e) print_epoch(trainer.pretrain_epoch(e));
            trainer.save(pre_out, {{"stage", "pretrain"}});
            write_log(trainer.log(), pre_metrics, "pretrain_log");
        } else if (*tr) {
            const auto cfg = build_config(train_c);
            omp_set_num_threads(cfg.threads);
            auto data = train::load_data(cfg);
            train::Trainer trainer(cfg, data.train, data.val);
            if (!train_init.empty()) {
                trainer.load(train_init);
            } else if (!skip_pretrain) {
                for (int e = 0; e < cfg.pretrain_epochs; ++e) print_epoch(trainer.pretrain_epoch(e));
            }
            trainer.set_epoch_callback(print_epoch);
            trainer.fit();
            trainer.save(train_out, {{"stage", "train"}, {"stopped_early", trainer.stopped_early()}});
            write_log(trainer.log(), train_metrics, "train_log");
        } else if (*ev) {
            const auto run = train::load_run(ckpt);
            const auto data = train::load_data(run.config);
            const auto& set = pick_split(data, split);
            const auto cam = run.config.camera(run.model.scene_height(), run.model.scene_width());
            auto policy = make_policy(policy_name, run, cam);
            train::EvalOptions o;
            o.max_steps = steps > 0 ? steps : run.config.T;
            o.seed = derive_seed(run.config.seed, 6);
            std::vector<train::EvalMetrics> rows;
            if (mode != "stopping") rows.push_back(train::evaluate(run.model, *policy, set, cam, o));
            if (mode != "fixed") {
                o.stopping = true;
                o.threshold = threshold > 0.0 ? threshold : run.config.stop_threshold;
                rows.push_back(train::evaluate(run.model, *policy, set, cam, o));
            }
            write_metrics(rows, out_json, out_csv);
        } else if (*ab) {
            const auto run = train::load_run(abl_ckpt);
            const auto data = train::load_data(run.config);
            const auto cam = run.config.camera(run.model.scene_height(), run.model.scene_width());
            const auto rows = eval::state_ablation(run.model, *run.agent, pick_split(data, abl_split), cam,
                                                   run.config.T, derive_seed(run.config.seed, 6));
            eval::write_ablation_csv(abl_out, rows);
            std::cout << std::ifstream(abl_out).rdbuf();
        } else if (*vi) {
            const auto run = train::load_run(vis_ckpt);
            const auto data = train::load_data(run.config);
            const auto& set = pick_split(data, vis_split);
            const auto cam = run.config.camera(run.model.scene_height(), run.model.scene_width());
            auto policy = make_policy(vis_policy, run, cam);
            train::EvalOptions o;
            o.max_steps = run.config.T;
            o.seed = derive_seed(run.config.seed, 6);
            o.drop_pixels = false;
            std::vector<train::EpisodeResult> episodes;
            const auto metrics = train::evaluate(run.model, *policy, set, cam, o, &episodes);
            fs::create_directories(vis_out);
            eval::ExportOptions eo;
            eo.interpolate = vis_interp;
            eo.class_names = set.class_names;
            for (std::size_t i = 0; i < std::min(vis_count, episodes.size()); ++i)
                eval::export_trajectory(episodes[i].record, set[i], cam.d_cam,
                                        fs::path(vis_out) / ("episode_" + std::to_string(i)), eo);
            std::vector<env::EpisodeRecord> records;
            for (const auto& ep : episodes) records.push_back(ep.record);
            const auto map = eval::accumulate_glimpse_map(records, run.model.scene_height(), run.model.scene_width());
            auto gray = [](const Tensor& m) { return m.reshaped({m.dim(0), m.dim(1), 1}); };
            nlohmann::json raw{{"episodes", map.episodes}, {"height", map.height}, {"width", map.width}};
            raw["overall"] = map.overall.storage();
            env::write_png(fs::path(vis_out) / "glimpse_map_avg.png", gray(eval::max_normalized(map.overall)));
            for (std::size_t t = 0; t < map.per_step.size(); ++t) {
                raw["steps"].push_back(map.per_step[t].storage());
                env::write_png(fs::path(vis_out) / ("glimpse_map_step_" + std::to_string(t + 1) + ".png"),
                               gray(eval::max_normalized(map.per_step[t])));
            }
            std::ofstream(fs::path(vis_out) / "glimpse_maps_raw.json") << raw.dump() << '\n';
            std::ofstream(fs::path(vis_out) / "metrics.json") << metrics.to_json().dump(2) << '\n';
            std::cout << metrics.to_json().dump(2) << std::endl;
        }
    } catch (const InvariantViolation& e) {
        std::cerr << "invariant violation: " << e.what() << std::endl;
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}

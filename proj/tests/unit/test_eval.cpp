#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ave/env/record_io.hpp"
#include "ave/eval/ablation.hpp"
#include "ave/eval/baselines.hpp"
#include "ave/eval/export.hpp"
#include "ave/eval/glimpse_map.hpp"

using namespace ave;
using namespace ave::eval;

namespace {

env::EpisodeRecord record_with(int h, int w, const std::vector<env::Region>& regions)
{
    env::EpisodeRecord r;
    r.scene_id = "fixture";
    r.scene_height = h;
    r.scene_width = w;
    r.losses.push_back(1.0);
    for (std::size_t i = 0; i < regions.size(); ++i) {
        env::GlimpseCapture c;
        c.region = regions[i];
        c.step_index = static_cast<int>(i) + 1;
        r.captures.push_back(c);
        r.losses.push_back(1.0 - 0.1 * static_cast<double>(i + 1));
        r.rewards.push_back(0.1);
    }
    r.stop_reason = env::StopReason::max_steps;
    return r;
}

env::SceneImage random_scene(int h, int w, int c, Rng& rng)
{
    env::SceneImage s;
    s.id = "random";
    s.pixels = rand_uniform({static_cast<std::size_t>(h), static_cast<std::size_t>(w), static_cast<std::size_t>(c)}, rng,
                            0.0, 1.0);
    return s;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

double at(const Tensor& map, int w, int y, int x) { return map[static_cast<std::size_t>(y * w + x)]; }

} // namespace

TEST_CASE("raster baseline: 224 px scene with 32 px cells has 49 placements")
{
    const env::CameraConfig cam = env::CameraConfig::for_scene(224, 224, 32, 16);
    BaselinePolicy grid(BaselineKind::raster_grid, cam, 224, 224);
    CHECK(grid.grid_rows() == 7);
    CHECK(grid.grid_cols() == 7);
    Rng rng(0);
    std::set<std::pair<int, int>> corners;
    Tensor cover({224, 224});
    for (int t = 1; t <= 49; ++t) {
        const env::Region r = env::denormalize_action(grid.action(t, rng), 224, 224, cam);
        CHECK(r.d == 32);
        CHECK(r.x == 32 * ((t - 1) % 7));
        CHECK(r.y == 32 * ((t - 1) / 7));
        corners.insert({r.x, r.y});
        kernels::accumulate_coverage(cover.data(), 224, 224, std::span(&r, 1), 1.0);
    }
    CHECK(corners.size() == 49);
    for (double v : cover.values()) CHECK(v == 1.0);
    const env::GlimpseAction wrap = grid.action(50, rng), first = grid.action(1, rng);
    CHECK(wrap.x == first.x);
    CHECK(wrap.y == first.y);
    CHECK(wrap.z == first.z);
    CHECK_THROWS_AS(grid.action(0, rng), std::invalid_argument);
}

TEST_CASE("full_then_grid starts with the whole scene, center is fixed")
{
    const env::CameraConfig cam = env::CameraConfig::for_scene(64, 64, 16, 8);
    BaselinePolicy p(BaselineKind::full_then_grid, cam, 64, 64);
    Rng rng(0);
    const env::Region full = env::denormalize_action(p.action(1, rng), 64, 64, cam);
    CHECK(full.x == 0);
    CHECK(full.y == 0);
    CHECK(full.d == 64);
    const env::Region second = env::denormalize_action(p.action(2, rng), 64, 64, cam);
    CHECK(second.x == 0);
    CHECK(second.y == 0);
    CHECK(second.d == 16);
    const env::Region third = env::denormalize_action(p.action(3, rng), 64, 64, cam);
    CHECK(third.x == 16);

    BaselinePolicy c(BaselineKind::center, cam, 64, 64, 0.25);
    const env::GlimpseAction a = c.action(4, rng);
    CHECK(a.x == 0.5);
    CHECK(a.y == 0.5);
    CHECK(a.z == 0.25);
    CHECK(baseline_from_string("random") == BaselineKind::random_uniform);
    CHECK_THROWS_AS(baseline_from_string("spiral"), std::invalid_argument);
}

TEST_CASE("random baseline stays in the unit cube")
{
    const env::CameraConfig cam = env::CameraConfig::for_scene(64, 64, 16, 8);
    BaselinePolicy p(BaselineKind::random_uniform, cam, 64, 64);
    Rng rng(11);
    double sum = 0.0;
    int violations = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const env::GlimpseAction a = p.action(1 + i % 5, rng);
        for (double v : {a.x, a.y, a.z}) {
            if (!(v >= 0.0 && v <= 1.0)) ++violations;
            sum += v;
        }
    }
    CHECK(violations == 0);
    CHECK(sum / (3.0 * n) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("glimpse map: full-scene glimpses give a uniform map of ones")
{
    std::vector<env::EpisodeRecord> recs;
    for (int i = 0; i < 5; ++i) recs.push_back(record_with(12, 10, {{0, 0, 10}, {0, 2, 10}}));
    for (auto& r : recs) r.captures.resize(1), r.losses.resize(2), r.rewards.resize(1);
    const GlimpseMap m = accumulate_glimpse_map(recs, 12, 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) CHECK(at(m.overall, 10, y, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(at(m.overall, 10, 11, 0) == 0.0);
    CHECK(m.episodes == 5);

    const Tensor norm = max_normalized(m.overall);
    CHECK(at(norm, 10, 0, 0) == doctest::Approx(1.0));
    const Tensor zero = max_normalized(Tensor({3, 3}));
    for (double v : zero.values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(accumulate_glimpse_map(recs, 10, 10), std::invalid_argument);
}

TEST_CASE("glimpse map: three-episode hand fixture on an 8x8 scene")
{
    const std::vector<env::EpisodeRecord> recs{record_with(8, 8, {{0, 0, 4}, {4, 4, 4}}), record_with(8, 8, {{0, 0, 8}}),
                                               record_with(8, 8, {{2, 2, 4}})};
    const GlimpseMap m = accumulate_glimpse_map(recs, 8, 8);
    CHECK(at(m.overall, 8, 0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(at(m.overall, 8, 3, 3) == doctest::Approx(1.0));
    CHECK(at(m.overall, 8, 5, 5) == doctest::Approx(1.0));
    CHECK(at(m.overall, 8, 7, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(at(m.overall, 8, 6, 6) == doctest::Approx(2.0 / 3.0));
    REQUIRE(m.per_step.size() == 2);
    CHECK(at(m.per_step[1], 8, 5, 5) == doctest::Approx(1.0 / 3.0));
    CHECK(at(m.per_step[1], 8, 0, 0) == 0.0);
    CHECK(at(m.per_step[0], 8, 3, 3) == doctest::Approx(1.0));

    double total = 0.0;
    for (double v : m.overall.values()) total += v;
    CHECK(total == doctest::Approx((16.0 + 16.0 + 64.0 + 16.0) / 3.0).epsilon(1e-12));
    CHECK(m.mean_value() == doctest::Approx(total / 64.0));
}

TEST_CASE("composite: no captures gives flat gray")
{
    const env::EpisodeRecord r = record_with(6, 5, {});
    const Tensor img = visible_composite(r, 3);
    CHECK(img.dim(0) == 6);
    CHECK(img.dim(1) == 5);
    for (double v : img.values()) CHECK(v == 0.5);
    const Tensor filled = visible_composite(r, 3, true);
    for (double v : filled.values()) CHECK(v == 0.5);
}

TEST_CASE("composite: exact crops paste back the scene, finer captures win")
{
    Rng rng(4);
    const env::SceneImage scene = random_scene(16, 16, 3, rng);
    const env::CameraConfig cam = env::CameraConfig::for_scene(16, 16, 8, 4);
    env::EpisodeRecord r = record_with(16, 16, {});
    r.losses = {1.0};
    r.rewards.clear();
    const env::GlimpseCapture fine = env::capture_glimpse(scene, {0.5, 0.5, 0.0}, cam, 1);
    const env::GlimpseCapture wide = env::capture_glimpse(scene, {0.0, 0.0, 1.0}, cam, 2);
    REQUIRE(fine.region.x == 4);
    REQUIRE(fine.region.d == 8);
    REQUIRE(wide.region.d == 16);

    r.captures = {fine};
    Tensor img = visible_composite(r, 3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int k = 0; k < 3; ++k) {
                const std::size_t i = static_cast<std::size_t>((y * 16 + x) * 3 + k);
                const bool inside = y >= 4 && y < 12 && x >= 4 && x < 12;
                CHECK(img[i] == (inside ? scene.pixels[i] : 0.5));
            }

    for (const auto& order : {std::vector{fine, wide}, std::vector{wide, fine}}) {
        r.captures = order;
        img = visible_composite(r, 3);
        for (int y = 4; y < 12; ++y)
            for (int x = 4; x < 12; ++x) {
                const std::size_t i = static_cast<std::size_t>((y * 16 + x) * 3);
                CHECK(img[i] == scene.pixels[i]);
            }
        CHECK(img[0] != 0.5);
    }

    r.captures = {fine};
    const Tensor filled = visible_composite(r, 3, true);
    double lo = 1.0, hi = 0.0;
    for (double v : fine.pixels.values()) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : filled.values()) {
        CHECK(v >= lo - 1e-12);
        CHECK(v <= hi + 1e-12);
    }
}

TEST_CASE("overlay marks the newest glimpse red and older ones yellow")
{
    env::SceneImage scene;
    scene.id = "gray";
    scene.pixels = Tensor({10, 10, 1}, 0.2);
    const env::EpisodeRecord r = record_with(10, 10, {{0, 0, 4}, {5, 5, 4}});
    const Tensor img = overlay(scene, r, 2);
    REQUIRE(img.dim(2) == 3);
    auto px = [&](int y, int x, int k) { return img[static_cast<std::size_t>((y * 10 + x) * 3 + k)]; };
    CHECK(px(5, 5, 0) == 1.0);
    CHECK(px(5, 5, 1) == 0.0);
    CHECK(px(8, 8, 1) == 0.0);
    CHECK(px(0, 0, 0) == 1.0);
    CHECK(px(0, 0, 1) == 1.0);
    CHECK(px(0, 0, 2) == 0.0);
    CHECK(px(3, 3, 2) == 0.0);
    CHECK(px(6, 6, 0) == 0.2);
    CHECK(px(2, 2, 1) == 0.2);

    const Tensor first = overlay(scene, r, 1);
    CHECK(first[0] == 1.0);
    CHECK(first[1] == 0.0);
    CHECK(first[static_cast<std::size_t>((5 * 10 + 5) * 3)] == 0.2);
}

TEST_CASE("trajectory export is complete and byte-stable")
{
    Rng rng(2);
    const env::SceneImage scene = random_scene(16, 16, 3, rng);
    const env::CameraConfig cam = env::CameraConfig::for_scene(16, 16, 8, 4);
    env::EpisodeRecord r = record_with(16, 16, {});
    r.captures = {env::capture_glimpse(scene, {0.0, 0.0, 1.0}, cam, 1), env::capture_glimpse(scene, {1.0, 1.0, 0.0}, cam, 2)};
    r.losses = {2.0, 1.5, 0.5};
    r.rewards = {0.5, 1.0};
    r.final_prediction.label = 3;
    r.final_prediction.probs = {0.1, 0.1, 0.1, 0.7};

    const auto base = std::filesystem::temp_directory_path() / "ave_export_test";
    std::filesystem::remove_all(base);
    ExportOptions o;
    o.class_names = {"zero", "one", "two", "three"};
    const auto a = export_trajectory(r, scene, cam.d_cam, base / "a", o);
    const auto b = export_trajectory(r, scene, cam.d_cam, base / "b", o);
    REQUIRE(a.size() == 2 + 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::filesystem::exists(a[i]));
        CHECK(slurp(a[i]) == slurp(b[i]));
    }
    const std::string cap = slurp(base / "a" / "caption.txt");
    CHECK(cap.find("prediction three") != std::string::npos);
    CHECK(cap.find("glimpses 2") != std::string::npos);
    const env::EpisodeRecord back = env::load_record(base / "a" / "record.json");
    REQUIRE(back.captures.size() == 2);
    CHECK(back.captures[1].region.x == r.captures[1].region.x);
    CHECK(back.rewards == r.rewards);
    std::filesystem::remove_all(base);
}

TEST_CASE("state ablation table has one row per component")
{
    train::TrainConfig c = train::TrainConfig::preset(train::Scale::toy);
    c.train_count = 8;
    c.val_count = 4;
    c.test_count = 12;
    c.encoder.blocks = 1;
    c.encoder.width = 16;
    c.encoder.heads = 2;
    c.agent.hidden = 8;
    c.agent.pool_heads = 2;
    c.agent.conv1 = 2;
    c.agent.conv2 = 2;
    c.finalize();
    const train::DataSplits data = train::load_data(c);
    train::Trainer t(c, data.train, data.val);

    const agent::ComponentMeans means =
        collect_component_means(t.model(), t.agent(), data.test, t.camera(), c.T, 3);
    CHECK(means.count ==
          data.test.size() * static_cast<std::size_t>(c.T * (c.T + 1) / 2 * t.camera().patches_per_glimpse()));

    const auto rows = state_ablation(t.model(), t.agent(), data.test, t.camera(), c.T, 3);
    REQUIRE(rows.size() == 5);
    CHECK(!rows[0].ablation.any());
    CHECK(rows[1].ablation.patches);
    CHECK(rows[2].ablation.coords);
    CHECK(rows[3].ablation.importance);
    CHECK(rows[4].ablation.latent);

    train::SacPolicy full(t.agent(), true);
    train::EvalOptions o;
    o.max_steps = c.T;
    o.seed = 3;
    const train::EvalMetrics ref = train::evaluate(t.model(), full, data.test, t.camera(), o);
    CHECK(rows[0].metrics.accuracy == ref.accuracy);
    CHECK(rows[0].metrics.loss == ref.loss);

    const auto path = std::filesystem::temp_directory_path() / "ave_ablation.csv";
    write_ablation_csv(path, rows);
    std::ifstream in(path);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header == "patches,coordinates,importance,latent,accuracy");
    CHECK(first.rfind("1,1,1,1,", 0) == 0);
    std::filesystem::remove(path);
}

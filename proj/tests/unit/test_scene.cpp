#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "ave/core/config.hpp"
#include "ave/core/error.hpp"
#include "ave/env/dataset.hpp"
#include "ave/env/image_io.hpp"
#include "ave/env/record_io.hpp"
#include "ave/env/scene.hpp"

using namespace ave;
using namespace ave::env;

namespace {

SceneImage constant_scene(int h, int w, double value)
{
    SceneImage s;
    s.id = "const";
    s.pixels = Tensor({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3}, value);
    return s;
}

SceneImage ramp_scene(int h, int w)
{
    SceneImage s;
    s.id = "ramp";
    s.pixels = Tensor({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                s.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] = std::fmod(0.013 * x + 0.029 * y + 0.1 * c, 1.0);
    return s;
}

CameraConfig camera(int d_cam, int d_min, int d_max)
{
    CameraConfig c;
    c.d_cam = d_cam;
    c.d_min = d_min;
    c.d_max = d_max;
    c.d_patch = d_cam;
    return c;
}

// Independent bilinear sampler: pixel-center convention, sampling clamped to the crop.
double naive_bilinear(const SceneImage& s, const Region& r, int d_cam, int i, int j, int ch)
{
    const double scale = static_cast<double>(r.d) / d_cam;
    auto coord = [&](int k, int start) {
        double p = start + (k + 0.5) * scale - 0.5;
        return std::min(std::max(p, static_cast<double>(start)), static_cast<double>(start + r.d - 1));
    };
    const double py = coord(i, r.y), px = coord(j, r.x);
    const int y0 = static_cast<int>(std::floor(py)), x0 = static_cast<int>(std::floor(px));
    const int y1 = std::min(y0 + 1, s.height() - 1), x1 = std::min(x0 + 1, s.width() - 1);
    const double fy = py - y0, fx = px - x0;
    auto at = [&](int y, int x) { return s.pixels[(static_cast<std::size_t>(y) * s.width() + x) * 3 + ch]; };
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

} // namespace

TEST_CASE("denormalize_action on the documented examples")
{
    const auto cfg = camera(32, 32, 224);
    const auto a = denormalize_action({0, 0, 1}, 224, 224, cfg);
    CHECK((a.x == 0 && a.y == 0 && a.d == 224));
    const auto b = denormalize_action({0.5, 0.5, 0}, 224, 224, cfg);
    CHECK((b.x == 96 && b.y == 96 && b.d == 32));
    const auto c = denormalize_action({1, 1, 0.5}, 224, 224, cfg);
    CHECK((c.x == 96 && c.y == 96 && c.d == 128));
}

TEST_CASE("denormalize_action rounds ties up and clamps out-of-range actions")
{
    const auto cfg = camera(2, 2, 5);
    CHECK(denormalize_action({0, 0, 0.5}, 5, 5, cfg).d == 4); // 2 + 1.5 -> 4
    const auto r = denormalize_action({1.7, -0.3, 2.0}, 5, 5, cfg);
    CHECK((r.x == 0 && r.y == 0 && r.d == 5));
}

TEST_CASE("denormalize_action rejects scenes smaller than d_min")
{
    const auto cfg = camera(32, 32, 32);
    CHECK_THROWS_AS(denormalize_action({0, 0, 0}, 31, 64, cfg), std::invalid_argument);
    CHECK_THROWS_AS(capture_glimpse(constant_scene(20, 40, 0.5), {0, 0, 0}, cfg), std::invalid_argument);
}

TEST_CASE("random actions always land inside the scene, monotone in z, exact at the edges")
{
    Rng rng(7);
    for (int trial = 0; trial < 10000; ++trial) {
        const int h = std::uniform_int_distribution<int>(16, 300)(rng);
        const int w = std::uniform_int_distribution<int>(16, 300)(rng);
        const int d_min = std::uniform_int_distribution<int>(1, 16)(rng);
        const int d_max = std::uniform_int_distribution<int>(d_min, std::min(h, w))(rng);
        const auto cfg = camera(8, d_min, d_max);
        const GlimpseAction a{uniform01(rng), uniform01(rng), uniform01(rng)};
        const Region r = denormalize_action(a, h, w, cfg);
        REQUIRE(r.x >= 0);
        REQUIRE(r.y >= 0);
        REQUIRE(r.x + r.d <= w);
        REQUIRE(r.y + r.d <= h);
        REQUIRE(r.d >= d_min);
        REQUIRE(r.d <= d_max);
        const double z2 = std::min(1.0, a.z + 0.1 * uniform01(rng));
        REQUIRE(denormalize_action({a.x, a.y, z2}, h, w, cfg).d >= r.d);
        const Region left = denormalize_action({0.0, a.y, a.z}, h, w, cfg);
        const Region right = denormalize_action({1.0, a.y, a.z}, h, w, cfg);
        REQUIRE(left.x == 0);
        REQUIRE(right.x == w - right.d);
    }
}

TEST_CASE("capture with d == d_cam is a bit-exact crop")
{
    const auto scene = ramp_scene(48, 40);
    const auto cfg = camera(16, 16, 40);
    const auto g = capture_glimpse(scene, {0.3, 0.7, 0.0}, cfg);
    REQUIRE(g.region.d == 16);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            for (int c = 0; c < 3; ++c)
                CHECK(g.pixels[(static_cast<std::size_t>(i) * 16 + j) * 3 + c] ==
                      scene.pixels[(static_cast<std::size_t>(g.region.y + i) * 40 + g.region.x + j) * 3 + c]);
}

TEST_CASE("a constant scene yields a constant capture")
{
    const auto scene = constant_scene(64, 80, 0.37);
    const auto cfg = camera(16, 8, 64);
    for (double z : {0.0, 0.3, 1.0}) {
        const auto g = capture_glimpse(scene, {0.2, 0.9, z}, cfg);
        for (double v : g.pixels.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    }
}

TEST_CASE("upscaling a checkerboard matches a naive bilinear sampler")
{
    SceneImage s = constant_scene(4, 4, 0.0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c) s.pixels[(static_cast<std::size_t>(y) * 4 + x) * 3 + c] = ((x + y) % 2) ? 1.0 : 0.0;
    const auto cfg = camera(8, 2, 4);
    for (const GlimpseAction a : {GlimpseAction{0.0, 0.0, 1.0}, GlimpseAction{0.5, 1.0, 0.5}, GlimpseAction{1.0, 0.0, 0.0}}) {
        const auto g = capture_glimpse(s, a, cfg);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j)
                for (int c = 0; c < 3; ++c)
                    CHECK(g.pixels[(static_cast<std::size_t>(i) * 8 + j) * 3 + c] ==
                          doctest::Approx(naive_bilinear(s, g.region, 8, i, j, c)).epsilon(1e-6));
    }
}

TEST_CASE("pixel percentage")
{
    CHECK(std::round(pixel_percentage(14, 32, 224, 224) * 100) / 100 == doctest::Approx(28.57));
    CHECK(std::round(pixel_percentage(12, 32, 224, 224) * 100) / 100 == doctest::Approx(24.49));
    CHECK(pixel_percentage(0, 32, 224, 224) == 0.0);
    CHECK(pixel_percentage(6, 16, 64, 64) == doctest::Approx(2 * pixel_percentage(3, 16, 64, 64)));

    const auto scene = ramp_scene(64, 64);
    const auto cfg = camera(16, 16, 64);
    std::vector<GlimpseCapture> a{capture_glimpse(scene, {0, 0, 0}, cfg), capture_glimpse(scene, {1, 1, 1}, cfg)};
    std::vector<GlimpseCapture> b{capture_glimpse(scene, {0.5, 0.2, 0.7}, cfg), capture_glimpse(scene, {0.1, 0.9, 0.3}, cfg)};
    CHECK(pixel_percentage(a, scene, cfg) == pixel_percentage(b, scene, cfg));
}

TEST_CASE("should_stop")
{
    const std::vector<double> confident{0.9, 0.1};
    CHECK(should_stop(confident, 0.85, 2, 12));
    const std::vector<double> uniform(10, 0.1);
    CHECK_FALSE(should_stop(uniform, 0.75, 1, 12));
    CHECK(should_stop(uniform, 0.75, 12, 12));
    CHECK_THROWS_AS(should_stop(confident, 0.0, 1, 12), std::invalid_argument);
    CHECK_THROWS_AS(should_stop(confident, 1.5, 1, 12), std::invalid_argument);
    const std::vector<double> bad{0.5, 0.4};
    CHECK_THROWS_AS(should_stop(bad, 0.8, 1, 12), std::invalid_argument);
}

TEST_CASE("reset and step")
{
    auto scene = std::make_shared<const SceneImage>(ramp_scene(64, 64));
    GlimpseEnv env(camera(16, 16, 64), 3);
    env.reset(scene);
    CHECK(env.history().empty());
    CHECK(env.t() == 0);
    env.reset(scene);
    CHECK(env.history().empty());
    CHECK_FALSE(env.step({0.1, 0.1, 0.1}));
    CHECK_FALSE(env.step({0.2, 0.2, 0.2}));
    CHECK(env.step({0.3, 0.3, 0.3}));
    CHECK(env.record().stop_reason == StopReason::max_steps);
    CHECK(env.history().back().step_index == 3);
    CHECK_THROWS_AS(env.step({0.3, 0.3, 0.3}), InvariantViolation);

    GlimpseEnv long_env(camera(16, 16, 64), 8);
    long_env.reset(scene);
    for (int i = 0; i < 5; ++i) long_env.step({0.5, 0.5, 0.5});
    long_env.reset(scene);
    CHECK(long_env.history().empty());
    CHECK(long_env.t() == 0);
}

TEST_CASE("the confidence rule ends an episode early")
{
    // Toy classifier: confidence in class 0 is the summed mean intensity of
    // every capture so far. On a 0.2 scene it reaches 1.0 at the fifth glimpse.
    auto scene = std::make_shared<const SceneImage>(constant_scene(64, 64, 0.2));
    GlimpseEnv env(camera(16, 16, 64), 12);
    env.reset(scene);
    double evidence = 0.0;
    int stopped_at = -1;
    for (int t = 1; t <= 12 && !env.done(); ++t) {
        env.step({0.1 * t, 0.5, 0.0});
        double mean = 0.0;
        for (double v : env.last_capture().pixels.values()) mean += v;
        evidence += mean / static_cast<double>(env.last_capture().pixels.size());
        const double p0 = std::min(1.0, evidence);
        const std::vector<double> probs{p0, 1.0 - p0};
        if (env.observe_prediction(probs, 0.95)) stopped_at = env.t();
    }
    CHECK(stopped_at == 5);
    CHECK(env.record().stop_reason == StopReason::confidence);

    GlimpseEnv strict(camera(16, 16, 64), 4);
    strict.reset(scene);
    while (!strict.done()) {
        strict.step({0.5, 0.5, 0.5});
        const std::vector<double> probs{0.99, 0.01};
        strict.observe_prediction(probs, 1.0);
    }
    CHECK(strict.t() == 4);
    CHECK(strict.record().stop_reason == StopReason::max_steps);
}

TEST_CASE("vector env steps in lockstep and skips finished episodes")
{
    std::vector<ScenePtr> scenes{std::make_shared<const SceneImage>(ramp_scene(64, 64)),
                                 std::make_shared<const SceneImage>(constant_scene(64, 64, 0.5))};
    VectorEnv venv(2, camera(16, 16, 64), 2);
    venv.reset(scenes);
    const std::vector<GlimpseAction> actions{{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}};
    venv.step(actions);
    venv.step(actions);
    CHECK(venv.all_done());
    venv.step(actions);
    CHECK(venv[0].t() == 2);
    CHECK(venv[1].history()[1].region.d == denormalize_action(actions[1], 64, 64, camera(16, 16, 64)).d);
}

TEST_CASE("episode records validate telescoping rewards and round-trip through JSON")
{
    auto scene = std::make_shared<const SceneImage>(ramp_scene(32, 32));
    GlimpseEnv env(camera(8, 8, 32), 2);
    env.reset(scene);
    env.step({0.1, 0.2, 0.3});
    env.step({0.9, 0.8, 0.7});
    EpisodeRecord r = env.record();
    r.losses = {2.0, 1.5, 0.25};
    r.rewards = {0.5, 1.25};
    r.final_prediction = {1, {0.2, 0.8}, {-1.0, 0.4}};
    CHECK_NOTHROW(r.validate());

    const EpisodeRecord back = record_from_json(record_to_json(r, true));
    CHECK(back.scene_id == r.scene_id);
    REQUIRE(back.captures.size() == 2);
    CHECK(back.captures[1].region.x == r.captures[1].region.x);
    CHECK(back.captures[1].action.z == r.captures[1].action.z);
    CHECK(max_abs_diff(back.captures[0].pixels, r.captures[0].pixels) == 0.0);
    CHECK(back.stop_reason == StopReason::max_steps);
    CHECK(back.final_prediction.probs == r.final_prediction.probs);
    CHECK(record_from_json(record_to_json(r, false)).captures[0].pixels.empty());

    r.rewards[1] = 1.0;
    CHECK_THROWS_AS(r.validate(), InvariantViolation);
}

TEST_CASE("digit scenes are deterministic, labelled and in range")
{
    DigitSceneOptions opt;
    opt.count = 20;
    opt.seed = 11;
    const auto a = make_digit_scenes(opt);
    const auto b = make_digit_scenes(opt);
    REQUIRE(a.size() == 20);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(max_abs_diff(a[i].pixels, b[i].pixels) == 0.0);
        CHECK(*a[i].label == *b[i].label);
        CHECK(*a[i].label >= 0);
        CHECK(*a[i].label < 10);
        CHECK_NOTHROW(a[i].validate(16));
    }
    opt.seed = 12;
    CHECK(max_abs_diff(make_digit_scenes(opt)[0].pixels, a[0].pixels) > 0.0);
}

TEST_CASE("rendered digits differ between classes")
{
    for (int d = 0; d < 10; ++d)
        for (int e = d + 1; e < 10; ++e)
            CHECK(max_abs_diff(render_digit_scene(d, 32, 4, 4, 21, 15, 1.0).pixels,
                               render_digit_scene(e, 32, 4, 4, 21, 15, 1.0).pixels) > 0.5);
}

TEST_CASE("png round trip and directory ingestion with labels")
{
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "ave_scene_io_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto scene = ramp_scene(20, 24);
    write_png(dir / "b.png", scene.pixels);
    write_ppm(dir / "a.ppm", constant_scene(20, 24, 0.5).pixels);
    const Tensor back = read_image(dir / "b.png");
    CHECK(back.shape() == scene.pixels.shape());
    CHECK(max_abs_diff(back, scene.pixels) <= 0.5 / 255.0 + 1e-12);

    write_png(dir / "c.png", scene.pixels);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(slurp(dir / "b.png") == slurp(dir / "c.png"));
    fs::remove(dir / "c.png");

    {
        std::ofstream csv(dir / "labels.csv");
        csv << "file,label\nb.png,cat\na.ppm,dog\n";
    }
    const auto data = load_image_directory(dir, dir / "labels.csv", 16);
    REQUIRE(data.size() == 2);
    CHECK(data[0].id == "a.ppm");
    CHECK(*data[0].label == 1);
    CHECK(*data[1].label == 0);
    CHECK(data.num_classes == 2);
    CHECK(data[0].height() == 16);
    fs::remove_all(dir);
}

TEST_CASE("config files")
{
    const auto cfg = ConfigFile::parse("# comment\nseed = 7\n[camera]\nd_cam = 16 # sensor\nflip = false\n");
    CHECK(cfg.get_int("seed", 0) == 7);
    CHECK(cfg.get_int("camera.d_cam", 0) == 16);
    CHECK_FALSE(cfg.get_bool("camera.flip", true));
    CHECK(cfg.get_double("missing", 2.5) == 2.5);
    CHECK(cfg.unused_keys().empty());
    CHECK_THROWS_AS(ConfigFile::parse("novalue\n"), std::invalid_argument);
    CHECK_THROWS_AS(ConfigFile::parse("x = abc\n").get_int("x", 0), std::invalid_argument);
}

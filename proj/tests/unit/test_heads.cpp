#include <doctest.h>

#include <cmath>

#include "ave/core/optim.hpp"
#include "ave/env/dataset.hpp"
#include "ave/heads/heads.hpp"
#include "gradcheck.hpp"

using namespace ave;
using namespace ave::heads;
using backbone::ElasticEncoder;
using backbone::EncoderConfig;
using backbone::PatchBundle;

namespace {

EncoderConfig tiny_encoder(int d_patch = 4)
{
    EncoderConfig c;
    c.blocks = 2;
    c.width = 32;
    c.heads = 4;
    c.mlp_ratio = 2;
    c.d_patch = d_patch;
    c.frequencies = 6;
    return c;
}

DecoderConfig tiny_decoder()
{
    DecoderConfig d;
    d.blocks = 1;
    d.width = 32;
    d.heads = 4;
    d.mlp_ratio = 2;
    return d;
}

PatchBundle bundle_from_scene(const env::SceneImage& scene, const env::CameraConfig& cam,
                              const std::vector<env::GlimpseAction>& actions)
{
    PatchBundle b = PatchBundle::empty(static_cast<std::size_t>(cam.d_patch * cam.d_patch * 3));
    for (const auto& a : actions)
        b.append(backbone::split_glimpse(env::capture_glimpse(scene, a, cam), scene.height(), scene.width(), cam));
    return b;
}

} // namespace

TEST_CASE("classifier is a plain affine map")
{
    Rng rng(1);
    Classifier head(4, 3, rng);
    Var bias = head.linear().bias();
    bias.mutable_value() = Tensor::from({3}, {0.1, -0.2, 0.3});
    const Var zero = ag::constant(Tensor({1, 4}));
    CHECK(head(zero).value().storage() == bias.value().storage());

    const Tensor latent = Tensor::from({1, 4}, {0.5, -1.0, 2.0, 0.25});
    const Tensor& w = head.linear().weight().value();
    const Tensor logits = head(ag::constant(latent)).value();
    for (std::size_t j = 0; j < 3; ++j) {
        double expect = bias.value()[j];
        for (std::size_t i = 0; i < 4; ++i) expect += latent[i] * w.at(i, j);
        CHECK(logits[j] == doctest::Approx(expect).epsilon(1e-12));
    }
    Var weight = head.linear().weight();
    for (double& v : weight.mutable_value().values()) v *= 3.0;
    const Tensor scaled = head(ag::constant(latent)).value();
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(scaled[j] - bias.value()[j] == doctest::Approx(3.0 * (logits[j] - bias.value()[j])).epsilon(1e-12));
}

TEST_CASE("classification head gradients match finite differences")
{
    Rng rng(2);
    Classifier head(6, 4, rng);
    nn::ParamList params;
    head.collect(params, "head");
    const Var latent = ag::constant(rand_uniform({3, 6}, rng, -1, 1));
    const std::vector<int> labels{0, 3, 1};
    CHECK(testutil::gradcheck_params([&] { return ce_loss(head(latent), labels); }, params) < 1e-3);
    CHECK(testutil::gradcheck([&](const std::vector<Var>& v) { return ce_loss(head(v[0]), labels); },
                              {latent.value()}) < 1e-3);
}

TEST_CASE("dense query grid tiles the unit square")
{
    const auto g = DenseQueryGrid::for_scene(64, 48, 8);
    CHECK(g.rows == 8);
    CHECK(g.cols == 6);
    CHECK(g.out_height() == 64);
    for (std::size_t i = 0; i < g.cells(); ++i) {
        const int r = static_cast<int>(i) / g.cols, c = static_cast<int>(i) % g.cols;
        // Cell i spans [cx - 1/(2 cols), cx + 1/(2 cols)] which must equal [c/cols, (c+1)/cols].
        CHECK(g.coords.at(i, 0) - 0.5 / g.cols == doctest::Approx(static_cast<double>(c) / g.cols));
        CHECK(g.coords.at(i, 1) + 0.5 / g.rows == doctest::Approx(static_cast<double>(r + 1) / g.rows));
    }
    const Tensor img = [] {
        Rng rng(3);
        return rand_uniform({64, 48, 3}, rng, 0, 1);
    }();
    CHECK(max_abs_diff(patches_to_image(image_to_patches(img, g).values(), g, 3), img) == 0.0);
}

TEST_CASE("dense decoder covers the full scene for any number of observed patches")
{
    Rng rng(4);
    const auto enc_cfg = tiny_encoder();
    ElasticEncoder enc(enc_cfg, rng);
    const auto grid = DenseQueryGrid::for_scene(32, 32, 4);
    DenseDecoder dec(tiny_decoder(), enc_cfg, grid, rng);
    ag::NoGradGuard guard;
    const auto empty = enc.forward(backbone::collate(PatchBundle::empty(48)));
    const Tensor out = dec(empty).value();
    CHECK(out.shape() == Shape{64, 48});
    CHECK(out.all_finite());

    env::DigitSceneOptions opt;
    opt.count = 1;
    opt.size = 32;
    opt.min_height = 10;
    opt.max_height = 14;
    const auto scene = env::make_digit_scenes(opt)[0];
    env::CameraConfig cam{16, 8, 32, 4};
    const auto b = bundle_from_scene(scene, cam, {{0.2, 0.3, 0.5}, {0.9, 0.1, 0.0}});
    const Tensor o1 = dec(enc.forward(backbone::collate(b))).value();
    CHECK(o1.size() == static_cast<std::size_t>(32 * 32 * 3));
    CHECK(max_abs_diff(o1, dec(enc.forward(backbone::collate(b))).value()) == 0.0);

    PatchBundle changed = b;
    changed.patches[5] += 0.1;
    CHECK(max_abs_diff(o1, dec(enc.forward(backbone::collate(changed))).value()) > 0.0);
}

TEST_CASE("dense decoder overfits one fully observed scene")
{
    // Frozen regression threshold: RMSE after 200 AdamW steps on one scene.
    constexpr double kOverfitRmse = 0.05;
    Rng rng(5);
    env::DigitSceneOptions opt;
    opt.count = 1;
    opt.size = 32;
    opt.seed = 6;
    opt.min_height = 12;
    opt.max_height = 16;
    const auto scene = env::make_digit_scenes(opt)[0];
    env::CameraConfig cam{16, 16, 32, 8};
    const auto enc_cfg = tiny_encoder(8);
    ElasticEncoder enc(enc_cfg, rng);
    const auto grid = DenseQueryGrid::for_scene(32, 32, 8);
    DenseDecoder dec(tiny_decoder(), enc_cfg, grid, rng);
    nn::ParamList params = enc.params();
    dec.collect(params, "decoder");
    optim::AdamW opt_w(params);
    const auto bundle = bundle_from_scene(scene, cam, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
    const auto batch = backbone::collate(bundle);
    const Tensor target = dense_target(scene, grid).reshaped({1, grid.cells() * 192});
    double rmse = 1.0;
    for (int step = 0; step < 200; ++step) {
        opt_w.zero_grad();
        const Var pred = ag::reshape(dec(enc.forward(batch)), {1, grid.cells() * 192});
        const Var loss = rmse_loss(pred, target);
        rmse = loss.item();
        loss.backward();
        opt_w.step(3e-3);
    }
    CHECK(rmse < kOverfitRmse);
}

TEST_CASE("rmse loss")
{
    const Tensor t = Tensor::from({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    CHECK(rmse_loss(ag::constant(t), t).item() == 0.0);
    Tensor shifted = t;
    for (double& v : shifted.values()) v += 0.1;
    CHECK(rmse_loss(ag::constant(shifted), t).item() == doctest::Approx(0.1).epsilon(1e-12));

    Rng rng(7);
    const Tensor a = rand_uniform({1, 50}, rng, 0, 1), b = rand_uniform({1, 50}, rng, 0, 1), c = rand_uniform({1, 50}, rng, 0, 1);
    double sq = 0.0;
    for (std::size_t i = 0; i < 50; ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    const double naive = std::sqrt(sq / 50.0);
    CHECK(rmse_loss(ag::constant(a), b).item() == doctest::Approx(naive).epsilon(1e-7));
    const double ac = rmse_loss(ag::constant(a), c).item();
    CHECK(ac <= rmse_loss(ag::constant(a), b).item() + rmse_loss(ag::constant(b), c).item() + 1e-12);
    CHECK_THROWS_AS(rmse_loss(ag::constant(a), Tensor({1, 49})), std::invalid_argument);
    CHECK(testutil::gradcheck([&](const std::vector<Var>& v) { return rmse_loss(v[0], b); }, {a}) < 1e-3);
}

TEST_CASE("cross-entropy")
{
    const std::vector<int> label{3};
    CHECK(ce_loss(ag::constant(Tensor({1, 10})), label).item() == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    Tensor peaked({1, 10});
    peaked[3] = 50.0;
    CHECK(ce_loss(ag::constant(peaked), label).item() < 1e-15);
    const Tensor l = Tensor::from({1, 3}, {1.0, 2.0, 0.5});
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
    const std::vector<int> one{1};
    CHECK(ce_loss(ag::constant(l), one).item() == doctest::Approx(-std::log(std::exp(2.0) / z)).epsilon(1e-12));
    const std::vector<int> bad{3};
    CHECK_THROWS_AS(ce_loss(ag::constant(l), bad), std::invalid_argument);
}

TEST_CASE("distillation KL")
{
    const Tensor logits = Tensor::from({1, 3}, {0.3, -0.4, 1.1});
    const auto q = softmax(logits.values());
    CHECK(distill_kl_loss(ag::constant(logits), Tensor({1, 3}, q)).item() == doctest::Approx(0.0).epsilon(1e-6));

    const Tensor onehot = Tensor::from({1, 3}, {0, 0, 1});
    const std::vector<int> label{2};
    CHECK(distill_kl_loss(ag::constant(logits), onehot).item() ==
          doctest::Approx(ce_loss(ag::constant(logits), label).item()).epsilon(1e-12));

    const Tensor p = Tensor::from({1, 3}, {0.2, 0.5, 0.3});
    double hand = 0.0;
    for (std::size_t i = 0; i < 3; ++i) hand += p[i] * std::log(p[i] / q[i]);
    const double kl = distill_kl_loss(ag::constant(logits), p).item();
    CHECK(kl == doctest::Approx(hand).epsilon(1e-12));
    CHECK(kl >= 0.0);
    CHECK_THROWS_AS(distill_kl_loss(ag::constant(logits), Tensor::from({1, 3}, {0.2, 0.5, 0.2})), std::invalid_argument);

    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor lg = rand_uniform({1, 5}, rng, -3, 3);
        const Tensor tp = Tensor({1, 5}, softmax(rand_uniform({5}, rng, -3, 3).values()));
        CHECK(distill_kl_loss(ag::constant(lg), tp).item() >= -1e-15);
    }
}

TEST_CASE("hard-label teacher and task targets")
{
    env::SceneImage s;
    s.id = "x";
    s.pixels = Tensor({8, 8, 3});
    s.label = 2;
    HardLabelTeacher teacher;
    CHECK(teacher.probs(s, 4) == std::vector<double>{0, 0, 1, 0});
    s.label = 7;
    CHECK_THROWS_AS(teacher.probs(s, 4), std::invalid_argument);
}

#include <doctest.h>

#include <cmath>

#include "ave/core/autograd.hpp"
#include "ave/core/nn.hpp"
#include "ave/core/random.hpp"
#include "gradcheck.hpp"

using namespace ave;
using ag::Var;
using Vars = std::vector<Var>;

namespace {

Tensor rnd(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
    Rng rng(seed);
    return rand_uniform(std::move(s), rng, lo, hi);
}

// Weighted sum so every output element carries a distinct gradient.
Var probe_sum(const Var& y)
{
    Tensor w(y.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.3 * static_cast<double>(i) + 0.2);
    return ag::sum(ag::mul(y, ag::constant(w)));
}

constexpr double kTol = 1e-6;

} // namespace

TEST_CASE("elementwise ops have correct gradients")
{
    const Tensor a = rnd({3, 4}, 1), b = rnd({3, 4}, 2), pos = rnd({3, 4}, 3, 0.2, 2.0);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::add(v[0], v[1])); }, {a, b}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::sub(v[0], v[1])); }, {a, b}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::mul(v[0], v[1])); }, {a, b}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::scale(v[0], -2.5)); }, {a}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::square(v[0])); }, {a}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::exp(v[0])); }, {a}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::log(v[0])); }, {pos}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::sqrt(v[0])); }, {pos}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::gelu(v[0])); }, {a}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::sigmoid(v[0])); }, {a}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::softplus(v[0])); }, {a}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::clamp(v[0], -0.5, 0.5)); }, {a}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& v) { return probe_sum(ag::minimum(v[0], v[1])); }, {a, b}) < kTol);
}

TEST_CASE("broadcast, reduction and shape ops have correct gradients")
{
    const Tensor x = rnd({4, 3}, 4), v = rnd({3}, 5), c = rnd({4, 1}, 6), r = rnd({1, 3}, 7);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::add_rowvec(p[0], p[1])); }, {x, v}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::mul_rowvec(p[0], p[1])); }, {x, v}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::mul_colvec(p[0], p[1])); }, {x, c}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::repeat_rows(p[0], 5)); }, {r}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return ag::mean(ag::square(p[0])); }, {x}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::row_sum(p[0])); }, {x}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::row_mean(p[0])); }, {x}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::reshape(p[0], {2, 6})); }, {x}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::concat_cols({p[0], p[1]})); }, {x, c}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::concat_rows({p[0], p[1]})); }, {x, r}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::slice_rows(p[0], 1, 2)); }, {x}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::slice_cols(p[0], 1, 2)); }, {x}) < kTol);
    const std::vector<std::size_t> idx{3, 0, 3, 1};
    CHECK(testutil::gradcheck([&](const Vars& p) { return probe_sum(ag::gather_rows(p[0], idx)); }, {x}) < kTol);
    const Tensor y = rnd({6, 3}, 8);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::concat_seq(p[0], p[1], 2)); }, {x, y}) < kTol);
}

TEST_CASE("concat_seq interleaves per sample")
{
    const Var a = ag::constant(Tensor::from({2, 1}, {1, 2}));
    const Var b = ag::constant(Tensor::from({4, 1}, {10, 11, 20, 21}));
    const Var c = ag::concat_seq(a, b, 2);
    CHECK(c.value().storage() == std::vector<double>{1, 10, 11, 2, 20, 21});
}

TEST_CASE("matmul, linear, layer norm and log-softmax have correct gradients")
{
    const Tensor a = rnd({3, 5}, 9), b = rnd({5, 2}, 10), bias = rnd({2}, 11);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::matmul(p[0], p[1])); }, {a, b}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::linear(p[0], p[1], p[2])); }, {a, b, bias}) < kTol);
    const Tensor x = rnd({4, 6}, 12), g = rnd({6}, 13, 0.5, 1.5), be = rnd({6}, 14);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::layer_norm(p[0], p[1], p[2])); }, {x, g, be}) < kTol);
    CHECK(testutil::gradcheck([](const Vars& p) { return probe_sum(ag::log_softmax_rows(p[0])); }, {x}) < kTol);
}

TEST_CASE("linear keeps leading dimensions")
{
    const Var x = ag::constant(Tensor({2, 3, 4}, 1.0));
    const Var w = ag::constant(Tensor({4, 5}, 0.5));
    const Var y = ag::linear(x, w, Var());
    CHECK(y.shape() == Shape{2, 3, 5});
    CHECK(y.value()[0] == doctest::Approx(2.0));
}

TEST_CASE("log-softmax rows exponentiate to a distribution")
{
    const Var y = ag::log_softmax_rows(ag::constant(rnd({3, 7}, 15, -30, 30)));
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0.0;
        for (double v : y.value().row(r)) s += std::exp(v);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("masked attention has correct gradients and ignores masked keys")
{
    const kernels::AttentionShape s{2, 3, 4, 2, 3, 0.6};
    const Tensor q = rnd({6, 6}, 16), k = rnd({8, 6}, 17), v = rnd({8, 6}, 18);
    const std::vector<unsigned char> mask{1, 1, 0, 1, 1, 0, 0, 1};
    CHECK(testutil::gradcheck([&](const Vars& p) { return probe_sum(ag::attention(p[0], p[1], p[2], s, mask)); }, {q, k, v}) <
          kTol);

    Tensor v2 = v;
    for (std::size_t c = 0; c < 6; ++c) v2.at(2, c) += 100.0;
    const Var o1 = ag::attention(ag::constant(q), ag::constant(k), ag::constant(v), s, mask);
    const Var o2 = ag::attention(ag::constant(q), ag::constant(k), ag::constant(v2), s, mask);
    CHECK(max_abs_diff(o1.value(), o2.value()) == 0.0);
}

TEST_CASE("conv2d has correct gradients")
{
    const kernels::ConvShape s{2, 5, 6, 2, 3, 2, 1};
    const Tensor x = rnd({2, 5 * 6 * 2}, 19), w = rnd({3 * 3 * 2, 3}, 20), b = rnd({3}, 21);
    CHECK(testutil::gradcheck([&](const Vars& p) { return probe_sum(ag::conv2d(p[0], p[1], p[2], s)); }, {x, w, b}) < kTol);
}

TEST_CASE("transformer block gradients pass the finite-difference check")
{
    Rng rng(22);
    nn::TransformerBlock block(8, 2, 16, rng);
    nn::ParamList params;
    block.collect(params, "block");
    const nn::SequenceLayout layout{2, 3, {1, 1, 0, 1, 1, 1}};
    const Tensor x = rnd({6, 8}, 23);
    CHECK(testutil::gradcheck([&](const Vars& v) { return probe_sum(block(v[0], layout)); }, {x}) < kTol);
    const Var xc = ag::constant(x);
    CHECK(testutil::gradcheck_params([&] { return probe_sum(block(xc, layout)); }, params, 3) < 1e-4);
}

TEST_CASE("attention pool and mlp gradients pass the finite-difference check")
{
    Rng rng(24);
    nn::AttentionPool pool(5, 8, 2, rng);
    nn::Mlp mlp({8, 6, 3}, rng);
    nn::ParamList params;
    pool.collect(params, "pool");
    mlp.collect(params, "mlp");
    const nn::SequenceLayout layout{2, 4, {1, 0, 1, 1, 1, 1, 0, 0}};
    const Var x = ag::constant(rnd({8, 5}, 25));
    CHECK(testutil::gradcheck_params([&] { return probe_sum(mlp(pool(x, layout))); }, params, 2) < 1e-4);
}

TEST_CASE("backward accumulates into leaves and clears on zero_grad")
{
    Var w = Var::parameter(Tensor::from({2}, {1.0, 2.0}));
    ag::sum(ag::square(w)).backward();
    CHECK(w.grad()[1] == doctest::Approx(4.0));
    ag::sum(ag::square(w)).backward();
    CHECK(w.grad()[1] == doctest::Approx(8.0));
    w.zero_grad();
    CHECK((!w.has_grad() || w.grad()[1] == 0.0));
}

TEST_CASE("no-grad mode records nothing")
{
    Var w = Var::parameter(Tensor::from({2}, {1.0, 2.0}));
    Var y;
    {
        ag::NoGradGuard guard;
        y = ag::sum(ag::square(w));
    }
    CHECK_FALSE(y.requires_grad());
    CHECK(ag::grad_enabled());
}

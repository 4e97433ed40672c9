#include "ave/core/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ave::nn {

std::vector<Var> vars_of(const ParamList& params)
{
    std::vector<Var> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.var);
    return out;
}

void zero_grads(const ParamList& params)
{
    for (const auto& p : params) {
        Var v = p.var;
        v.zero_grad();
    }
}

void copy_values(const ParamList& from, const ParamList& to)
{
    if (from.size() != to.size()) throw std::invalid_argument("copy_values: parameter count mismatch");
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (from[i].var.shape() != to[i].var.shape())
            throw std::invalid_argument("copy_values: shape mismatch for " + from[i].name);
        Var dst = to[i].var;
        dst.mutable_value() = from[i].var.value();
    }
}

void soft_update(const ParamList& from, const ParamList& to, double tau)
{
    if (from.size() != to.size()) throw std::invalid_argument("soft_update: parameter count mismatch");
    for (std::size_t i = 0; i < from.size(); ++i) {
        Var dst = to[i].var;
        Tensor& d = dst.mutable_value();
        const Tensor& s = from[i].var.value();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = (1.0 - tau) * d[k] + tau * s[k];
    }
}

std::size_t count_parameters(const ParamList& params)
{
    std::size_t n = 0;
    for (const auto& p : params) n += p.var.value().size();
    return n;
}

// ---------------------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool bias)
{
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    weight_ = Var::parameter(rand_uniform({in, out}, rng, -a, a));
    if (bias) bias_ = Var::parameter(Tensor::zeros({out}));
}

void Linear::collect(ParamList& out, const std::string& prefix) const
{
    out.push_back({prefix + ".weight", weight_});
    if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
}

LayerNorm::LayerNorm(std::size_t width)
    : gamma_(Var::parameter(Tensor::ones({width}))), beta_(Var::parameter(Tensor::zeros({width})))
{
}

void LayerNorm::collect(ParamList& out, const std::string& prefix) const
{
    out.push_back({prefix + ".gamma", gamma_});
    out.push_back({prefix + ".beta", beta_});
}

Mlp::Mlp(std::span<const std::size_t> widths, Rng& rng)
{
    if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers_.emplace_back(widths[i], widths[i + 1], rng);
}

Var Mlp::operator()(const Var& x) const
{
    Var h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i](h);
        if (i + 1 < layers_.size()) h = ag::gelu(h);
    }
    return h;
}

void Mlp::collect(ParamList& out, const std::string& prefix) const
{
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(out, prefix + "." + std::to_string(i));
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::size_t pad, Rng& rng)
    : in_channels_(in_channels), kernel_(kernel), stride_(stride), pad_(pad)
{
    const std::size_t fan_in = kernel * kernel * in_channels;
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + out_channels));
    weight_ = Var::parameter(rand_uniform({fan_in, out_channels}, rng, -a, a));
    bias_ = Var::parameter(Tensor::zeros({out_channels}));
}

kernels::ConvShape Conv2d::shape(std::size_t batch, std::size_t h, std::size_t w) const
{
    return {batch, h, w, in_channels_, kernel_, stride_, pad_};
}

Var Conv2d::operator()(const Var& x, std::size_t batch, std::size_t h, std::size_t w) const
{
    return ag::conv2d(x, weight_, bias_, shape(batch, h, w));
}

void Conv2d::collect(ParamList& out, const std::string& prefix) const
{
    out.push_back({prefix + ".weight", weight_});
    out.push_back({prefix + ".bias", bias_});
}

// ---------------------------------------------------------------------------

MultiHeadSelfAttention::MultiHeadSelfAttention(std::size_t width, std::size_t heads, Rng& rng)
    : qkv_(width, 3 * width, rng), proj_(width, width, rng), width_(width), heads_(heads)
{
    if (heads == 0 || width % heads != 0)
        throw std::invalid_argument("attention width " + std::to_string(width) + " not divisible by " +
                                    std::to_string(heads) + " heads");
}

Var MultiHeadSelfAttention::operator()(const Var& x, const SequenceLayout& layout, Tensor* probs) const
{
    const Var qkv = qkv_(x);
    const Var q = ag::slice_cols(qkv, 0, width_);
    const Var k = ag::slice_cols(qkv, width_, width_);
    const Var v = ag::slice_cols(qkv, 2 * width_, width_);
    const std::size_t head_dim = width_ / heads_;
    const kernels::AttentionShape shape{layout.batch, layout.length, layout.length, heads_, head_dim,
                                        1.0 / std::sqrt(static_cast<double>(head_dim))};
    return proj_(ag::attention(q, k, v, shape, layout.mask, probs));
}

void MultiHeadSelfAttention::collect(ParamList& out, const std::string& prefix) const
{
    qkv_.collect(out, prefix + ".qkv");
    proj_.collect(out, prefix + ".proj");
}

TransformerBlock::TransformerBlock(std::size_t width, std::size_t heads, std::size_t mlp_hidden, Rng& rng)
    : norm1_(width), attn_(width, heads, rng), norm2_(width), mlp_({width, mlp_hidden, width}, rng)
{
}

Var TransformerBlock::operator()(const Var& x, const SequenceLayout& layout, Tensor* probs) const
{
    const Var h = ag::add(x, attn_(norm1_(x), layout, probs));
    return ag::add(h, mlp_(norm2_(h)));
}

void TransformerBlock::collect(ParamList& out, const std::string& prefix) const
{
    norm1_.collect(out, prefix + ".norm1");
    attn_.collect(out, prefix + ".attn");
    norm2_.collect(out, prefix + ".norm2");
    mlp_.collect(out, prefix + ".mlp");
}

AttentionPool::AttentionPool(std::size_t in_width, std::size_t width, std::size_t heads, Rng& rng)
    : query_(Var::parameter(randn({1, width}, rng, 0.02))),
      key_(in_width, width, rng),
      value_(in_width, width, rng),
      proj_(width, width, rng),
      width_(width),
      heads_(heads)
{
    if (heads == 0 || width % heads != 0) throw std::invalid_argument("AttentionPool: width not divisible by heads");
}

Var AttentionPool::operator()(const Var& x, const SequenceLayout& layout, Tensor* probs) const
{
    const std::size_t head_dim = width_ / heads_;
    const kernels::AttentionShape shape{layout.batch, 1, layout.length, heads_, head_dim,
                                        1.0 / std::sqrt(static_cast<double>(head_dim))};
    const Var q = ag::repeat_rows(query_, layout.batch);
    return proj_(ag::attention(q, key_(x), value_(x), shape, layout.mask, probs));
}

void AttentionPool::collect(ParamList& out, const std::string& prefix) const
{
    out.push_back({prefix + ".query", query_});
    key_.collect(out, prefix + ".key");
    value_.collect(out, prefix + ".value");
    proj_.collect(out, prefix + ".proj");
}

} // namespace ave::nn

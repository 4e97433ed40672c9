#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ave/core/autograd.hpp"
#include "ave/core/random.hpp"

namespace ave::nn {

using ag::Var;

struct NamedParam {
    std::string name;
    Var var;
};
using ParamList = std::vector<NamedParam>;

std::vector<Var> vars_of(const ParamList& params);
void zero_grads(const ParamList& params);
/// Copies values between two lists with identical names and shapes.
void copy_values(const ParamList& from, const ParamList& to);
/// to <- (1 - tau) * to + tau * from
void soft_update(const ParamList& from, const ParamList& to, double tau);
std::size_t count_parameters(const ParamList& params);

class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);

    Var operator()(const Var& x) const { return ag::linear(x, weight_, bias_); }
    void collect(ParamList& out, const std::string& prefix) const;

    std::size_t in_features() const { return weight_.value().dim(0); }
    std::size_t out_features() const { return weight_.value().dim(1); }
    Var& weight() { return weight_; }
    Var& bias() { return bias_; }
    const Var& weight() const { return weight_; }
    const Var& bias() const { return bias_; }

private:
    Var weight_;
    Var bias_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    explicit LayerNorm(std::size_t width);

    Var operator()(const Var& x) const { return ag::layer_norm(x, gamma_, beta_); }
    void collect(ParamList& out, const std::string& prefix) const;

private:
    Var gamma_;
    Var beta_;
};

/// Stack of Linear layers with GELU between them (none after the last).
class Mlp {
public:
    Mlp() = default;
    Mlp(std::span<const std::size_t> widths, Rng& rng);
    Mlp(std::initializer_list<std::size_t> widths, Rng& rng)
        : Mlp(std::span<const std::size_t>(widths.begin(), widths.size()), rng)
    {
    }

    Var operator()(const Var& x) const;
    void collect(ParamList& out, const std::string& prefix) const;
    std::size_t out_features() const { return layers_.back().out_features(); }
    std::vector<Linear>& layers() { return layers_; }
    const std::vector<Linear>& layers() const { return layers_; }

private:
    std::vector<Linear> layers_;
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
           std::size_t pad, Rng& rng);

    /// x: [batch, h*w*in_channels] (channels last)
    Var operator()(const Var& x, std::size_t batch, std::size_t h, std::size_t w) const;
    void collect(ParamList& out, const std::string& prefix) const;
    kernels::ConvShape shape(std::size_t batch, std::size_t h, std::size_t w) const;
    std::size_t out_channels() const { return weight_.value().dim(1); }

private:
    Var weight_;
    Var bias_;
    std::size_t in_channels_ = 0;
    std::size_t kernel_ = 3;
    std::size_t stride_ = 1;
    std::size_t pad_ = 0;
};

/// Batched sequences flattened to rows: sample b occupies rows
/// [b*length, (b+1)*length). mask has one entry per row, nonzero = valid.
struct SequenceLayout {
    std::size_t batch = 1;
    std::size_t length = 0;
    std::vector<unsigned char> mask;
};

class MultiHeadSelfAttention {
public:
    MultiHeadSelfAttention() = default;
    MultiHeadSelfAttention(std::size_t width, std::size_t heads, Rng& rng);

    /// probs, when given, receives [batch, heads, length, length].
    Var operator()(const Var& x, const SequenceLayout& layout, Tensor* probs = nullptr) const;
    void collect(ParamList& out, const std::string& prefix) const;
    std::size_t heads() const { return heads_; }

private:
    Linear qkv_;
    Linear proj_;
    std::size_t width_ = 0;
    std::size_t heads_ = 1;
};

/// Pre-norm transformer block with a GELU MLP.
class TransformerBlock {
public:
    TransformerBlock() = default;
    TransformerBlock(std::size_t width, std::size_t heads, std::size_t mlp_hidden, Rng& rng);

    Var operator()(const Var& x, const SequenceLayout& layout, Tensor* probs = nullptr) const;
    void collect(ParamList& out, const std::string& prefix) const;

private:
    LayerNorm norm1_;
    MultiHeadSelfAttention attn_;
    LayerNorm norm2_;
    Mlp mlp_;
};

/// Multi-head attention pooling with a learned query: reduces each
/// sequence of a batch to a single vector, ignoring masked rows.
class AttentionPool {
public:
    AttentionPool() = default;
    AttentionPool(std::size_t in_width, std::size_t width, std::size_t heads, Rng& rng);

    /// x: [batch*length, in_width] -> [batch, width]
    Var operator()(const Var& x, const SequenceLayout& layout, Tensor* probs = nullptr) const;
    void collect(ParamList& out, const std::string& prefix) const;
    std::size_t width() const { return width_; }

private:
    Var query_;
    Linear key_;
    Linear value_;
    Linear proj_;
    std::size_t width_ = 0;
    std::size_t heads_ = 1;
};

} // namespace ave::nn

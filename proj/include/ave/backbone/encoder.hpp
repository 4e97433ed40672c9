#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "ave/core/nn.hpp"
#include "ave/env/scene.hpp"

namespace ave::backbone {

using ag::Var;

struct EncoderConfig {
    int blocks = 4;
    int width = 192;
    int heads = 4;
    int mlp_ratio = 4;
    int d_patch = 16;
    int channels = 3;
    int frequencies = 8;
    // Patch pixels enter the embedding as (p - pixel_mean) / pixel_std.
    double pixel_mean = 0.5;
    double pixel_std = 1.0;

    void validate() const;
    int patch_dim() const { return d_patch * d_patch * channels; }
    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
    bool operator==(const EncoderConfig&) const = default;
};

/// Patches of one or more glimpses with their scene-space coordinates.
/// patches: [n, d_patch*d_patch*C], coords: [n, 3] rows of (cx, cy, s).
struct PatchBundle {
    Tensor patches;
    Tensor coords;
    std::vector<unsigned char> mask;

    std::size_t size() const { return mask.size(); }
    std::size_t valid_count() const;
    void append(const PatchBundle& other);
    /// Empty bundle with the column widths of the given patch dimension.
    static PatchBundle empty(std::size_t patch_dim);
    void validate() const;
};

/// Splits a capture into m x m patches in raster order, m = ceil(d_cam / d_patch).
/// Centers are normalized by the scene width/height and s is the patch side
/// in scene pixels divided by min(H, W).
PatchBundle split_glimpse(const env::GlimpseCapture& capture, int scene_height, int scene_width,
                          const env::CameraConfig& cfg);

/// Fixed sinusoidal features of (cx, cy, -log2(s)/8): for each of the three
/// values v and k < frequencies, sin(2^k pi v) and cos(2^k pi v).
Tensor positional_features(const Tensor& coords, int frequencies);

/// Several bundles padded to a common slot count.
struct BundleBatch {
    Tensor patches; // [batch*slots, patch_dim]
    Tensor coords;  // [batch*slots, 3]
    std::vector<unsigned char> mask;
    std::size_t batch = 0;
    std::size_t slots = 0;
};

BundleBatch collate(std::span<const PatchBundle* const> bundles, std::size_t patch_dim);
BundleBatch collate(const PatchBundle& bundle);

/// Output of the encoder for a batch. Row b*length of tokens is the CLS
/// latent of sample b, rows b*length + 1 + i the latent of its patch slot i.
struct EncodedBatch {
    Var tokens;
    nn::SequenceLayout layout;
    std::vector<Tensor> attentions; // per block, head-averaged [batch, length, length]

    Var cls() const;
    /// Patch rows only, [batch*(length-1), width].
    Var patch_tokens() const;
    std::vector<unsigned char> patch_mask() const;
};

/// Inference result for one bundle: latents of the valid patches in bundle order.
struct LatentBundle {
    Tensor latents; // [n_valid, width]
    Tensor cls;     // [width]
    std::vector<Tensor> attentions; // per block [n_valid + 1, n_valid + 1], CLS first
};

/// Latents and valid-token attentions of sample b of a batch.
LatentBundle unpack(const EncodedBatch& encoded, std::size_t b);

class ElasticEncoder {
public:
    ElasticEncoder() = default;
    ElasticEncoder(const EncoderConfig& config, Rng& rng);

    /// pixels, when given, replaces batch.patches (used to differentiate with
    /// respect to input pixels).
    EncodedBatch forward(const BundleBatch& batch, const Var* pixels = nullptr) const;
    /// Positional encoding in model space: learned projection of positional_features.
    Var encode_positions(const Tensor& coords) const;
    LatentBundle encode(const PatchBundle& bundle) const;

    void collect(nn::ParamList& out, const std::string& prefix) const;
    nn::ParamList params() const;
    const EncoderConfig& config() const { return config_; }

private:
    EncoderConfig config_;
    nn::Linear patch_embed_;
    nn::Linear pos_proj_;
    Var cls_token_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm norm_;
};

/// Attention rollout over head-averaged, row-stochastic attention matrices
/// ([L, L] each, token 0 = CLS). Each layer is mixed as
/// (1 - residual) * A + residual * I, renormalized, and multiplied onto the
/// running product. Returns the CLS row entries for tokens 1..L-1.
std::vector<double> attention_rollout(std::span<const Tensor> attentions, double residual = 0.5);
/// Full rollout product, [L, L].
Tensor rollout_matrix(std::span<const Tensor> attentions, double residual = 0.5);

} // namespace ave::backbone

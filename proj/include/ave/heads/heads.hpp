#pragma once

#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "ave/backbone/encoder.hpp"
#include "ave/env/scene.hpp"

namespace ave::heads {

using ag::Var;

/// Linear classifier on the CLS latent.
class Classifier {
public:
    Classifier() = default;
    Classifier(std::size_t width, std::size_t classes, Rng& rng);

    Var operator()(const Var& cls) const { return linear_(cls); }
    void collect(nn::ParamList& out, const std::string& prefix) const { linear_.collect(out, prefix); }
    nn::Linear& linear() { return linear_; }
    std::size_t classes() const { return classes_; }

private:
    nn::Linear linear_;
    std::size_t classes_ = 0;
};

/// Grid of query cells covering the scene at d_patch granularity. Cell
/// (r, c) has center ((c + 0.5) / cols, (r + 0.5) / rows) and scale
/// d_patch / min(H, W), the same convention as encoder patches.
struct DenseQueryGrid {
    int rows = 0;
    int cols = 0;
    int d_patch = 0;
    Tensor coords; // [rows*cols, 3]

    static DenseQueryGrid for_scene(int height, int width, int d_patch);
    int out_height() const { return rows * d_patch; }
    int out_width() const { return cols * d_patch; }
    std::size_t cells() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

struct DecoderConfig {
    int blocks = 2;
    int width = 128;
    int heads = 4;
    int mlp_ratio = 4;

    void validate() const;
    nlohmann::json to_json() const;
    static DecoderConfig from_json(const nlohmann::json& j);
};

/// Masked dense decoder: projected encoder tokens plus one query token per
/// grid cell pass through transformer blocks; only the grid outputs are kept
/// and mapped to d_patch x d_patch x C pixels each.
class DenseDecoder {
public:
    DenseDecoder() = default;
    DenseDecoder(const DecoderConfig& config, const backbone::EncoderConfig& encoder, DenseQueryGrid grid, Rng& rng);

    /// [batch*cells, d_patch*d_patch*C] in patch layout (cell-major).
    Var operator()(const backbone::EncodedBatch& encoded) const;
    void collect(nn::ParamList& out, const std::string& prefix) const;
    const DenseQueryGrid& grid() const { return grid_; }
    const DecoderConfig& config() const { return config_; }

private:
    DecoderConfig config_;
    DenseQueryGrid grid_;
    int channels_ = 3;
    int frequencies_ = 8;
    nn::Linear in_proj_;
    Var query_;
    nn::Linear pos_proj_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm norm_;
    nn::Linear out_proj_;
};

/// Image [out_h, out_w, C] -> patch layout [cells, d_patch*d_patch*C] for one sample.
Tensor image_to_patches(const Tensor& image, const DenseQueryGrid& grid);
Tensor patches_to_image(std::span<const double> patches, const DenseQueryGrid& grid, int channels);
/// Scene target resampled to the decoder resolution, in patch layout.
Tensor dense_target(const env::SceneImage& scene, const DenseQueryGrid& grid);

// Losses. Per-sample variants return [batch, 1]; the scalar ones average them.

/// sqrt(mean((pred - target)^2)) per row.
Var rmse_per_sample(const Var& pred, const Tensor& target);
Var rmse_loss(const Var& pred, const Tensor& target);
/// -log softmax(logits)[label] per row.
Var ce_per_sample(const Var& logits, std::span<const int> labels);
Var ce_loss(const Var& logits, std::span<const int> labels);
/// KL(teacher || softmax(logits)) per row; teacher rows must be distributions.
Var kl_per_sample(const Var& logits, const Tensor& teacher_probs);
Var distill_kl_loss(const Var& logits, const Tensor& teacher_probs);

std::vector<double> softmax(std::span<const double> logits);

/// Produces soft class targets for a scene.
class Teacher {
public:
    virtual ~Teacher() = default;
    virtual std::vector<double> probs(const env::SceneImage& scene, int num_classes) const = 0;
};

/// One-hot targets from the scene label; with it the KL loss equals cross-entropy.
class HardLabelTeacher : public Teacher {
public:
    std::vector<double> probs(const env::SceneImage& scene, int num_classes) const override;
};

enum class TaskKind { classification, reconstruction };
const char* to_string(TaskKind k);
TaskKind task_from_string(const std::string& s);

/// Targets for a batch of scenes.
struct TaskTargets {
    std::vector<int> labels;
    Tensor teacher_probs; // [batch, classes], used when non-empty
    Tensor dense;         // [batch*cells, patch_dim]
};

/// The task head in use plus its loss.
class TaskHead {
public:
    TaskHead() = default;
    TaskHead(TaskKind kind, const backbone::EncoderConfig& encoder, int num_classes, const DecoderConfig& decoder,
             DenseQueryGrid grid, Rng& rng);

    TaskKind kind() const { return kind_; }
    int num_classes() const { return num_classes_; }
    const Classifier& classifier() const { return classifier_; }
    const DenseDecoder& decoder() const { return decoder_; }

    /// Logits [batch, classes] or dense patches [batch*cells, patch_dim].
    Var predict(const backbone::EncodedBatch& encoded) const;
    Var loss_per_sample(const Var& prediction, const TaskTargets& targets) const;
    TaskTargets targets(std::span<const env::SceneImage* const> scenes, const Teacher* teacher) const;

    void collect(nn::ParamList& out, const std::string& prefix) const;
    nlohmann::json architecture() const;

private:
    TaskKind kind_ = TaskKind::classification;
    int num_classes_ = 0;
    Classifier classifier_;
    DenseDecoder decoder_;
};

} // namespace ave::heads

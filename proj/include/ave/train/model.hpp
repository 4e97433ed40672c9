#pragma once

#include <filesystem>
#include <span>

#include "ave/backbone/encoder.hpp"
#include "ave/heads/heads.hpp"

namespace ave::train {

using ag::Var;

/// Per-sample outcome of a task prediction.
struct SampleOutcome {
    double loss = 0.0;
    int label = -1;           // argmax class, classification only
    bool correct = false;     // classification only
    double rmse = 0.0;        // reconstruction only
    std::vector<double> probs; // classification only
};

/// Elastic backbone plus task head.
class Model {
public:
    Model() = default;
    Model(const backbone::EncoderConfig& encoder, heads::TaskKind task, int num_classes,
          const heads::DecoderConfig& decoder, int scene_height, int scene_width, std::uint64_t seed);

    struct Output {
        backbone::EncodedBatch encoded;
        Var prediction;
    };
    Output forward(std::span<const backbone::PatchBundle* const> bundles) const;

    Var loss_per_sample(const Var& prediction, const heads::TaskTargets& targets) const;
    heads::TaskTargets targets(std::span<const env::SceneImage* const> scenes) const;
    /// Loss, prediction and correctness per sample from a forward output.
    std::vector<SampleOutcome> outcomes(const Output& out, const heads::TaskTargets& targets) const;

    const backbone::ElasticEncoder& encoder() const { return encoder_; }
    const heads::TaskHead& head() const { return head_; }
    heads::TaskKind task() const { return head_.kind(); }
    int scene_height() const { return height_; }
    int scene_width() const { return width_; }

    nn::ParamList encoder_params() const;
    nn::ParamList head_params() const;
    nn::ParamList params() const;
    nlohmann::json architecture() const;

private:
    backbone::ElasticEncoder encoder_;
    heads::TaskHead head_;
    int height_ = 0;
    int width_ = 0;
};

/// Subset of per-scene targets (rows of labels, teacher probs or dense cells).
heads::TaskTargets select_targets(const heads::TaskTargets& all, std::span<const std::size_t> index,
                                  std::size_t cells);

} // namespace ave::train

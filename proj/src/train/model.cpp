#include "ave/train/model.hpp"

#include <algorithm>
#include <cmath>

namespace ave::train {

Model::Model(const backbone::EncoderConfig& encoder, heads::TaskKind task, int num_classes,
             const heads::DecoderConfig& decoder, int scene_height, int scene_width, std::uint64_t seed)
    : height_(scene_height), width_(scene_width)
{
    Rng rng(seed);
    encoder_ = backbone::ElasticEncoder(encoder, rng);
    head_ = heads::TaskHead(task, encoder, num_classes, decoder,
                            heads::DenseQueryGrid::for_scene(scene_height, scene_width, encoder.d_patch), rng);
}

Model::Output Model::forward(std::span<const backbone::PatchBundle* const> bundles) const
{
    Output out;
    out.encoded = encoder_.forward(backbone::collate(bundles, static_cast<std::size_t>(encoder_.config().patch_dim())));
    out.prediction = head_.predict(out.encoded);
    return out;
}

Var Model::loss_per_sample(const Var& prediction, const heads::TaskTargets& targets) const
{
    return head_.loss_per_sample(prediction, targets);
}

heads::TaskTargets Model::targets(std::span<const env::SceneImage* const> scenes) const
{
    return head_.targets(scenes, nullptr);
}

std::vector<SampleOutcome> Model::outcomes(const Output& out, const heads::TaskTargets& targets) const
{
    const Var loss = loss_per_sample(out.prediction, targets);
    const std::size_t batch = out.encoded.layout.batch;
    std::vector<SampleOutcome> res(batch);
    for (std::size_t b = 0; b < batch; ++b) res[b].loss = loss.value()[b];
    if (task() == heads::TaskKind::classification) {
        const Tensor& logits = out.prediction.value();
        for (std::size_t b = 0; b < batch; ++b) {
            const auto row = logits.row(b);
            res[b].probs = heads::softmax(row);
            res[b].label = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
            res[b].correct = res[b].label == targets.labels[b];
        }
    } else {
        for (std::size_t b = 0; b < batch; ++b) res[b].rmse = res[b].loss;
    }
    return res;
}

nn::ParamList Model::encoder_params() const { return encoder_.params(); }

nn::ParamList Model::head_params() const
{
    nn::ParamList p;
    head_.collect(p, "head");
    return p;
}

nn::ParamList Model::params() const
{
    nn::ParamList p = encoder_params();
    for (auto& e : head_params()) p.push_back(e);
    return p;
}

nlohmann::json Model::architecture() const
{
    return {{"encoder", encoder_.config().to_json()},
            {"head", head_.architecture()},
            {"scene_height", height_},
            {"scene_width", width_}};
}

heads::TaskTargets select_targets(const heads::TaskTargets& all, std::span<const std::size_t> index,
                                  std::size_t cells)
{
    heads::TaskTargets t;
    for (std::size_t i : index)
        if (!all.labels.empty()) t.labels.push_back(all.labels.at(i));
    if (!all.teacher_probs.empty()) {
        const std::size_t k = all.teacher_probs.cols();
        t.teacher_probs = Tensor({index.size(), k});
        for (std::size_t r = 0; r < index.size(); ++r)
            std::copy_n(all.teacher_probs.data() + index[r] * k, k, t.teacher_probs.data() + r * k);
    }
    if (!all.dense.empty()) {
        const std::size_t width = all.dense.cols();
        const std::size_t block = cells * width;
        t.dense = Tensor({index.size() * cells, width});
        for (std::size_t r = 0; r < index.size(); ++r)
            std::copy_n(all.dense.data() + index[r] * block, block, t.dense.data() + r * block);
    }
    return t;
}

} // namespace ave::train

#include "ave/heads/heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ave/env/image_io.hpp"

namespace ave::heads {

Classifier::Classifier(std::size_t width, std::size_t classes, Rng& rng) : linear_(width, classes, rng), classes_(classes)
{
}

DenseQueryGrid DenseQueryGrid::for_scene(int height, int width, int d_patch)
{
    if (d_patch < 1 || height < d_patch || width < d_patch) throw std::invalid_argument("query grid: invalid sizes");
    DenseQueryGrid g;
    g.d_patch = d_patch;
    g.rows = (height + d_patch - 1) / d_patch;
    g.cols = (width + d_patch - 1) / d_patch;
    g.coords = Tensor({g.cells(), 3});
    const double s = static_cast<double>(d_patch) / std::min(height, width);
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) {
            const auto i = static_cast<std::size_t>(r * g.cols + c);
            g.coords.at(i, 0) = (c + 0.5) / g.cols;
            g.coords.at(i, 1) = (r + 0.5) / g.rows;
            g.coords.at(i, 2) = std::min(1.0, s);
        }
    return g;
}

void DecoderConfig::validate() const
{
    if (blocks < 1 || width < 1 || heads < 1 || mlp_ratio < 1) throw std::invalid_argument("decoder config: sizes must be positive");
    if (width % heads != 0) throw std::invalid_argument("decoder config: width not divisible by heads");
}

nlohmann::json DecoderConfig::to_json() const
{
    return {{"blocks", blocks}, {"width", width}, {"heads", heads}, {"mlp_ratio", mlp_ratio}};
}

DecoderConfig DecoderConfig::from_json(const nlohmann::json& j)
{
    DecoderConfig c;
    c.blocks = j.at("blocks").get<int>();
    c.width = j.at("width").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    return c;
}

DenseDecoder::DenseDecoder(const DecoderConfig& config, const backbone::EncoderConfig& encoder, DenseQueryGrid grid,
                           Rng& rng)
    : config_(config), grid_(std::move(grid)), channels_(encoder.channels), frequencies_(encoder.frequencies)
{
    config_.validate();
    const auto w = static_cast<std::size_t>(config_.width);
    in_proj_ = nn::Linear(static_cast<std::size_t>(encoder.width), w, rng);
    query_ = Var::parameter(randn({1, w}, rng, 0.02));
    pos_proj_ = nn::Linear(static_cast<std::size_t>(6 * frequencies_), w, rng);
    for (int i = 0; i < config_.blocks; ++i)
        blocks_.emplace_back(w, static_cast<std::size_t>(config_.heads), w * static_cast<std::size_t>(config_.mlp_ratio), rng);
    norm_ = nn::LayerNorm(w);
    out_proj_ = nn::Linear(w, static_cast<std::size_t>(grid_.d_patch * grid_.d_patch * channels_), rng);
}

Var DenseDecoder::operator()(const backbone::EncodedBatch& encoded) const
{
    const std::size_t batch = encoded.layout.batch;
    const std::size_t length = encoded.layout.length;
    const std::size_t cells = grid_.cells();
    const Var queries = ag::add_rowvec(pos_proj_(ag::constant(backbone::positional_features(grid_.coords, frequencies_))),
                                       ag::reshape(query_, {static_cast<std::size_t>(config_.width)}));
    Var all_queries = queries;
    if (batch > 1) {
        std::vector<Var> copies(batch, queries);
        all_queries = ag::concat_rows(copies);
    }
    Var h = ag::concat_seq(in_proj_(encoded.tokens), all_queries, batch);
    nn::SequenceLayout layout{batch, length + cells, {}};
    layout.mask.reserve(batch * (length + cells));
    for (std::size_t b = 0; b < batch; ++b) {
        layout.mask.insert(layout.mask.end(), encoded.layout.mask.begin() + static_cast<long>(b * length),
                           encoded.layout.mask.begin() + static_cast<long>((b + 1) * length));
        layout.mask.insert(layout.mask.end(), cells, 1);
    }
    for (const auto& block : blocks_) h = block(h, layout);
    std::vector<std::size_t> keep;
    keep.reserve(batch * cells);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < cells; ++c) keep.push_back(b * (length + cells) + length + c);
    return out_proj_(norm_(ag::gather_rows(h, keep)));
}

void DenseDecoder::collect(nn::ParamList& out, const std::string& prefix) const
{
    in_proj_.collect(out, prefix + ".in_proj");
    out.push_back({prefix + ".query", query_});
    pos_proj_.collect(out, prefix + ".pos_proj");
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, prefix + ".block" + std::to_string(i));
    norm_.collect(out, prefix + ".norm");
    out_proj_.collect(out, prefix + ".out_proj");
}

Tensor image_to_patches(const Tensor& image, const DenseQueryGrid& grid)
{
    const auto dp = static_cast<std::size_t>(grid.d_patch);
    const std::size_t c = image.dim(2);
    const auto W = static_cast<std::size_t>(grid.out_width());
    if (image.dim(0) != static_cast<std::size_t>(grid.out_height()) || image.dim(1) != W)
        throw std::invalid_argument("image_to_patches: image does not match the grid resolution");
    Tensor out({grid.cells(), dp * dp * c});
    for (std::size_t r = 0; r < static_cast<std::size_t>(grid.rows); ++r)
        for (std::size_t q = 0; q < static_cast<std::size_t>(grid.cols); ++q) {
            double* dst = out.data() + (r * static_cast<std::size_t>(grid.cols) + q) * dp * dp * c;
            for (std::size_t y = 0; y < dp; ++y) {
                const double* src = image.data() + ((r * dp + y) * W + q * dp) * c;
                std::copy(src, src + dp * c, dst + y * dp * c);
            }
        }
    return out;
}

Tensor patches_to_image(std::span<const double> patches, const DenseQueryGrid& grid, int channels)
{
    const auto dp = static_cast<std::size_t>(grid.d_patch);
    const auto c = static_cast<std::size_t>(channels);
    const auto H = static_cast<std::size_t>(grid.out_height());
    const auto W = static_cast<std::size_t>(grid.out_width());
    if (patches.size() != H * W * c) throw std::invalid_argument("patches_to_image: size mismatch");
    Tensor out({H, W, c});
    for (std::size_t r = 0; r < static_cast<std::size_t>(grid.rows); ++r)
        for (std::size_t q = 0; q < static_cast<std::size_t>(grid.cols); ++q) {
            const double* src = patches.data() + (r * static_cast<std::size_t>(grid.cols) + q) * dp * dp * c;
            for (std::size_t y = 0; y < dp; ++y)
                std::copy(src + y * dp * c, src + (y + 1) * dp * c, out.data() + ((r * dp + y) * W + q * dp) * c);
        }
    return out;
}

Tensor dense_target(const env::SceneImage& scene, const DenseQueryGrid& grid)
{
    const Tensor& t = scene.target();
    const auto oh = static_cast<std::size_t>(grid.out_height());
    const auto ow = static_cast<std::size_t>(grid.out_width());
    if (t.dim(0) == oh && t.dim(1) == ow) return image_to_patches(t, grid);
    return image_to_patches(env::resize_image(t, oh, ow), grid);
}

// ---------------------------------------------------------------------------

Var rmse_per_sample(const Var& pred, const Tensor& target)
{
    if (pred.value().size() != target.size() || pred.cols() != target.cols())
        throw std::invalid_argument("rmse: prediction shape " + shape_str(pred.shape()) + " differs from target " +
                                    shape_str(target.shape()));
    const std::size_t rows = pred.rows(), cols = pred.cols();
    Tensor out({rows, 1});
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = pred.value().at(r, c) - target.at(r, c);
            s += d * d;
        }
        out[r] = std::sqrt(s / static_cast<double>(cols));
    }
    const Tensor value = out;
    return ag::make_op(std::move(out), {pred}, [target, value, rows, cols](ag::Node& self) {
        ag::Node& p = *self.parents[0];
        Tensor& g = p.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            if (value[r] <= 0.0) continue;
            const double k = self.grad[r] / (static_cast<double>(cols) * value[r]);
            for (std::size_t c = 0; c < cols; ++c) g.at(r, c) += k * (p.value.at(r, c) - target.at(r, c));
        }
    });
}

Var rmse_loss(const Var& pred, const Tensor& target) { return ag::mean(rmse_per_sample(pred, target)); }

Var ce_per_sample(const Var& logits, std::span<const int> labels)
{
    const std::size_t rows = logits.rows(), k = logits.cols();
    if (labels.size() != rows) throw std::invalid_argument("ce_loss: label count differs from batch");
    Tensor onehot({rows, k});
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k)
            throw std::invalid_argument("ce_loss: label " + std::to_string(labels[r]) + " out of range");
        onehot.at(r, static_cast<std::size_t>(labels[r])) = 1.0;
    }
    return ag::neg(ag::row_sum(ag::mul(ag::log_softmax_rows(logits), ag::constant(onehot))));
}

Var ce_loss(const Var& logits, std::span<const int> labels) { return ag::mean(ce_per_sample(logits, labels)); }

Var kl_per_sample(const Var& logits, const Tensor& teacher_probs)
{
    const std::size_t rows = logits.rows(), k = logits.cols();
    if (teacher_probs.rows() != rows || teacher_probs.cols() != k) throw std::invalid_argument("kl: teacher shape mismatch");
    Tensor neg_entropy({rows, 1});
    for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0, h = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const double p = teacher_probs.at(r, c);
            if (!(p >= 0.0)) throw std::invalid_argument("kl: negative teacher probability");
            sum += p;
            if (p > 0.0) h += p * std::log(p);
        }
        if (std::abs(sum - 1.0) > 1e-5) throw std::invalid_argument("kl: teacher probabilities do not sum to 1");
        neg_entropy[r] = h;
    }
    return ag::sub(ag::constant(neg_entropy), ag::row_sum(ag::mul(ag::log_softmax_rows(logits), ag::constant(teacher_probs))));
}

Var distill_kl_loss(const Var& logits, const Tensor& teacher_probs)
{
    return ag::mean(kl_per_sample(logits, teacher_probs));
}

std::vector<double> softmax(std::span<const double> logits)
{
    std::vector<double> out(logits.begin(), logits.end());
    if (out.empty()) return out;
    const double m = *std::max_element(out.begin(), out.end());
    double s = 0.0;
    for (double& v : out) s += (v = std::exp(v - m));
    for (double& v : out) v /= s;
    return out;
}

std::vector<double> HardLabelTeacher::probs(const env::SceneImage& scene, int num_classes) const
{
    if (!scene.label) throw std::invalid_argument("hard-label teacher: scene " + scene.id + " has no label");
    if (*scene.label < 0 || *scene.label >= num_classes) throw std::invalid_argument("hard-label teacher: label out of range");
    std::vector<double> p(static_cast<std::size_t>(num_classes), 0.0);
    p[static_cast<std::size_t>(*scene.label)] = 1.0;
    return p;
}

const char* to_string(TaskKind k) { return k == TaskKind::classification ? "classification" : "reconstruction"; }

TaskKind task_from_string(const std::string& s)
{
    if (s == "classification") return TaskKind::classification;
    if (s == "reconstruction") return TaskKind::reconstruction;
    throw std::invalid_argument("unknown task " + s);
}

// ---------------------------------------------------------------------------

TaskHead::TaskHead(TaskKind kind, const backbone::EncoderConfig& encoder, int num_classes, const DecoderConfig& decoder,
                   DenseQueryGrid grid, Rng& rng)
    : kind_(kind), num_classes_(num_classes)
{
    if (kind_ == TaskKind::classification) {
        if (num_classes < 2) throw std::invalid_argument("classification needs at least two classes");
        classifier_ = Classifier(static_cast<std::size_t>(encoder.width), static_cast<std::size_t>(num_classes), rng);
    } else {
        decoder_ = DenseDecoder(decoder, encoder, std::move(grid), rng);
    }
}

Var TaskHead::predict(const backbone::EncodedBatch& encoded) const
{
    return kind_ == TaskKind::classification ? classifier_(encoded.cls()) : decoder_(encoded);
}

Var TaskHead::loss_per_sample(const Var& prediction, const TaskTargets& targets) const
{
    if (kind_ == TaskKind::classification) {
        if (!targets.teacher_probs.empty()) return kl_per_sample(prediction, targets.teacher_probs);
        return ce_per_sample(prediction, targets.labels);
    }
    // Patch layout: regroup the cells of each sample into one row.
    const std::size_t batch = targets.dense.rows() / decoder_.grid().cells();
    const std::size_t width = targets.dense.size() / batch;
    return rmse_per_sample(ag::reshape(prediction, {batch, width}), targets.dense.reshaped({batch, width}));
}

TaskTargets TaskHead::targets(std::span<const env::SceneImage* const> scenes, const Teacher* teacher) const
{
    TaskTargets t;
    if (kind_ == TaskKind::classification) {
        for (const auto* s : scenes) {
            if (!s->label) throw std::invalid_argument("classification target: scene " + s->id + " has no label");
            t.labels.push_back(*s->label);
        }
        if (teacher) {
            t.teacher_probs = Tensor({scenes.size(), static_cast<std::size_t>(num_classes_)});
            for (std::size_t i = 0; i < scenes.size(); ++i) {
                const auto p = teacher->probs(*scenes[i], num_classes_);
                std::copy(p.begin(), p.end(), t.teacher_probs.data() + i * p.size());
            }
        }
        return t;
    }
    const auto& grid = decoder_.grid();
    const std::size_t patch_dim = static_cast<std::size_t>(grid.d_patch * grid.d_patch) * scenes.front()->pixels.dim(2);
    t.dense = Tensor({scenes.size() * grid.cells(), patch_dim});
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const Tensor d = dense_target(*scenes[i], grid);
        std::copy(d.storage().begin(), d.storage().end(), t.dense.data() + i * d.size());
    }
    return t;
}

void TaskHead::collect(nn::ParamList& out, const std::string& prefix) const
{
    if (kind_ == TaskKind::classification) classifier_.collect(out, prefix + ".classifier");
    else decoder_.collect(out, prefix + ".decoder");
}

nlohmann::json TaskHead::architecture() const
{
    nlohmann::json j{{"task", to_string(kind_)}};
    if (kind_ == TaskKind::classification) j["classes"] = num_classes_;
    else {
        j["decoder"] = decoder_.config().to_json();
        j["grid_rows"] = decoder_.grid().rows;
        j["grid_cols"] = decoder_.grid().cols;
    }
    return j;
}

} // namespace ave::heads

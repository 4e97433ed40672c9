#include "ave/backbone/encoder.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ave/core/kernels.hpp"

namespace ave::backbone {

void EncoderConfig::validate() const
{
    if (blocks < 1 || width < 1 || heads < 1 || mlp_ratio < 1 || d_patch < 1 || channels < 1 || frequencies < 1)
        throw std::invalid_argument("encoder config: all sizes must be positive");
    if (!(pixel_std > 0.0) || !std::isfinite(pixel_mean)) throw std::invalid_argument("encoder config: bad pixel statistics");
    if (width % heads != 0) throw std::invalid_argument("encoder config: width not divisible by heads");
}

nlohmann::json EncoderConfig::to_json() const
{
    return {{"blocks", blocks}, {"width", width}, {"heads", heads}, {"mlp_ratio", mlp_ratio},
            {"d_patch", d_patch}, {"channels", channels}, {"frequencies", frequencies},
            {"pixel_mean", pixel_mean}, {"pixel_std", pixel_std}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j)
{
    EncoderConfig c;
    c.blocks = j.at("blocks").get<int>();
    c.width = j.at("width").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.d_patch = j.at("d_patch").get<int>();
    c.channels = j.at("channels").get<int>();
    c.frequencies = j.at("frequencies").get<int>();
    c.pixel_mean = j.at("pixel_mean").get<double>();
    c.pixel_std = j.at("pixel_std").get<double>();
    return c;
}

// ---------------------------------------------------------------------------

std::size_t PatchBundle::valid_count() const
{
    std::size_t n = 0;
    for (unsigned char m : mask) n += m != 0;
    return n;
}

PatchBundle PatchBundle::empty(std::size_t patch_dim)
{
    PatchBundle b;
    b.patches = Tensor({0, patch_dim});
    b.coords = Tensor({0, 3});
    return b;
}

void PatchBundle::append(const PatchBundle& other)
{
    if (patches.empty() && mask.empty()) {
        *this = other;
        return;
    }
    if (other.patches.cols() != patches.cols()) throw std::invalid_argument("PatchBundle::append: patch width differs");
    auto& p = patches.storage();
    p.insert(p.end(), other.patches.storage().begin(), other.patches.storage().end());
    auto& c = coords.storage();
    c.insert(c.end(), other.coords.storage().begin(), other.coords.storage().end());
    mask.insert(mask.end(), other.mask.begin(), other.mask.end());
    patches.reshape({mask.size(), other.patches.cols()});
    coords.reshape({mask.size(), 3});
}

void PatchBundle::validate() const
{
    if (patches.rows() != mask.size() || coords.rows() != mask.size() || (coords.cols() != 3 && !mask.empty()))
        throw std::invalid_argument("patch bundle: patches, coords and mask lengths differ");
    if (!patches.all_finite()) throw std::invalid_argument("patch bundle: non-finite pixel values");
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const double cx = coords.at(i, 0), cy = coords.at(i, 1), s = coords.at(i, 2);
        if (!(cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0 && s > 0.0 && s <= 1.0))
            throw std::invalid_argument("patch bundle: coordinates outside [0,1]^2 x (0,1]");
    }
}

PatchBundle split_glimpse(const env::GlimpseCapture& capture, int scene_height, int scene_width,
                          const env::CameraConfig& cfg)
{
    const auto d_cam = static_cast<std::size_t>(cfg.d_cam);
    const auto dp = static_cast<std::size_t>(cfg.d_patch);
    const auto m = static_cast<std::size_t>(cfg.patches_per_side());
    const std::size_t c = capture.pixels.dim(2);
    if (capture.pixels.dim(0) != d_cam || capture.pixels.dim(1) != d_cam)
        throw std::invalid_argument("split_glimpse: capture is not d_cam x d_cam");

    const std::size_t side = m * dp;
    Tensor pixels = capture.pixels;
    if (side != d_cam) {
        pixels = Tensor({side, side, c});
        kernels::resample(capture.pixels.data(), d_cam, d_cam, c,
                          {0.0, 0.0, static_cast<double>(d_cam), static_cast<double>(d_cam)}, side, side, pixels.data());
    }

    PatchBundle out;
    out.patches = Tensor({m * m, dp * dp * c});
    out.coords = Tensor({m * m, 3});
    out.mask.assign(m * m, 1);
    const double patch_side = static_cast<double>(capture.region.d) / static_cast<double>(m);
    const double scene_side = std::min(scene_height, scene_width);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t q = 0; q < m; ++q) {
            const std::size_t idx = r * m + q;
            double* dst = out.patches.data() + idx * dp * dp * c;
            for (std::size_t y = 0; y < dp; ++y) {
                const double* src = pixels.data() + ((r * dp + y) * side + q * dp) * c;
                std::copy(src, src + dp * c, dst + y * dp * c);
            }
            out.coords.at(idx, 0) = (capture.region.x + (static_cast<double>(q) + 0.5) * patch_side) / scene_width;
            out.coords.at(idx, 1) = (capture.region.y + (static_cast<double>(r) + 0.5) * patch_side) / scene_height;
            out.coords.at(idx, 2) = patch_side / scene_side;
        }
    }
    return out;
}

Tensor positional_features(const Tensor& coords, int frequencies)
{
    const std::size_t n = coords.rows();
    const auto f = static_cast<std::size_t>(frequencies);
    Tensor out({n, 6 * f});
    for (std::size_t i = 0; i < n; ++i) {
        const double s = coords.at(i, 2);
        if (!(s > 0.0)) throw std::invalid_argument("positional_features: scale must be positive");
        const double values[3] = {coords.at(i, 0), coords.at(i, 1), -std::log2(s) / 8.0};
        for (std::size_t v = 0; v < 3; ++v) {
            for (std::size_t k = 0; k < f; ++k) {
                const double arg = std::ldexp(std::numbers::pi, static_cast<int>(k)) * values[v];
                out.at(i, (v * f + k) * 2) = std::sin(arg);
                out.at(i, (v * f + k) * 2 + 1) = std::cos(arg);
            }
        }
    }
    return out;
}

BundleBatch collate(std::span<const PatchBundle* const> bundles, std::size_t patch_dim)
{
    BundleBatch b;
    b.batch = bundles.size();
    for (const PatchBundle* p : bundles) b.slots = std::max(b.slots, p->size());
    b.patches = Tensor({b.batch * b.slots, patch_dim});
    b.coords = Tensor({b.batch * b.slots, 3});
    b.mask.assign(b.batch * b.slots, 0);
    for (std::size_t i = 0; i < b.batch; ++i) {
        const PatchBundle& p = *bundles[i];
        if (p.size() > 0 && p.patches.cols() != patch_dim) throw std::invalid_argument("collate: patch width differs");
        std::copy(p.patches.storage().begin(), p.patches.storage().end(), b.patches.data() + i * b.slots * patch_dim);
        std::copy(p.coords.storage().begin(), p.coords.storage().end(), b.coords.data() + i * b.slots * 3);
        std::copy(p.mask.begin(), p.mask.end(), b.mask.begin() + static_cast<long>(i * b.slots));
        // Padding slots keep a valid scale so the positional features stay finite.
        for (std::size_t s = p.size(); s < b.slots; ++s) b.coords.at(i * b.slots + s, 2) = 1.0;
    }
    return b;
}

BundleBatch collate(const PatchBundle& bundle)
{
    const PatchBundle* p = &bundle;
    return collate(std::span<const PatchBundle* const>(&p, 1), bundle.patches.cols());
}

// ---------------------------------------------------------------------------

Var EncodedBatch::cls() const
{
    std::vector<std::size_t> idx(layout.batch);
    for (std::size_t b = 0; b < layout.batch; ++b) idx[b] = b * layout.length;
    return ag::gather_rows(tokens, idx);
}

Var EncodedBatch::patch_tokens() const
{
    std::vector<std::size_t> idx;
    idx.reserve(layout.batch * (layout.length - 1));
    for (std::size_t b = 0; b < layout.batch; ++b)
        for (std::size_t i = 1; i < layout.length; ++i) idx.push_back(b * layout.length + i);
    return ag::gather_rows(tokens, idx);
}

std::vector<unsigned char> EncodedBatch::patch_mask() const
{
    std::vector<unsigned char> m;
    m.reserve(layout.batch * (layout.length - 1));
    for (std::size_t b = 0; b < layout.batch; ++b)
        for (std::size_t i = 1; i < layout.length; ++i) m.push_back(layout.mask[b * layout.length + i]);
    return m;
}

ElasticEncoder::ElasticEncoder(const EncoderConfig& config, Rng& rng) : config_(config)
{
    config_.validate();
    const auto width = static_cast<std::size_t>(config_.width);
    patch_embed_ = nn::Linear(static_cast<std::size_t>(config_.patch_dim()), width, rng);
    pos_proj_ = nn::Linear(static_cast<std::size_t>(6 * config_.frequencies), width, rng);
    cls_token_ = Var::parameter(randn({1, width}, rng, 0.02));
    for (int i = 0; i < config_.blocks; ++i)
        blocks_.emplace_back(width, static_cast<std::size_t>(config_.heads),
                             width * static_cast<std::size_t>(config_.mlp_ratio), rng);
    norm_ = nn::LayerNorm(width);
}

Var ElasticEncoder::encode_positions(const Tensor& coords) const
{
    return pos_proj_(ag::constant(positional_features(coords, config_.frequencies)));
}

EncodedBatch ElasticEncoder::forward(const BundleBatch& batch, const Var* pixels) const
{
    if (!batch.patches.all_finite() || (pixels && !pixels->value().all_finite()))
        throw std::invalid_argument("encoder: non-finite pixel input");
    const std::size_t length = batch.slots + 1;
    EncodedBatch out;
    out.layout.batch = batch.batch;
    out.layout.length = length;
    out.layout.mask.reserve(batch.batch * length);
    for (std::size_t b = 0; b < batch.batch; ++b) {
        out.layout.mask.push_back(1);
        out.layout.mask.insert(out.layout.mask.end(), batch.mask.begin() + static_cast<long>(b * batch.slots),
                               batch.mask.begin() + static_cast<long>((b + 1) * batch.slots));
    }

    const Var x = pixels ? *pixels : ag::constant(batch.patches);
    const Var tokens = ag::add(patch_embed_(ag::scale(ag::add_scalar(x, -config_.pixel_mean), 1.0 / config_.pixel_std)), encode_positions(batch.coords));
    Var h = ag::concat_seq(ag::repeat_rows(cls_token_, batch.batch), tokens, batch.batch);

    const std::size_t heads = static_cast<std::size_t>(config_.heads);
    for (const auto& block : blocks_) {
        Tensor probs;
        h = block(h, out.layout, &probs);
        Tensor avg({batch.batch, length, length});
        const std::size_t mat = length * length;
        for (std::size_t b = 0; b < batch.batch; ++b)
            for (std::size_t hd = 0; hd < heads; ++hd) {
                const double* src = probs.data() + (b * heads + hd) * mat;
                double* dst = avg.data() + b * mat;
                for (std::size_t i = 0; i < mat; ++i) dst[i] += src[i] / static_cast<double>(heads);
            }
        out.attentions.push_back(std::move(avg));
    }
    out.tokens = norm_(h);
    return out;
}

LatentBundle ElasticEncoder::encode(const PatchBundle& bundle) const
{
    bundle.validate();
    ag::NoGradGuard guard;
    return unpack(forward(collate(bundle)), 0);
}

LatentBundle unpack(const EncodedBatch& enc, std::size_t b)
{
    const std::size_t length = enc.layout.length;
    const std::size_t width = enc.tokens.cols();
    const std::size_t base = b * length;
    std::vector<std::size_t> keep{0};
    for (std::size_t i = 1; i < length; ++i)
        if (enc.layout.mask[base + i]) keep.push_back(i);

    const double* tokens = enc.tokens.value().data();
    LatentBundle out;
    out.cls = Tensor({width});
    std::copy_n(tokens + base * width, width, out.cls.data());
    out.latents = Tensor({keep.size() - 1, width});
    for (std::size_t r = 1; r < keep.size(); ++r)
        std::copy_n(tokens + (base + keep[r]) * width, width, out.latents.data() + (r - 1) * width);
    for (const Tensor& a : enc.attentions) {
        const double* m = a.data() + b * length * length;
        Tensor sub({keep.size(), keep.size()});
        for (std::size_t i = 0; i < keep.size(); ++i)
            for (std::size_t j = 0; j < keep.size(); ++j) sub.at(i, j) = m[keep[i] * length + keep[j]];
        out.attentions.push_back(std::move(sub));
    }
    return out;
}

void ElasticEncoder::collect(nn::ParamList& out, const std::string& prefix) const
{
    patch_embed_.collect(out, prefix + ".patch_embed");
    pos_proj_.collect(out, prefix + ".pos_proj");
    out.push_back({prefix + ".cls_token", cls_token_});
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, prefix + ".block" + std::to_string(i));
    norm_.collect(out, prefix + ".norm");
}

nn::ParamList ElasticEncoder::params() const
{
    nn::ParamList out;
    collect(out, "encoder");
    return out;
}

// ---------------------------------------------------------------------------

Tensor rollout_matrix(std::span<const Tensor> attentions, double residual)
{
    if (attentions.empty()) throw std::invalid_argument("attention_rollout: no attention matrices");
    if (!(residual >= 0.0 && residual <= 1.0)) throw std::invalid_argument("attention_rollout: residual outside [0, 1]");
    const std::size_t n = attentions.front().rows();
    Tensor result;
    for (const Tensor& a : attentions) {
        if (a.ndim() != 2 || a.rows() != n || a.cols() != n)
            throw std::invalid_argument("attention_rollout: matrices must be square and of equal size");
        Tensor mixed({n, n});
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double v = a.at(i, j);
                if (!(v >= -1e-12) || !std::isfinite(v))
                    throw std::invalid_argument("attention_rollout: negative or non-finite attention entry");
                row += v;
            }
            if (std::abs(row - 1.0) > 1e-5) throw std::invalid_argument("attention_rollout: matrix is not row-stochastic");
            double mixed_sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                mixed.at(i, j) = (1.0 - residual) * a.at(i, j) + (i == j ? residual : 0.0);
                mixed_sum += mixed.at(i, j);
            }
            for (std::size_t j = 0; j < n; ++j) mixed.at(i, j) /= mixed_sum;
        }
        if (result.empty()) {
            result = std::move(mixed);
            continue;
        }
        Tensor next({n, n});
        kernels::gemm(false, false, n, n, n, mixed.data(), result.data(), next.data(), false);
        result = std::move(next);
    }
    return result;
}

std::vector<double> attention_rollout(std::span<const Tensor> attentions, double residual)
{
    const Tensor r = rollout_matrix(attentions, residual);
    return {r.data() + 1, r.data() + r.cols()};
}

} // namespace ave::backbone

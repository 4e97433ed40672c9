#include "ave/core/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace ave::kernels {

namespace {

// Below this many output elements the thread team costs more than it saves.
constexpr std::size_t kParallelGrain = 1 << 12;

} // namespace

std::vector<std::vector<Tap>> resample_taps(double start, double length, std::size_t out, std::size_t limit)
{
    std::vector<std::vector<Tap>> taps(out);
    const double scale = length / static_cast<double>(out);
    const double hi_limit = static_cast<double>(limit) - 1.0;
    if (scale <= 1.0) {
        const double lo = std::max(0.0, start);
        const double hi = std::min(hi_limit, start + length - 1.0);
        for (std::size_t i = 0; i < out; ++i) {
            double pos = start + (static_cast<double>(i) + 0.5) * scale - 0.5;
            pos = std::clamp(pos, lo, std::max(lo, hi));
            const double base = std::floor(pos);
            const double frac = pos - base;
            const auto p0 = static_cast<std::size_t>(base);
            taps[i].push_back({p0, 1.0 - frac});
            if (frac > 0.0 && p0 + 1 < limit) taps[i].push_back({p0 + 1, frac});
        }
        return taps;
    }
    for (std::size_t i = 0; i < out; ++i) {
        const double a = start + static_cast<double>(i) * scale;
        const double b = start + static_cast<double>(i + 1) * scale;
        const auto first = static_cast<long>(std::floor(a));
        const auto last = static_cast<long>(std::ceil(b)) - 1;
        for (long p = first; p <= last; ++p) {
            const double overlap = std::min(b, static_cast<double>(p + 1)) - std::max(a, static_cast<double>(p));
            if (overlap <= 0.0) continue;
            const long clamped = std::clamp(p, 0L, static_cast<long>(limit) - 1);
            taps[i].push_back({static_cast<std::size_t>(clamped), overlap / scale});
        }
    }
    return taps;
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate)
{
    const bool par = m * n * k >= kParallelGrain * 8 && m > 1;
    if (!trans_a && !trans_b) {
#pragma omp parallel for schedule(static) if (par)
        for (std::size_t i = 0; i < m; ++i) {
            double* __restrict crow = c + i * n;
            if (!accumulate) std::fill(crow, crow + n, 0.0);
            const double* arow = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = arow[p];
                const double* __restrict brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else if (!trans_a && trans_b) {
#pragma omp parallel for schedule(static) if (par)
        for (std::size_t i = 0; i < m; ++i) {
            const double* __restrict arow = a + i * k;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double* __restrict brow = b + j * k;
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                crow[j] = accumulate ? crow[j] + acc : acc;
            }
        }
    } else if (trans_a && !trans_b) {
        // A is stored k x m.
#pragma omp parallel for schedule(static) if (par)
        for (std::size_t i = 0; i < m; ++i) {
            double* __restrict crow = c + i * n;
            if (!accumulate) std::fill(crow, crow + n, 0.0);
            for (std::size_t p = 0; p < k; ++p) {
                const double av = a[p * m + i];
                if (av == 0.0) continue;
                const double* __restrict brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
#pragma omp parallel for schedule(static) if (par)
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
                crow[j] = accumulate ? crow[j] + acc : acc;
            }
        }
    }
}

void attention_forward(const AttentionShape& s, const double* q, const double* k, const double* v,
                       const unsigned char* key_mask, double* out, double* probs)
{
    const std::size_t width = s.width();
    const auto pairs = static_cast<long>(s.batch * s.heads);
    const bool par = s.batch * s.heads * s.q_len * s.k_len * s.head_dim >= kParallelGrain * 4;
#pragma omp parallel for schedule(static) if (par)
    for (long pair = 0; pair < pairs; ++pair) {
        const std::size_t bi = static_cast<std::size_t>(pair) / s.heads;
        const std::size_t h = static_cast<std::size_t>(pair) % s.heads;
        const std::size_t off = h * s.head_dim;
        const unsigned char* mask = key_mask ? key_mask + bi * s.k_len : nullptr;
        for (std::size_t i = 0; i < s.q_len; ++i) {
            const double* qi = q + (bi * s.q_len + i) * width + off;
            double* p = probs + ((bi * s.heads + h) * s.q_len + i) * s.k_len;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < s.k_len; ++j) {
                if (mask && !mask[j]) {
                    p[j] = -std::numeric_limits<double>::infinity();
                    continue;
                }
                const double* kj = k + (bi * s.k_len + j) * width + off;
                double acc = 0.0;
                for (std::size_t d = 0; d < s.head_dim; ++d) acc += qi[d] * kj[d];
                p[j] = acc * s.scale;
                mx = std::max(mx, p[j]);
            }
            double* o = out + (bi * s.q_len + i) * width + off;
            std::fill(o, o + s.head_dim, 0.0);
            if (!std::isfinite(mx)) {
                std::fill(p, p + s.k_len, 0.0);
                continue;
            }
            double total = 0.0;
            for (std::size_t j = 0; j < s.k_len; ++j) {
                p[j] = (mask && !mask[j]) ? 0.0 : std::exp(p[j] - mx);
                total += p[j];
            }
            const double inv = 1.0 / total;
            for (std::size_t j = 0; j < s.k_len; ++j) {
                p[j] *= inv;
                if (p[j] == 0.0) continue;
                const double* vj = v + (bi * s.k_len + j) * width + off;
                for (std::size_t d = 0; d < s.head_dim; ++d) o[d] += p[j] * vj[d];
            }
        }
    }
}

void attention_backward(const AttentionShape& s, const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq, double* dk, double* dv)
{
    const std::size_t width = s.width();
    const auto pairs = static_cast<long>(s.batch * s.heads);
    const bool par = s.batch * s.heads * s.q_len * s.k_len * s.head_dim >= kParallelGrain * 4;
#pragma omp parallel for schedule(static) if (par)
    for (long pair = 0; pair < pairs; ++pair) {
        const std::size_t bi = static_cast<std::size_t>(pair) / s.heads;
        const std::size_t h = static_cast<std::size_t>(pair) % s.heads;
        const std::size_t off = h * s.head_dim;
        std::vector<double> dp(s.k_len);
        for (std::size_t i = 0; i < s.q_len; ++i) {
            const double* p = probs + ((bi * s.heads + h) * s.q_len + i) * s.k_len;
            const double* go = dout + (bi * s.q_len + i) * width + off;
            double dot = 0.0;
            for (std::size_t j = 0; j < s.k_len; ++j) {
                if (p[j] == 0.0) {
                    dp[j] = 0.0;
                    continue;
                }
                const double* vj = v + (bi * s.k_len + j) * width + off;
                double* dvj = dv + (bi * s.k_len + j) * width + off;
                double acc = 0.0;
                for (std::size_t d = 0; d < s.head_dim; ++d) {
                    acc += go[d] * vj[d];
                    dvj[d] += p[j] * go[d];
                }
                dp[j] = acc;
                dot += p[j] * acc;
            }
            const double* qi = q + (bi * s.q_len + i) * width + off;
            double* dqi = dq + (bi * s.q_len + i) * width + off;
            for (std::size_t j = 0; j < s.k_len; ++j) {
                if (p[j] == 0.0) continue;
                const double ds = p[j] * (dp[j] - dot) * s.scale;
                const double* kj = k + (bi * s.k_len + j) * width + off;
                double* dkj = dk + (bi * s.k_len + j) * width + off;
                for (std::size_t d = 0; d < s.head_dim; ++d) {
                    dqi[d] += ds * kj[d];
                    dkj[d] += ds * qi[d];
                }
            }
        }
    }
}

void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x, const double* gamma,
                        const double* beta, double eps, double* y, double* mean, double* rstd)
{
    const bool par = rows * cols >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * cols;
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= static_cast<double>(cols);
        const double rs = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        double* yr = y + r * cols;
        for (std::size_t c = 0; c < cols; ++c) yr[c] = (xr[c] - mu) * rs * gamma[c] + beta[c];
    }
}

void layer_norm_backward(std::size_t rows, std::size_t cols, const double* x, const double* gamma,
                         const double* mean, const double* rstd, const double* dy, double* dx, double* dgamma,
                         double* dbeta)
{
    const bool par = rows * cols >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * cols;
        const double* gr = dy + r * cols;
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double xhat = (xr[c] - mean[r]) * rstd[r];
            const double g = gr[c] * gamma[c];
            sum_g += g;
            sum_gx += g * xhat;
        }
        const double inv_n = 1.0 / static_cast<double>(cols);
        double* dxr = dx + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            const double xhat = (xr[c] - mean[r]) * rstd[r];
            const double g = gr[c] * gamma[c];
            dxr[c] += rstd[r] * (g - inv_n * sum_g - xhat * inv_n * sum_gx);
        }
    }
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t c = 0; c < cols; ++c) {
        double dg = 0.0;
        double db = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double xhat = (x[r * cols + c] - mean[r]) * rstd[r];
            dg += dy[r * cols + c] * xhat;
            db += dy[r * cols + c];
        }
        dgamma[c] += dg;
        dbeta[c] += db;
    }
}

void resample(const double* src, std::size_t h, std::size_t w, std::size_t c, Window window, std::size_t out_h,
              std::size_t out_w, double* dst)
{
    const auto ty = resample_taps(window.y, window.h, out_h, h);
    const auto tx = resample_taps(window.x, window.w, out_w, w);
    const bool par = out_h * out_w * c >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t i = 0; i < out_h; ++i) {
        for (std::size_t j = 0; j < out_w; ++j) {
            double* o = dst + (i * out_w + j) * c;
            std::fill(o, o + c, 0.0);
            for (const Tap& a : ty[i]) {
                for (const Tap& b : tx[j]) {
                    const double wgt = a.weight * b.weight;
                    const double* s = src + (a.index * w + b.index) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) o[ch] += wgt * s[ch];
                }
            }
        }
    }
}

void accumulate_coverage(double* map, std::size_t h, std::size_t w, std::span<const Region> regions, double weight)
{
    const bool par = h * w >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t y = 0; y < h; ++y) {
        double* row = map + y * w;
        for (const Region& r : regions) {
            const auto yi = static_cast<long>(y);
            if (yi < r.y || yi >= r.y + r.d) continue;
            const std::size_t x0 = static_cast<std::size_t>(std::max(0, r.x));
            const std::size_t x1 = std::min(w, static_cast<std::size_t>(std::max(0, r.x + r.d)));
            for (std::size_t x = x0; x < x1; ++x) row[x] += weight;
        }
    }
}

void im2col(const ConvShape& s, const double* x, double* cols)
{
    const std::size_t oh = s.out_h();
    const std::size_t ow = s.out_w();
    const std::size_t cw = s.col_width();
    const auto total = static_cast<long>(s.batch * oh * ow);
    const bool par = s.batch * oh * ow * cw >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
    for (long idx = 0; idx < total; ++idx) {
        const std::size_t b = static_cast<std::size_t>(idx) / (oh * ow);
        const std::size_t oy = (static_cast<std::size_t>(idx) / ow) % oh;
        const std::size_t ox = static_cast<std::size_t>(idx) % ow;
        double* out = cols + static_cast<std::size_t>(idx) * cw;
        for (std::size_t ky = 0; ky < s.kernel; ++ky) {
            const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
            for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
                double* dst = out + (ky * s.kernel + kx) * s.channels;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.height) || ix >= static_cast<long>(s.width)) {
                    std::fill(dst, dst + s.channels, 0.0);
                    continue;
                }
                const double* src =
                    x + ((b * s.height + static_cast<std::size_t>(iy)) * s.width + static_cast<std::size_t>(ix)) *
                            s.channels;
                std::memcpy(dst, src, s.channels * sizeof(double));
            }
        }
    }
}

void col2im(const ConvShape& s, const double* cols, double* dx)
{
    const std::size_t oh = s.out_h();
    const std::size_t ow = s.out_w();
    const std::size_t cw = s.col_width();
    // Windows of one image overlap, so images are the unit of parallel work.
    const bool par = s.batch > 1 && s.batch * oh * ow * cw >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double* src = cols + ((b * oh + oy) * ow + ox) * cw;
                for (std::size_t ky = 0; ky < s.kernel; ++ky) {
                    const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
                    if (iy < 0 || iy >= static_cast<long>(s.height)) continue;
                    for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                        const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
                        if (ix < 0 || ix >= static_cast<long>(s.width)) continue;
                        double* dst = dx + ((b * s.height + static_cast<std::size_t>(iy)) * s.width +
                                            static_cast<std::size_t>(ix)) *
                                               s.channels;
                        const double* g = src + (ky * s.kernel + kx) * s.channels;
                        for (std::size_t ch = 0; ch < s.channels; ++ch) dst[ch] += g[ch];
                    }
                }
            }
        }
    }
}

} // namespace ave::kernels

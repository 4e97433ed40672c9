#include "ave/core/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

// Serial reference kernels. They favour the most literal formulation of each
// computation over speed and are compared against the parallel kernels in
// tests and in bench/.

namespace ave::kernels::reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate)
{
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = trans_a ? a[p * m + i] : a[i * k + p];
                const double bv = trans_b ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
        }
    }
}

void attention_forward(const AttentionShape& s, const double* q, const double* k, const double* v,
                       const unsigned char* key_mask, double* out, double* probs)
{
    const std::size_t width = s.width();
    std::vector<double> scores(s.k_len);
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t h = 0; h < s.heads; ++h) {
            for (std::size_t i = 0; i < s.q_len; ++i) {
                bool any = false;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < s.k_len; ++j) {
                    const bool valid = key_mask == nullptr || key_mask[b * s.k_len + j] != 0;
                    scores[j] = -std::numeric_limits<double>::infinity();
                    if (!valid) continue;
                    double acc = 0.0;
                    for (std::size_t d = 0; d < s.head_dim; ++d)
                        acc += q[(b * s.q_len + i) * width + h * s.head_dim + d] *
                               k[(b * s.k_len + j) * width + h * s.head_dim + d];
                    scores[j] = acc * s.scale;
                    mx = std::max(mx, scores[j]);
                    any = true;
                }
                double* p = probs + ((b * s.heads + h) * s.q_len + i) * s.k_len;
                double total = 0.0;
                for (std::size_t j = 0; j < s.k_len; ++j) {
                    p[j] = (any && std::isfinite(scores[j])) ? std::exp(scores[j] - mx) : 0.0;
                    total += p[j];
                }
                for (std::size_t j = 0; j < s.k_len; ++j) p[j] = total > 0.0 ? p[j] / total : 0.0;
                for (std::size_t d = 0; d < s.head_dim; ++d) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < s.k_len; ++j)
                        acc += p[j] * v[(b * s.k_len + j) * width + h * s.head_dim + d];
                    out[(b * s.q_len + i) * width + h * s.head_dim + d] = acc;
                }
            }
        }
    }
}

void attention_backward(const AttentionShape& s, const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq, double* dk, double* dv)
{
    const std::size_t width = s.width();
    std::vector<double> dp(s.k_len);
    std::vector<double> ds(s.k_len);
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t h = 0; h < s.heads; ++h) {
            for (std::size_t i = 0; i < s.q_len; ++i) {
                const double* p = probs + ((b * s.heads + h) * s.q_len + i) * s.k_len;
                const std::size_t qrow = (b * s.q_len + i) * width + h * s.head_dim;
                for (std::size_t j = 0; j < s.k_len; ++j) {
                    const std::size_t krow = (b * s.k_len + j) * width + h * s.head_dim;
                    double acc = 0.0;
                    for (std::size_t d = 0; d < s.head_dim; ++d) {
                        acc += dout[qrow + d] * v[krow + d];
                        dv[krow + d] += p[j] * dout[qrow + d];
                    }
                    dp[j] = acc;
                }
                double dot = 0.0;
                for (std::size_t j = 0; j < s.k_len; ++j) dot += p[j] * dp[j];
                for (std::size_t j = 0; j < s.k_len; ++j) ds[j] = p[j] * (dp[j] - dot) * s.scale;
                for (std::size_t j = 0; j < s.k_len; ++j) {
                    const std::size_t krow = (b * s.k_len + j) * width + h * s.head_dim;
                    for (std::size_t d = 0; d < s.head_dim; ++d) {
                        dq[qrow + d] += ds[j] * k[krow + d];
                        dk[krow + d] += ds[j] * q[qrow + d];
                    }
                }
            }
        }
    }
}

void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x, const double* gamma,
                        const double* beta, double eps, double* y, double* mean, double* rstd)
{
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mu += x[r * cols + c];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (x[r * cols + c] - mu) * (x[r * cols + c] - mu);
        var /= static_cast<double>(cols);
        mean[r] = mu;
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c)
            y[r * cols + c] = (x[r * cols + c] - mu) * rstd[r] * gamma[c] + beta[c];
    }
}

void layer_norm_backward(std::size_t rows, std::size_t cols, const double* x, const double* gamma,
                         const double* mean, const double* rstd, const double* dy, double* dx, double* dgamma,
                         double* dbeta)
{
    const double n = static_cast<double>(cols);
    std::vector<double> xhat(cols);
    std::vector<double> g(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            xhat[c] = (x[r * cols + c] - mean[r]) * rstd[r];
            g[c] = dy[r * cols + c] * gamma[c];
            sum_g += g[c];
            sum_gx += g[c] * xhat[c];
            dgamma[c] += dy[r * cols + c] * xhat[c];
            dbeta[c] += dy[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c)
            dx[r * cols + c] += rstd[r] * (g[c] - sum_g / n - xhat[c] * sum_gx / n);
    }
}

void resample(const double* src, std::size_t h, std::size_t w, std::size_t c, Window window, std::size_t out_h,
              std::size_t out_w, double* dst)
{
    // Two separable passes: rows first into an [h, out_w, c] buffer, then columns.
    const auto tx = resample_taps(window.x, window.w, out_w, w);
    const auto ty = resample_taps(window.y, window.h, out_h, h);
    std::vector<double> horizontal(h * out_w * c, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t j = 0; j < out_w; ++j)
            for (const Tap& t : tx[j])
                for (std::size_t ch = 0; ch < c; ++ch)
                    horizontal[(y * out_w + j) * c + ch] += t.weight * src[(y * w + t.index) * c + ch];
    std::fill(dst, dst + out_h * out_w * c, 0.0);
    for (std::size_t i = 0; i < out_h; ++i)
        for (const Tap& t : ty[i])
            for (std::size_t j = 0; j < out_w; ++j)
                for (std::size_t ch = 0; ch < c; ++ch)
                    dst[(i * out_w + j) * c + ch] += t.weight * horizontal[(t.index * out_w + j) * c + ch];
}

void accumulate_coverage(double* map, std::size_t h, std::size_t w, std::span<const Region> regions, double weight)
{
    for (const Region& r : regions)
        for (long y = std::max(0, r.y); y < std::min<long>(static_cast<long>(h), r.y + r.d); ++y)
            for (long x = std::max(0, r.x); x < std::min<long>(static_cast<long>(w), r.x + r.d); ++x)
                map[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] += weight;
}

void im2col(const ConvShape& s, const double* x, double* cols)
{
    const std::size_t cw = s.col_width();
    std::size_t row = 0;
    for (std::size_t b = 0; b < s.batch; ++b)
        for (std::size_t oy = 0; oy < s.out_h(); ++oy)
            for (std::size_t ox = 0; ox < s.out_w(); ++ox, ++row)
                for (std::size_t ky = 0; ky < s.kernel; ++ky)
                    for (std::size_t kx = 0; kx < s.kernel; ++kx)
                        for (std::size_t ch = 0; ch < s.channels; ++ch) {
                            const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
                            const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
                            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(s.height) &&
                                                ix < static_cast<long>(s.width);
                            cols[row * cw + (ky * s.kernel + kx) * s.channels + ch] =
                                inside ? x[((b * s.height + static_cast<std::size_t>(iy)) * s.width +
                                            static_cast<std::size_t>(ix)) *
                                               s.channels +
                                           ch]
                                       : 0.0;
                        }
}

void col2im(const ConvShape& s, const double* cols, double* dx)
{
    const std::size_t cw = s.col_width();
    std::size_t row = 0;
    for (std::size_t b = 0; b < s.batch; ++b)
        for (std::size_t oy = 0; oy < s.out_h(); ++oy)
            for (std::size_t ox = 0; ox < s.out_w(); ++ox, ++row)
                for (std::size_t ky = 0; ky < s.kernel; ++ky)
                    for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                        const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
                        const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
                        if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.height) || ix >= static_cast<long>(s.width))
                            continue;
                        for (std::size_t ch = 0; ch < s.channels; ++ch)
                            dx[((b * s.height + static_cast<std::size_t>(iy)) * s.width +
                                static_cast<std::size_t>(ix)) *
                                   s.channels +
                               ch] += cols[row * cw + (ky * s.kernel + kx) * s.channels + ch];
                    }
}

} // namespace ave::kernels::reference

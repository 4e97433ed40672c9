#pragma once

// Numeric kernels shared by the autograd ops, the camera simulator and the
// glimpse-map aggregation.
//
// Two implementations with identical signatures exist:
//   ave::kernels            OpenMP-parallel, used everywhere in the library
//   ave::kernels::reference plain serial loops, kept for tests and benchmarks
//
// Parallel kernels only partition output elements between threads, never a
// reduction, so results do not depend on the thread count.

#include <cstddef>
#include <span>
#include <vector>

namespace ave::kernels {

struct AttentionShape {
    std::size_t batch = 1;
    std::size_t q_len = 0;
    std::size_t k_len = 0;
    std::size_t heads = 1;
    std::size_t head_dim = 0;
    double scale = 1.0;

    std::size_t width() const { return heads * head_dim; }
};

/// Source window in pixel units: top-left corner and side lengths.
struct Window {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;
};

struct Region {
    int x = 0;
    int y = 0;
    int d = 0;
};

struct ConvShape {
    std::size_t batch = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t pad = 0;

    std::size_t out_h() const { return (height + 2 * pad - kernel) / stride + 1; }
    std::size_t out_w() const { return (width + 2 * pad - kernel) / stride + 1; }
    std::size_t col_width() const { return kernel * kernel * channels; }
};

/// One tap of a separable resampling filter.
struct Tap {
    std::size_t index;
    double weight;
};

/// Per-output-sample taps along one axis. Bilinear when the window is not
/// larger than the output, exact area averaging otherwise.
std::vector<std::vector<Tap>> resample_taps(double start, double length, std::size_t out, std::size_t limit);

// ---------------------------------------------------------------------------

/// C = op(A) * op(B), or C += ... when accumulate is set. op(A) is m x k and
/// op(B) is k x n; all matrices are dense row-major.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

/// Scaled dot-product attention for every (batch, head) pair.
/// q: [batch*q_len, width], k/v: [batch*k_len, width], key_mask: [batch*k_len]
/// (nonzero = attendable, may be null), out: [batch*q_len, width],
/// probs: [batch, heads, q_len, k_len].
void attention_forward(const AttentionShape& s, const double* q, const double* k, const double* v,
                       const unsigned char* key_mask, double* out, double* probs);

/// Accumulates gradients into dq, dk, dv.
void attention_backward(const AttentionShape& s, const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq, double* dk, double* dv);

void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x, const double* gamma,
                        const double* beta, double eps, double* y, double* mean, double* rstd);

/// Accumulates into dx, dgamma and dbeta.
void layer_norm_backward(std::size_t rows, std::size_t cols, const double* x, const double* gamma,
                         const double* mean, const double* rstd, const double* dy, double* dx, double* dgamma,
                         double* dbeta);

/// Resamples a window of an [h, w, c] image into an [out_h, out_w, c] image.
void resample(const double* src, std::size_t h, std::size_t w, std::size_t c, Window window, std::size_t out_h,
              std::size_t out_w, double* dst);

/// Adds `weight` to every pixel of an [h, w] map covered by each region.
void accumulate_coverage(double* map, std::size_t h, std::size_t w, std::span<const Region> regions, double weight);

/// x: [batch, height, width, channels] -> cols: [batch*out_h*out_w, k*k*channels].
void im2col(const ConvShape& s, const double* x, double* cols);
/// Accumulating inverse of im2col.
void col2im(const ConvShape& s, const double* cols, double* dx);

namespace reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);
void attention_forward(const AttentionShape& s, const double* q, const double* k, const double* v,
                       const unsigned char* key_mask, double* out, double* probs);
void attention_backward(const AttentionShape& s, const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq, double* dk, double* dv);
void layer_norm_forward(std::size_t rows, std::size_t cols, const double* x, const double* gamma,
                        const double* beta, double eps, double* y, double* mean, double* rstd);
void layer_norm_backward(std::size_t rows, std::size_t cols, const double* x, const double* gamma,
                         const double* mean, const double* rstd, const double* dy, double* dx, double* dgamma,
                         double* dbeta);
void resample(const double* src, std::size_t h, std::size_t w, std::size_t c, Window window, std::size_t out_h,
              std::size_t out_w, double* dst);
void accumulate_coverage(double* map, std::size_t h, std::size_t w, std::span<const Region> regions, double weight);
void im2col(const ConvShape& s, const double* x, double* cols);
void col2im(const ConvShape& s, const double* cols, double* dx);

} // namespace reference

} // namespace ave::kernels

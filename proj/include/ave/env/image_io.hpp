#pragma once

#include <filesystem>

#include "ave/core/tensor.hpp"

namespace ave::env {

/// Reads PNG, PPM (P6) or PGM (P5) into [H, W, 3] doubles in [0, 1].
/// Grayscale is replicated over the channels, alpha is dropped.
Tensor read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG from [H, W, C] values clamped to [0, 1]
/// (C = 1 or 3). Output bytes depend only on the pixel values.
void write_png(const std::filesystem::path& path, const Tensor& pixels);
void write_ppm(const std::filesystem::path& path, const Tensor& pixels);

/// Resamples a whole [H, W, C] image to out_h x out_w.
Tensor resize_image(const Tensor& pixels, std::size_t out_h, std::size_t out_w);

} // namespace ave::env

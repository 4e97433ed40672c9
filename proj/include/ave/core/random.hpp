#pragma once

#include <cstdint>
#include <random>

#include "ave/core/tensor.hpp"

namespace ave {

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi);

/// Derives an independent stream from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

} // namespace ave

#include "ave/core/random.hpp"

namespace ave {

Tensor randn(Shape shape, Rng& rng, double stddev)
{
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi)
{
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    // splitmix64 over the combined value
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace ave

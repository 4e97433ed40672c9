#include "ave/agent/replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ave/core/error.hpp"

namespace ave::agent {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t patches_per_step)
    : capacity_(capacity), patches_per_step_(patches_per_step)
{
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t)
{
    ensure(t.state && t.next_state, "replay: transition without states");
    ensure(std::isfinite(t.reward), "replay: non-finite reward");
    const auto& a = t.action;
    ensure(a.x >= 0.0 && a.x <= 1.0 && a.y >= 0.0 && a.y <= 1.0 && a.z >= 0.0 && a.z <= 1.0,
           "replay: action outside [0,1]^3");
    if (patches_per_step_ > 0)
        ensure(t.next_state->size() == t.state->size() + patches_per_step_,
               "replay: next state does not extend the state by one glimpse");
    std::lock_guard lock(mutex_);
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
    ++pushed_;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch, Rng& rng) const
{
    std::lock_guard lock(mutex_);
    const std::size_t n = items_.size();
    batch = std::min(batch, n);
    std::vector<Transition> out;
    out.reserve(batch);
    // Floyd's algorithm: batch distinct indices in O(batch).
    std::vector<std::size_t> chosen;
    chosen.reserve(batch);
    for (std::size_t j = n - batch; j < n; ++j) {
        const std::size_t r = std::uniform_int_distribution<std::size_t>(0, j)(rng);
        if (std::find(chosen.begin(), chosen.end(), r) == chosen.end()) chosen.push_back(r);
        else chosen.push_back(j);
    }
    for (std::size_t i : chosen) out.push_back(items_[i]);
    return out;
}

std::size_t ReplayBuffer::size() const
{
    std::lock_guard lock(mutex_);
    return items_.size();
}

std::uint64_t ReplayBuffer::total_pushed() const
{
    std::lock_guard lock(mutex_);
    return pushed_;
}

void ReplayBuffer::clear()
{
    std::lock_guard lock(mutex_);
    items_.clear();
}

} // namespace ave::agent

#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <vector>

#include "ave/agent/state.hpp"
#include "ave/core/random.hpp"
#include "ave/env/scene.hpp"

namespace ave::agent {

struct Transition {
    StatePtr state;
    env::GlimpseAction action;
    double reward = 0.0;
    StatePtr next_state;
    bool done = false;
};

/// FIFO replay memory, safe for one writer and one reader at a time.
/// Consecutive transitions of an episode share their state objects.
class ReplayBuffer {
public:
    /// patches_per_step > 0 enables the check that next_state extends state
    /// by exactly that many patches.
    explicit ReplayBuffer(std::size_t capacity, std::size_t patches_per_step = 0);

    /// Throws InvariantViolation on a malformed transition.
    void push(Transition t);
    /// Uniform sample without replacement (batch is capped at size()).
    std::vector<Transition> sample(std::size_t batch, Rng& rng) const;

    std::size_t size() const;
    std::size_t capacity() const { return capacity_; }
    std::uint64_t total_pushed() const;
    void clear();

private:
    std::size_t capacity_;
    std::size_t patches_per_step_;
    std::deque<Transition> items_;
    std::uint64_t pushed_ = 0;
    mutable std::mutex mutex_;
};

} // namespace ave::agent

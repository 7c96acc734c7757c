#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "muse/rng.hpp"

namespace muse {

struct Transition {
    std::vector<double> observation;
    /// Discrete agents store the action index as a single value.
    std::vector<double> action;
    double reward = 0.0;
    std::vector<double> next_observation;
    /// Terminal (not merely truncated): no bootstrap from next_observation.
    bool done = false;
};

/// Fixed-capacity ring buffer; once full, each push evicts the oldest entry.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    /// Total pushes so far.
    std::uint64_t inserted() const noexcept { return inserted_; }
    /// Entry i in insertion order (0 = oldest retained).
    const Transition& at(std::size_t i) const;
    /// Uniform sample with replacement over the current contents.
    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

private:
    std::size_t capacity_;
    std::vector<Transition> items_;
    std::size_t head_ = 0;
    std::uint64_t inserted_ = 0;
};

/// r + gamma * max(q_next), or r when the transition is terminal.
double q_target(double reward, bool done, std::span<const double> q_next, double gamma);
double q_target(const Transition& t, std::span<const double> q_next, double gamma);

}  // namespace muse

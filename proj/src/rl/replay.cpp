#include "muse/rl/replay.hpp"

#include <algorithm>
#include <cmath>

#include "muse/errors.hpp"

namespace muse {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ContractError("replay buffer capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
    if (!std::isfinite(t.reward)) throw NumericError("replay buffer: non-finite reward");
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[head_] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
    ++inserted_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= items_.size()) throw ContractError("replay buffer index out of range");
    return items_[(head_ + i) % items_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
    if (items_.empty()) throw ContractError("cannot sample from an empty replay buffer");
    std::vector<const Transition*> out(batch);
    for (auto& p : out) p = &items_[rng.uniform_int(items_.size())];
    return out;
}

double q_target(double reward, bool done, std::span<const double> q_next, double gamma) {
    if (done) return reward;
    if (q_next.empty()) throw ContractError("q_target: empty next-state values");
    return reward + gamma * *std::max_element(q_next.begin(), q_next.end());
}

double q_target(const Transition& t, std::span<const double> q_next, double gamma) {
    return q_target(t.reward, t.done, q_next, gamma);
}

}  // namespace muse

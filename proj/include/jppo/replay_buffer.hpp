#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "jppo/env.hpp"
#include "jppo/error.hpp"
#include "jppo/rng.hpp"

namespace jppo::agent {

struct Transition {
    env::StateVec state{};
    int action_index = 0;
    double reward = 0.0;
    env::StateVec next_state{};
    bool terminal = false;
};

/// Bounded FIFO of transitions with uniform sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity)
    {
        detail::require(capacity > 0, "replay capacity must be positive");
        storage_.reserve(std::min<std::size_t>(capacity, 1u << 16));
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return storage_.size(); }
    bool empty() const { return storage_.empty(); }

    /// Appends, evicting the oldest entry once full.
    void push(const Transition& t)
    {
        detail::require(t.action_index >= 0 && t.action_index < service::kNumActions,
                        "transition action index out of range");
        if (storage_.size() < capacity_) {
            storage_.push_back(t);
        } else {
            storage_[head_] = t;
            head_ = (head_ + 1) % capacity_;
        }
    }

    /// i = 0 is the oldest stored transition.
    const Transition& at(std::size_t i) const
    {
        detail::require(i < storage_.size(), "replay index out of range");
        return storage_[(head_ + i) % storage_.size()];
    }

    /// batch distinct transitions, uniformly (Floyd's subset sampling).
    void sample(std::size_t batch, Rng& rng, std::vector<const Transition*>& out) const
    {
        detail::require(batch >= 1 && batch <= storage_.size(), "batch larger than buffer");
        out.clear();
        picked_.clear();
        const std::size_t n = storage_.size();
        for (std::size_t j = n - batch; j < n; ++j) {
            std::size_t t = uniform_index(rng, j + 1);
            if (std::find(picked_.begin(), picked_.end(), t) != picked_.end()) {
                t = j;
            }
            picked_.push_back(t);
        }
        for (std::size_t idx : picked_) {
            out.push_back(&storage_[idx]);
        }
    }

    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const
    {
        std::vector<const Transition*> out;
        sample(batch, rng, out);
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> storage_;
    mutable std::vector<std::size_t> picked_;
};

} // namespace jppo::agent

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "demorl/env.hpp"

namespace demorl {

// Fixed-capacity ring of transitions, oldest-first eviction.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim);

    void push(const Transition& t);

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t state_dim() const { return state_dim_; }
    std::size_t action_dim() const { return action_dim_; }
    bool empty() const { return size_ == 0; }

    // Logical index: 0 is the oldest stored transition.
    const Transition& at(std::size_t i) const;

    // I.i.d. uniform with replacement; throws on an empty buffer.
    std::vector<Transition> sample_uniform(std::size_t n, std::uint64_t seed) const;

    void save(const std::string& path) const;
    static ReplayBuffer load(const std::string& path);

private:
    std::size_t capacity_, state_dim_, action_dim_;
    std::size_t head_ = 0;  // next write slot
    std::size_t size_ = 0;
    std::vector<Transition> storage_;
};

// Each sampled element comes from `a` with probability `ratio`, else from
// `b`; an empty side falls back to the other. Throws if both are empty.
std::vector<Transition> sample_union(const ReplayBuffer& a, const ReplayBuffer& b,
                                     std::size_t n, double ratio, std::uint64_t seed);

}  // namespace demorl

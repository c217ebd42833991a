#pragma once

#include <cstdint>
#include <vector>

#include "demorl/ars.hpp"
#include "demorl/dmd_mpc.hpp"

namespace demorl {

// Deployment-time guidance: each true-env action is a convex combination
// of the frozen policy's action and the planner's elite-weighted action
// computed on a (possibly biased) model.
struct DemoLayerConfig {
    double mixing = 0.5;  // gamma_t, constant schedule
    MpcConfig mpc;

    void validate() const;
};

struct GuidedStepLog {
    VecD u_policy, u_mpc, u;
    bool fallback = false;  // planner diverged; pure policy action used
};

// The policy parameters are never modified. `cost_env` supplies the stage
// cost (true closed-form reward); `model` may be biased.
VecD guided_action(const LinearPolicy& policy, const DynamicsModel& model,
                   std::span<const double> x, const DemoLayerConfig& cfg,
                   const Env& cost_env, std::uint64_t seed,
                   GuidedStepLog* log = nullptr);

struct GuidedEpisode {
    double episode_return = 0.0;
    std::vector<GuidedStepLog> steps;
    std::size_t fallback_count = 0;
};

GuidedEpisode run_guided_episode(const LinearPolicy& policy, const Env& true_env,
                                 const DynamicsModel& model, const DemoLayerConfig& cfg,
                                 std::uint64_t seed);

}  // namespace demorl

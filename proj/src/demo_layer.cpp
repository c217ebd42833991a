#include "demorl/demo_layer.hpp"

#include <cmath>
#include <iostream>

namespace demorl {

void DemoLayerConfig::validate() const {
    require(mixing >= 0.0 && mixing <= 1.0, "DemoLayerConfig: mixing must be in [0,1]");
    mpc.validate();
}

VecD guided_action(const LinearPolicy& policy, const DynamicsModel& model,
                   std::span<const double> x, const DemoLayerConfig& cfg,
                   const Env& cost_env, std::uint64_t seed, GuidedStepLog* log) {
    cfg.validate();
    const ActionBounds& bounds = policy.bounds;
    const VecD u_policy = policy.act(x);

    const CostFn cost = [&cost_env](std::span<const double> xs,
                                    std::span<const double> us) {
        return cost_env.cost(xs, us);
    };

    VecD u_mpc = u_policy;
    bool fallback = false;
    try {
        // mu-tilde comes from rolling the frozen policy through the model
        // (the fixed shift operator); the elite-weighted mean g is the
        // planner's action, i.e. the update at alpha = 1.
        Rng shift_rng = make_rng(derive_seed(seed, "shift"));
        const GaussianControlSequence shifted = policy_shift(
            [&policy](std::span<const double> xs) { return policy.act(xs); }, model, x,
            cfg.mpc.horizon, cfg.mpc.control_variance(bounds), bounds, shift_rng);
        const RolloutBatch batch = sample_rollouts(
            model, x, shifted, cfg.mpc.rollouts, derive_seed(seed, "batch"), cost,
            nullptr, cfg.mpc.discount, bounds, cfg.mpc.blowup_bound);
        const GaussianControlSequence elite =
            cfg.mpc.objective == MpcObjective::Mppi
                ? mppi_update(shifted, batch, cfg.mpc.temperature, bounds)
                : cem_update(shifted, batch, 1.0, cfg.mpc.elite_fraction,
                             cfg.mpc.temperature, cfg.mpc.weighting, bounds);
        for (std::size_t j = 0; j < u_mpc.size(); ++j) u_mpc[j] = elite.mean.at(0, j);
    } catch (const std::runtime_error& err) {
        std::cerr << "[demo-layer] planner failed (" << err.what()
                  << "); falling back to the policy action\n";
        fallback = true;
        u_mpc = u_policy;
    }

    VecD u(u_policy.size());
    const double g = fallback ? 0.0 : cfg.mixing;
    for (std::size_t j = 0; j < u.size(); ++j)
        u[j] = (1.0 - g) * u_policy[j] + g * u_mpc[j];
    u = bounds.clip(std::move(u));

    if (log) {
        log->u_policy = u_policy;
        log->u_mpc = u_mpc;
        log->u = u;
        log->fallback = fallback;
    }
    return u;
}

GuidedEpisode run_guided_episode(const LinearPolicy& policy, const Env& true_env,
                                 const DynamicsModel& model, const DemoLayerConfig& cfg,
                                 std::uint64_t seed) {
    GuidedEpisode episode;
    EnvState state = true_env.reset(derive_seed(seed, "reset"));
    bool done = false;
    std::size_t t = 0;
    while (!done) {
        GuidedStepLog log;
        const VecD u =
            guided_action(policy, model, state.x, cfg, true_env,
                          derive_seed(seed, "step", t), &log);
        StepResult sr = true_env.step(state, u);
        episode.episode_return += sr.reward;
        episode.fallback_count += log.fallback ? 1 : 0;
        episode.steps.push_back(std::move(log));
        state = std::move(sr.state);
        done = sr.done;
        ++t;
    }
    return episode;
}

}  // namespace demorl

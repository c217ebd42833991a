#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "demorl/dmd_mpc.hpp"
#include "demorl/env.hpp"
#include "demorl/matrix.hpp"

namespace demorl {

// Linear state-feedback policy with optional running state normalization:
// u = clip(theta * diag(var)^(-1/2) (x - mean)).
struct LinearPolicy {
    Matrix theta;  // m x n
    VecD obs_mean;
    VecD obs_var;  // running variance, floored when used as a divisor
    std::size_t obs_count = 0;
    bool normalize = true;
    ActionBounds bounds;

    static LinearPolicy zeros(std::size_t state_dim, std::size_t action_dim,
                              ActionBounds bounds, bool normalize = true);
    VecD act(std::span<const double> x) const;
    void update_obs_stats(const std::vector<VecD>& states);
};

struct ArsConfig {
    double step_size = 0.02;        // alpha
    double noise = 0.03;            // nu, perturbation scale
    std::size_t directions = 8;     // N
    std::size_t top_directions = 4; // b
    bool accelerated = false;
    double accel_beta = 0.5;        // running-average decay
    double accel_gamma = 0.9;       // mix of fresh iterate vs running average

    void validate() const;
};

struct EpisodeResult {
    double episode_return = 0.0;
    std::vector<VecD> states;
};

// Evaluates a (perturbed) policy for one episode; the seed controls the
// environment draw so +delta and -delta see common noise.
using EpisodeEvaluator = std::function<EpisodeResult(const LinearPolicy&, std::uint64_t)>;

EpisodeEvaluator make_env_evaluator(const Env& env);

struct ArsIterationReport {
    double mean_used_return = 0.0;
    double best_return = 0.0;
    double sigma_r = 0.0;
    bool sigma_degenerate = false;  // sigma_R was 0; scaling skipped
};

// One ARS update: 2N evaluations with frozen normalization stats, top-b
// direction selection, return-std scaled step, then stats refresh.
ArsIterationReport ars_iteration(LinearPolicy& policy, const EpisodeEvaluator& evaluate,
                                 const ArsConfig& cfg, std::uint64_t seed);

// Accelerated variant: mixes the freshest iterate (history.back()) with a
// normalized exponentially-weighted average of the earlier iterates.
Matrix accelerated_step(const std::vector<Matrix>& history, const ArsConfig& cfg);

void save_policy_file(const std::string& path, const LinearPolicy& policy);
LinearPolicy load_policy_file(const std::string& path);

}  // namespace demorl

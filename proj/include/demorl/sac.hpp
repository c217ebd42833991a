#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "demorl/adam.hpp"
#include "demorl/dmd_mpc.hpp"
#include "demorl/env.hpp"
#include "demorl/mlp.hpp"
#include "demorl/rng.hpp"

namespace demorl {

struct SacConfig {
    std::vector<std::size_t> hidden{64, 64};
    double learning_rate = 3e-4;
    double discount = 0.99;
    double tau = 0.005;
    double entropy_weight = 0.2;
    bool auto_entropy = false;  // tunes entropy_weight toward -action_dim entropy
    double entropy_lr = 3e-4;
    double logstd_min = -20.0;
    double logstd_max = 2.0;
};

// Actor emits (pre-squash mean, raw log-std) per action dim; critics score
// (x, u); the value net V supplies the planner's terminal cost.
struct SacAgent {
    Mlp actor;
    Mlp critic1, critic2;
    Mlp value;
    Mlp value_target, critic1_target, critic2_target;
    AdamState actor_opt, critic1_opt, critic2_opt, value_opt;
    SacConfig cfg;
    ActionBounds bounds;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;

    static SacAgent create(std::size_t state_dim, std::size_t action_dim,
                           ActionBounds bounds, const SacConfig& cfg,
                           std::uint64_t seed);
};

struct ActionSample {
    VecD u;
    double log_prob = 0.0;
};

// All intermediates of one squashed-Gaussian evaluation at fixed noise.
struct ActorEval {
    VecD mean, log_std, std_dev, pre_squash, squashed, u;
    double log_prob = 0.0;
};

ActorEval actor_eval(const SacAgent& agent, std::span<const double> x,
                     std::span<const double> noise);

ActionSample actor_sample(const SacAgent& agent, std::span<const double> x, Rng& rng);
ActionSample actor_sample(const SacAgent& agent, std::span<const double> x,
                          std::uint64_t seed);

// Deterministic evaluation action: squashed pre-noise mean.
VecD actor_mean_action(const SacAgent& agent, std::span<const double> x);

double value_of(const SacAgent& agent, std::span<const double> x);
double critic_value(const SacAgent& agent, std::span<const double> x,
                    std::span<const double> u, int which);  // 1 or 2

// Gradient of [entropy_weight * log pi(u|x) - min Q(x, u)] w.r.t. actor
// parameters at fixed noise; exposed so tests can finite-difference it.
MlpGrads actor_loss_gradients(const SacAgent& agent, std::span<const double> x,
                              std::span<const double> noise,
                              double* loss_out = nullptr);

struct SacLossReport {
    double j_value = 0.0, j_q1 = 0.0, j_q2 = 0.0, j_pi = 0.0;
    double entropy_weight = 0.0;
};

// One gradient step on critics, value, and actor from a common parameter
// snapshot. Target nets are untouched; call target_update separately.
SacLossReport sac_update(SacAgent& agent, std::span<const Transition> batch, Rng& rng);

// target <- tau * live + (1 - tau) * target for all three target nets.
void target_update(SacAgent& agent, double tau);

void save_sac(std::ostream& out, const SacAgent& agent);
SacAgent load_sac(std::istream& in);
void save_sac_file(const std::string& path, const SacAgent& agent);
SacAgent load_sac_file(const std::string& path);

}  // namespace demorl

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "demorl/ars.hpp"
#include "demorl/config.hpp"
#include "demorl/demo_layer.hpp"
#include "demorl/dmd_mpc.hpp"
#include "demorl/sac.hpp"

namespace demorl {

struct ExperimentConfig {
    std::string env_name = "pendulum";
    std::map<std::string, double> env_overrides;
    std::vector<std::uint64_t> seeds{0};

    // DeMoRL / SAC budgets. Defaults shrink the reference budgets
    // (1,000 env / 10,000 model steps per epoch) while keeping the 1:10
    // env:model ratio.
    std::size_t epochs = 30;
    std::size_t env_steps_per_epoch = 400;
    std::size_t model_train_epochs = 40;
    std::size_t model_transitions_per_epoch = 4000;
    std::size_t gradient_steps_per_epoch = 400;
    std::size_t sac_batch_size = 128;
    double union_ratio = 0.5;
    std::size_t d_env_capacity = 1000000;
    std::size_t d_mpc_capacity = 400000;
    std::size_t ensemble_size = 5;
    std::size_t ensemble_select = 3;
    std::vector<std::size_t> ensemble_hidden{32, 32};
    std::size_t min_model_data = 250;
    std::size_t eval_episodes = 5;
    double eval_threshold = -1000.0;

    MpcConfig mpc;
    SacConfig sac;

    ArsConfig ars;
    std::size_t ars_iterations = 300;

    // DeMo layer
    double demo_mixing = 0.5;
    double demo_bias_length_scale = 1.2;
    std::size_t demo_episodes = 5;
    std::string demo_policy_path;
    std::string demo_model_source = "analytic_biased";  // or learned_ensemble
    std::size_t demo_model_env_steps = 5000;
    std::size_t demo_model_train_epochs = 80;

    // regret toy
    std::size_t regret_rounds = 1000;
    double regret_alpha_c = 0.5;
    double regret_box_radius = 2.0;
    double regret_variance = 1.0;
    std::size_t regret_grid_points = 200;
    std::string regret_target = "static";  // or "drift"

    std::string out_dir = "out";

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_config(const ConfigFile& file);
    std::string snapshot_text(const std::string& command) const;
};

struct RunLogRow {
    std::size_t epoch = 0;
    std::size_t env_steps = 0;  // true-environment transitions only
    double mean_eval_return = 0.0;
    double std_eval_return = 0.0;
    std::size_t d_env_size = 0;
    std::size_t d_mpc_size = 0;
    double wall_seconds = 0.0;
};

struct RunLog {
    std::vector<RunLogRow> rows;
};

// Deterministic-policy evaluation: actor mean (SAC) or the linear policy.
double evaluate_policy(const Env& env, const std::function<VecD(std::span<const double>)>& policy,
                       std::size_t episodes, std::uint64_t seed, double* return_std = nullptr);

RunLog train_demorl(const ExperimentConfig& cfg, std::uint64_t seed,
                    SacAgent* agent_out = nullptr);
RunLog train_sac_baseline(const ExperimentConfig& cfg, std::uint64_t seed,
                          SacAgent* agent_out = nullptr);

struct ArsTrainResult {
    RunLog log;
    LinearPolicy policy;
};
ArsTrainResult train_ars(const ExperimentConfig& cfg, std::uint64_t seed);

struct DemoEpisodeRow {
    std::size_t episode = 0;
    double unguided_return = 0.0;
    double guided_return = 0.0;
    std::size_t fallback_steps = 0;
};
std::vector<DemoEpisodeRow> run_demolayer(const ExperimentConfig& cfg,
                                          const LinearPolicy& policy,
                                          std::uint64_t seed);

struct AblationRow {
    double elite_fraction = 0.0;
    double median_epochs_to_threshold = 0.0;  // +inf when censored
    std::vector<double> per_seed_epochs;
};
std::vector<AblationRow> ablate_elite(const ExperimentConfig& cfg,
                                      const std::vector<double>& elite_fractions);

// First epoch (1-based count of epochs consumed) whose mean eval return
// reaches the threshold; +inf when never reached.
double epochs_to_threshold(const RunLog& log, double threshold);

}  // namespace demorl

#include "demorl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "demorl/ensemble.hpp"
#include "demorl/replay.hpp"

#ifndef DEMORL_VERSION
#define DEMORL_VERSION "v0.1.0-unstamped"
#endif

namespace demorl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::vector<std::size_t> to_sizes(const std::vector<double>& v) {
    std::vector<std::size_t> out;
    for (double x : v) out.push_back(std::size_t(x));
    return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    return from_config(ConfigFile::parse_file(path));
}

ExperimentConfig ExperimentConfig::from_config(const ConfigFile& file) {
    ExperimentConfig cfg;
    cfg.env_name = file.text_or("run", "env", cfg.env_name);
    for (const double s : file.number_list_or("run", "seeds", {0}))
        cfg.seeds.push_back(std::uint64_t(s));
    cfg.seeds.erase(cfg.seeds.begin());  // drop the default placeholder
    if (cfg.seeds.empty()) cfg.seeds = {0};
    cfg.epochs = std::size_t(file.number_or("run", "epochs", double(cfg.epochs)));
    cfg.env_steps_per_epoch = std::size_t(
        file.number_or("run", "env_steps_per_epoch", double(cfg.env_steps_per_epoch)));
    cfg.model_train_epochs = std::size_t(
        file.number_or("run", "model_train_epochs", double(cfg.model_train_epochs)));
    cfg.model_transitions_per_epoch =
        std::size_t(file.number_or("run", "model_transitions_per_epoch",
                                   double(cfg.model_transitions_per_epoch)));
    cfg.gradient_steps_per_epoch =
        std::size_t(file.number_or("run", "gradient_steps_per_epoch",
                                   double(cfg.gradient_steps_per_epoch)));
    cfg.sac_batch_size =
        std::size_t(file.number_or("run", "sac_batch_size", double(cfg.sac_batch_size)));
    cfg.union_ratio = file.number_or("run", "union_ratio", cfg.union_ratio);
    cfg.d_env_capacity =
        std::size_t(file.number_or("run", "d_env_capacity", double(cfg.d_env_capacity)));
    cfg.d_mpc_capacity =
        std::size_t(file.number_or("run", "d_mpc_capacity", double(cfg.d_mpc_capacity)));
    cfg.ensemble_size =
        std::size_t(file.number_or("run", "ensemble_size", double(cfg.ensemble_size)));
    cfg.ensemble_select =
        std::size_t(file.number_or("run", "ensemble_select", double(cfg.ensemble_select)));
    cfg.ensemble_hidden = to_sizes(file.number_list_or("run", "ensemble_hidden", {32, 32}));
    cfg.min_model_data =
        std::size_t(file.number_or("run", "min_model_data", double(cfg.min_model_data)));
    cfg.eval_episodes =
        std::size_t(file.number_or("run", "eval_episodes", double(cfg.eval_episodes)));
    cfg.eval_threshold = file.number_or("run", "eval_threshold", cfg.eval_threshold);
    cfg.out_dir = file.text_or("run", "out_dir", cfg.out_dir);

    for (const auto& [key, value] : file.sections().count("env")
                                        ? file.sections().at("env")
                                        : std::map<std::string, std::string>{}) {
        cfg.env_overrides[key] = file.number("env", key);
        (void)value;
    }

    cfg.mpc.horizon = std::size_t(file.number_or("mpc", "horizon", double(cfg.mpc.horizon)));
    cfg.mpc.rollouts = std::size_t(file.number_or("mpc", "rollouts", double(cfg.mpc.rollouts)));
    cfg.mpc.step_size = file.number_or("mpc", "alpha", cfg.mpc.step_size);
    cfg.mpc.elite_fraction = file.number_or("mpc", "elite_fraction", cfg.mpc.elite_fraction);
    cfg.mpc.temperature = file.number_or("mpc", "lambda", cfg.mpc.temperature);
    cfg.mpc.discount = file.number_or("mpc", "discount", cfg.mpc.discount);
    cfg.mpc.sigma_scale = file.number_or("mpc", "sigma_scale", cfg.mpc.sigma_scale);
    cfg.mpc.blowup_bound = file.number_or("mpc", "blowup_bound", cfg.mpc.blowup_bound);
    const std::string objective = file.text_or("mpc", "objective", "cem");
    require(objective == "cem" || objective == "mppi",
            "config: mpc.objective must be cem or mppi");
    cfg.mpc.objective = objective == "cem" ? MpcObjective::Cem : MpcObjective::Mppi;
    const std::string shift = file.text_or("mpc", "shift", "policy_shift");
    require(shift == "policy_shift" || shift == "left_shift",
            "config: mpc.shift must be policy_shift or left_shift");
    cfg.mpc.shift = shift == "policy_shift" ? ShiftMode::PolicyShift : ShiftMode::LeftShift;
    const std::string weighting = file.text_or("mpc", "weighting", "exp");
    require(weighting == "exp" || weighting == "literal",
            "config: mpc.weighting must be exp or literal");
    cfg.mpc.weighting =
        weighting == "exp" ? EliteWeighting::Exp : EliteWeighting::Literal;

    cfg.sac.hidden = to_sizes(file.number_list_or("sac", "hidden", {64, 64}));
    cfg.sac.learning_rate = file.number_or("sac", "learning_rate", cfg.sac.learning_rate);
    cfg.sac.discount = file.number_or("sac", "discount", cfg.sac.discount);
    cfg.sac.tau = file.number_or("sac", "tau", cfg.sac.tau);
    cfg.sac.entropy_weight = file.number_or("sac", "entropy_weight", cfg.sac.entropy_weight);
    cfg.sac.auto_entropy = file.flag_or("sac", "auto_entropy", cfg.sac.auto_entropy);

    cfg.ars.step_size = file.number_or("ars", "step_size", cfg.ars.step_size);
    cfg.ars.noise = file.number_or("ars", "noise", cfg.ars.noise);
    cfg.ars.directions =
        std::size_t(file.number_or("ars", "directions", double(cfg.ars.directions)));
    cfg.ars.top_directions = std::size_t(
        file.number_or("ars", "top_directions", double(cfg.ars.top_directions)));
    cfg.ars.accelerated = file.flag_or("ars", "accelerated", cfg.ars.accelerated);
    cfg.ars.accel_beta = file.number_or("ars", "accel_beta", cfg.ars.accel_beta);
    cfg.ars.accel_gamma = file.number_or("ars", "accel_gamma", cfg.ars.accel_gamma);
    cfg.ars_iterations =
        std::size_t(file.number_or("ars", "iterations", double(cfg.ars_iterations)));

    cfg.demo_mixing = file.number_or("demo", "mixing", cfg.demo_mixing);
    cfg.demo_bias_length_scale =
        file.number_or("demo", "bias_length_scale", cfg.demo_bias_length_scale);
    cfg.demo_episodes =
        std::size_t(file.number_or("demo", "episodes", double(cfg.demo_episodes)));
    cfg.demo_policy_path = file.text_or("demo", "policy_path", cfg.demo_policy_path);
    cfg.demo_model_source = file.text_or("demo", "model_source", cfg.demo_model_source);
    require(cfg.demo_model_source == "analytic_biased" ||
                cfg.demo_model_source == "learned_ensemble",
            "config: demo.model_source must be analytic_biased or learned_ensemble");
    cfg.demo_model_env_steps = std::size_t(
        file.number_or("demo", "model_env_steps", double(cfg.demo_model_env_steps)));
    cfg.demo_model_train_epochs = std::size_t(file.number_or(
        "demo", "model_train_epochs", double(cfg.demo_model_train_epochs)));

    cfg.regret_rounds =
        std::size_t(file.number_or("regret", "rounds", double(cfg.regret_rounds)));
    cfg.regret_alpha_c = file.number_or("regret", "alpha_c", cfg.regret_alpha_c);
    cfg.regret_box_radius = file.number_or("regret", "box_radius", cfg.regret_box_radius);
    cfg.regret_variance = file.number_or("regret", "variance", cfg.regret_variance);
    cfg.regret_grid_points =
        std::size_t(file.number_or("regret", "grid_points", double(cfg.regret_grid_points)));
    cfg.regret_target = file.text_or("regret", "target", cfg.regret_target);
    require(cfg.regret_target == "static" || cfg.regret_target == "drift",
            "config: regret.target must be static or drift");

    file.require_all_consumed();
    return cfg;
}

std::string ExperimentConfig::snapshot_text(const std::string& command) const {
    std::ostringstream out;
    out.precision(17);
    out << "# resolved configuration snapshot\n";
    out << "version = " << DEMORL_VERSION << "\n";
    out << "command = " << command << "\n\n[run]\nenv = " << env_name << "\nseeds = ";
    for (std::size_t i = 0; i < seeds.size(); ++i)
        out << seeds[i] << (i + 1 < seeds.size() ? "," : "");
    out << "\nepochs = " << epochs
        << "\nenv_steps_per_epoch = " << env_steps_per_epoch
        << "\nmodel_train_epochs = " << model_train_epochs
        << "\nmodel_transitions_per_epoch = " << model_transitions_per_epoch
        << "\ngradient_steps_per_epoch = " << gradient_steps_per_epoch
        << "\nsac_batch_size = " << sac_batch_size
        << "\nunion_ratio = " << union_ratio
        << "\nensemble_size = " << ensemble_size
        << "\nensemble_select = " << ensemble_select
        << "\neval_episodes = " << eval_episodes
        << "\neval_threshold = " << eval_threshold << "\n";
    out << "\n[env]\n";
    for (const auto& [k, v] : env_overrides) out << k << " = " << v << "\n";
    out << "\n[mpc]\nhorizon = " << mpc.horizon << "\nrollouts = " << mpc.rollouts
        << "\nalpha = " << mpc.step_size << "\nelite_fraction = " << mpc.elite_fraction
        << "\nlambda = " << mpc.temperature << "\nobjective = "
        << (mpc.objective == MpcObjective::Cem ? "cem" : "mppi") << "\nshift = "
        << (mpc.shift == ShiftMode::PolicyShift ? "policy_shift" : "left_shift")
        << "\nweighting = "
        << (mpc.weighting == EliteWeighting::Exp ? "exp" : "literal")
        << "\nsigma_scale = " << mpc.sigma_scale << "\ndiscount = " << mpc.discount
        << "\n";
    out << "\n[sac]\nlearning_rate = " << sac.learning_rate << "\ntau = " << sac.tau
        << "\nentropy_weight = " << sac.entropy_weight << "\ndiscount = " << sac.discount
        << "\n";
    out << "\n[ars]\nstep_size = " << ars.step_size << "\nnoise = " << ars.noise
        << "\ndirections = " << ars.directions
        << "\ntop_directions = " << ars.top_directions
        << "\niterations = " << ars_iterations
        << "\naccelerated = " << (ars.accelerated ? "true" : "false") << "\n";
    out << "\n[demo]\nmixing = " << demo_mixing
        << "\nbias_length_scale = " << demo_bias_length_scale
        << "\nepisodes = " << demo_episodes << "\nmodel_source = " << demo_model_source
        << "\n";
    out << "\n[regret]\nrounds = " << regret_rounds << "\nalpha_c = " << regret_alpha_c
        << "\nbox_radius = " << regret_box_radius << "\nvariance = " << regret_variance
        << "\ntarget = " << regret_target << "\n";
    return out.str();
}

double evaluate_policy(const Env& env,
                       const std::function<VecD(std::span<const double>)>& policy,
                       std::size_t episodes, std::uint64_t seed, double* return_std) {
    require(episodes >= 1, "evaluate_policy: need at least one episode");
    VecD returns;
    for (std::size_t e = 0; e < episodes; ++e) {
        EnvState state = env.reset(derive_seed(seed, "eval-episode", e));
        double total = 0.0;
        bool done = false;
        while (!done) {
            StepResult sr = env.step(state, policy(state.x));
            total += sr.reward;
            state = std::move(sr.state);
            done = sr.done;
        }
        returns.push_back(total);
    }
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= double(returns.size());
    if (return_std) {
        double var = 0.0;
        for (double r : returns) var += (r - mean) * (r - mean);
        *return_std = std::sqrt(var / double(returns.size()));
    }
    return mean;
}

namespace {

// Shared scaffolding for the DeMoRL trainer and the plain-SAC baseline;
// `use_model` switches the model-learning and DMD-MPC blocks on.
RunLog train_sac_family(const ExperimentConfig& cfg, std::uint64_t seed, bool use_model,
                        SacAgent* agent_out) {
    auto env = make_env(cfg.env_name, cfg.env_overrides);
    auto eval_env = env->clone();
    const EnvSpec& spec = env->spec();
    const ActionBounds bounds = ActionBounds::of(spec);

    SacAgent agent = SacAgent::create(spec.state_dim, spec.action_dim, bounds, cfg.sac,
                                      derive_seed(seed, "sac-init"));
    ReplayBuffer d_env(cfg.d_env_capacity, spec.state_dim, spec.action_dim);
    ReplayBuffer d_mpc(cfg.d_mpc_capacity, spec.state_dim, spec.action_dim);
    EnsembleModel model =
        EnsembleModel::create(spec.state_dim, spec.action_dim, cfg.ensemble_size,
                              cfg.ensemble_hidden, derive_seed(seed, "ensemble-init"));

    Rng collect_rng = make_rng(derive_seed(seed, "collect"));
    Rng sac_rng = make_rng(derive_seed(seed, "sac-train"));
    std::size_t episode_idx = 0;
    EnvState state = env->reset(derive_seed(seed, "reset", episode_idx));
    std::size_t env_steps = 0;

    const CostFn cost_fn = [&env](std::span<const double> x, std::span<const double> u) {
        return env->cost(x, u);
    };
    const PolicyFn policy_fn = [&agent](std::span<const double> x) {
        return actor_mean_action(agent, x);
    };
    const TerminalValueFn value_fn = [&agent](std::span<const double> x) {
        return value_of(agent, x);
    };

    MpcConfig mpc_cfg = cfg.mpc;
    mpc_cfg.shift = ShiftMode::PolicyShift;
    mpc_cfg.validate();

    RunLog log;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double t0 = now_seconds();

        // 1. true-environment interaction with the stochastic SAC policy
        for (std::size_t s = 0; s < cfg.env_steps_per_epoch; ++s) {
            const VecD u = actor_sample(agent, state.x, collect_rng).u;
            StepResult sr = env->step(state, u);
            d_env.push({state.x, u, sr.reward, sr.state.x, sr.done});
            ++env_steps;
            if (sr.done)
                state = env->reset(derive_seed(seed, "reset", ++episode_idx));
            else
                state = std::move(sr.state);
        }

        const bool model_ready = use_model && d_env.size() >= cfg.min_model_data;

        // 2. ensemble fit on D_ENV
        if (model_ready)
            train_ensemble(model, d_env, cfg.model_train_epochs,
                           derive_seed(seed, "model-train", epoch),
                           {.min_data = cfg.min_model_data});

        // 3. DMD-MPC data generation into D_MPC
        if (model_ready) {
            const std::vector<std::size_t> members =
                select_members(model, std::min(cfg.ensemble_select, model.size()));
            EnsembleDynamics dyn(model, members);
            std::size_t added = 0, iter = 0;
            const std::size_t iter_cap =
                10 * (cfg.model_transitions_per_epoch / mpc_cfg.horizon + 10);
            while (added < cfg.model_transitions_per_epoch && iter < iter_cap) {
                const std::uint64_t plan_seed =
                    derive_seed(seed, "mpc-plan", epoch * 1000003 + iter);
                const VecD x0 =
                    d_env.sample_uniform(1, derive_seed(seed, "mpc-start",
                                                        epoch * 1000003 + iter))[0]
                        .x;
                const PlanResult plan = plan_step(dyn, x0, nullptr, &policy_fn, mpc_cfg,
                                                  bounds, cost_fn, &value_fn, plan_seed);
                Rng roll_rng = make_rng(derive_seed(seed, "mpc-roll",
                                                    epoch * 1000003 + iter));
                VecD x = x0;
                for (std::size_t h = 0; h < mpc_cfg.horizon; ++h) {
                    VecD u(spec.action_dim);
                    for (std::size_t j = 0; j < u.size(); ++j)
                        u[j] = plan.plan.mean.at(h, j);
                    const double r = env->reward(x, u);
                    VecD x_next;
                    try {
                        x_next = dyn.predict(x, u, roll_rng);
                    } catch (const std::runtime_error&) {
                        break;
                    }
                    bool sane = all_finite(x_next);
                    for (double v : x_next) sane &= std::abs(v) <= mpc_cfg.blowup_bound;
                    if (!sane) break;
                    d_mpc.push({x, u, r, x_next, false});
                    ++added;
                    x = std::move(x_next);
                }
                ++iter;
            }
        }

        // 4. SAC gradient steps on D_ENV (plain) or D_ENV union D_MPC
        for (std::size_t g = 0; g < cfg.gradient_steps_per_epoch; ++g) {
            if (d_env.empty()) break;
            const std::uint64_t bseed =
                derive_seed(seed, "sac-batch", epoch * 1000003 + g);
            const std::vector<Transition> batch =
                (use_model && !d_mpc.empty())
                    ? sample_union(d_env, d_mpc, cfg.sac_batch_size, cfg.union_ratio,
                                   bseed)
                    : d_env.sample_uniform(cfg.sac_batch_size, bseed);
            sac_update(agent, batch, sac_rng);
            target_update(agent, cfg.sac.tau);
        }

        // 5. deterministic evaluation
        double ret_std = 0.0;
        const double ret_mean =
            evaluate_policy(*eval_env, policy_fn, cfg.eval_episodes,
                            derive_seed(seed, "eval", epoch), &ret_std);
        log.rows.push_back({epoch, env_steps, ret_mean, ret_std, d_env.size(),
                            d_mpc.size(), now_seconds() - t0});
    }
    if (agent_out) *agent_out = std::move(agent);
    return log;
}

}  // namespace

RunLog train_demorl(const ExperimentConfig& cfg, std::uint64_t seed, SacAgent* agent_out) {
    return train_sac_family(cfg, seed, /*use_model=*/true, agent_out);
}

RunLog train_sac_baseline(const ExperimentConfig& cfg, std::uint64_t seed,
                          SacAgent* agent_out) {
    return train_sac_family(cfg, seed, /*use_model=*/false, agent_out);
}

ArsTrainResult train_ars(const ExperimentConfig& cfg, std::uint64_t seed) {
    auto env = make_env(cfg.env_name, cfg.env_overrides);
    const EnvSpec& spec = env->spec();
    ArsTrainResult result{{}, LinearPolicy::zeros(spec.state_dim, spec.action_dim,
                                                  ActionBounds::of(spec))};
    const EpisodeEvaluator evaluate = make_env_evaluator(*env);
    auto eval_env = env->clone();
    std::vector<Matrix> history{result.policy.theta};

    std::size_t env_steps = 0;
    for (std::size_t it = 0; it < cfg.ars_iterations; ++it) {
        const double t0 = now_seconds();
        ars_iteration(result.policy, evaluate, cfg.ars, derive_seed(seed, "ars", it));
        env_steps += 2 * cfg.ars.directions * spec.episode_length;
        if (cfg.ars.accelerated) {
            history.push_back(result.policy.theta);
            result.policy.theta = accelerated_step(history, cfg.ars);
        }
        double ret_std = 0.0;
        const double ret_mean = evaluate_policy(
            *eval_env,
            [&result](std::span<const double> x) { return result.policy.act(x); },
            cfg.eval_episodes, derive_seed(seed, "ars-eval", it), &ret_std);
        result.log.rows.push_back(
            {it, env_steps, ret_mean, ret_std, 0, 0, now_seconds() - t0});
    }
    return result;
}

std::vector<DemoEpisodeRow> run_demolayer(const ExperimentConfig& cfg,
                                          const LinearPolicy& policy,
                                          std::uint64_t seed) {
    auto env = make_env(cfg.env_name, cfg.env_overrides);

    DemoLayerConfig layer;
    layer.mixing = cfg.demo_mixing;
    layer.mpc = cfg.mpc;
    layer.validate();

    std::unique_ptr<DynamicsModel> model;
    EnsembleModel learned;
    if (cfg.demo_model_source == "analytic_biased") {
        model = std::make_unique<AnalyticDynamics>(
            *env->with_length_scale(cfg.demo_bias_length_scale));
    } else {
        // Learned-ensemble source: fit the model on policy-plus-noise
        // transitions from the true env, then plan with the best members.
        const EnvSpec& spec = env->spec();
        ReplayBuffer data(cfg.demo_model_env_steps, spec.state_dim, spec.action_dim);
        Rng rng = make_rng(derive_seed(seed, "demo-model-collect"));
        std::normal_distribution<double> unit(0.0, 1.0);
        std::size_t episode_idx = 0;
        EnvState state = env->reset(derive_seed(seed, "demo-reset", episode_idx));
        const VecD range = ActionBounds::of(spec).range();
        for (std::size_t s = 0; s < cfg.demo_model_env_steps; ++s) {
            VecD u = policy.act(state.x);
            for (std::size_t j = 0; j < u.size(); ++j)
                u[j] += 0.15 * range[j] * unit(rng);
            u = ActionBounds::of(spec).clip(std::move(u));
            StepResult sr = env->step(state, u);
            data.push({state.x, u, sr.reward, sr.state.x, sr.done});
            if (sr.done)
                state = env->reset(derive_seed(seed, "demo-reset", ++episode_idx));
            else
                state = std::move(sr.state);
        }
        learned = EnsembleModel::create(spec.state_dim, spec.action_dim,
                                        cfg.ensemble_size, cfg.ensemble_hidden,
                                        derive_seed(seed, "demo-model-init"));
        train_ensemble(learned, data, cfg.demo_model_train_epochs,
                       derive_seed(seed, "demo-model-train"),
                       {.min_data = std::min(cfg.min_model_data, data.size())});
        model = std::make_unique<EnsembleDynamics>(
            learned, select_members(learned, std::min(cfg.ensemble_select,
                                                      learned.size())));
    }

    std::vector<DemoEpisodeRow> rows;
    for (std::size_t e = 0; e < cfg.demo_episodes; ++e) {
        DemoEpisodeRow row;
        row.episode = e;
        const std::uint64_t ep_seed = derive_seed(seed, "demo-episode", e);
        // Unguided baseline on the same reset seed.
        EnvState state = env->reset(derive_seed(ep_seed, "reset"));
        bool done = false;
        while (!done) {
            StepResult sr = env->step(state, policy.act(state.x));
            row.unguided_return += sr.reward;
            state = std::move(sr.state);
            done = sr.done;
        }
        const GuidedEpisode guided =
            run_guided_episode(policy, *env, *model, layer, ep_seed);
        row.guided_return = guided.episode_return;
        row.fallback_steps = guided.fallback_count;
        rows.push_back(row);
    }
    return rows;
}

std::vector<AblationRow> ablate_elite(const ExperimentConfig& cfg,
                                      const std::vector<double>& elite_fractions) {
    require(!elite_fractions.empty(), "ablate_elite: empty fraction list");
    std::vector<AblationRow> table;
    for (const double p : elite_fractions) {
        require(p > 0.0 && p <= 1.0, "ablate_elite: fractions must be in (0,1]");
        ExperimentConfig run_cfg = cfg;
        run_cfg.mpc.elite_fraction = p;
        AblationRow row;
        row.elite_fraction = p;
        for (const std::uint64_t seed : cfg.seeds) {
            const RunLog log = train_demorl(run_cfg, seed);
            row.per_seed_epochs.push_back(epochs_to_threshold(log, cfg.eval_threshold));
        }
        VecD sorted = row.per_seed_epochs;
        std::sort(sorted.begin(), sorted.end());
        row.median_epochs_to_threshold = sorted[sorted.size() / 2];
        table.push_back(row);
    }
    return table;
}

double epochs_to_threshold(const RunLog& log, double threshold) {
    for (const RunLogRow& row : log.rows)
        if (row.mean_eval_return >= threshold) return double(row.epoch + 1);
    return kInf;
}

}  // namespace demorl

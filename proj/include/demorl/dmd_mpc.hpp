#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "demorl/ensemble.hpp"
#include "demorl/env.hpp"
#include "demorl/matrix.hpp"
#include "demorl/rng.hpp"

namespace demorl {

struct ActionBounds {
    VecD low, high;

    static ActionBounds of(const EnvSpec& spec) { return {spec.action_low, spec.action_high}; }
    std::size_t dim() const { return low.size(); }
    VecD clip(VecD u) const;
    void clip_rows(Matrix& m) const;
    VecD range() const;
};

// One-step dynamics the planner rolls trajectories through.
class DynamicsModel {
public:
    virtual ~DynamicsModel() = default;
    virtual std::size_t state_dim() const = 0;
    virtual std::size_t action_dim() const = 0;
    virtual VecD predict(std::span<const double> x, std::span<const double> u,
                         Rng& rng) const = 0;
};

// The true (or deliberately perturbed) analytic integrator as a model.
class AnalyticDynamics final : public DynamicsModel {
public:
    explicit AnalyticDynamics(const Env& env) : env_(env.clone()) {}
    std::size_t state_dim() const override { return env_->spec().state_dim; }
    std::size_t action_dim() const override { return env_->spec().action_dim; }
    VecD predict(std::span<const double> x, std::span<const double> u,
                 Rng&) const override {
        return env_->dynamics(x, u);
    }
    const Env& env() const { return *env_; }

private:
    std::unique_ptr<Env> env_;
};

// Learned ensemble restricted to a selected member subset.
class EnsembleDynamics final : public DynamicsModel {
public:
    EnsembleDynamics(const EnsembleModel& model, std::vector<std::size_t> members)
        : model_(&model), members_(std::move(members)) {
        require(!members_.empty(), "EnsembleDynamics: empty member set");
    }
    std::size_t state_dim() const override { return model_->state_dim; }
    std::size_t action_dim() const override { return model_->action_dim; }
    VecD predict(std::span<const double> x, std::span<const double> u,
                 Rng& rng) const override {
        return ensemble_predict(*model_, members_, x, u, rng);
    }

private:
    const EnsembleModel* model_;
    std::vector<std::size_t> members_;
};

// Fixed-covariance Gaussian over open-loop control sequences: the inner
// loop's decision variable. `variance` is the shared diagonal of Sigma,
// one entry per action dimension.
struct GaussianControlSequence {
    Matrix mean;    // H x m
    VecD variance;  // m, strictly positive

    static GaussianControlSequence zeros(std::size_t horizon, std::size_t action_dim,
                                         VecD variance);
    std::size_t horizon() const { return mean.rows; }
    std::size_t action_dim() const { return mean.cols; }
    void validate() const;
};

enum class MpcObjective { Cem, Mppi };
enum class ShiftMode { PolicyShift, LeftShift };
enum class EliteWeighting { Exp, Literal };

struct MpcConfig {
    std::size_t horizon = 15;
    std::size_t rollouts = 100;       // M
    double step_size = 0.8;           // alpha in [0,1]
    double elite_fraction = 0.1;      // p in (0,1]
    double temperature = 1.0;         // lambda > 0
    MpcObjective objective = MpcObjective::Cem;
    ShiftMode shift = ShiftMode::PolicyShift;
    EliteWeighting weighting = EliteWeighting::Exp;
    double discount = 0.99;
    double sigma_scale = 0.3;         // control std = sigma_scale * action range
    double blowup_bound = 1e6;

    void validate() const;
    VecD control_variance(const ActionBounds& bounds) const;
};

struct RolloutBatch {
    std::vector<Matrix> states;    // M of (H+1) x n
    std::vector<Matrix> controls;  // M of H x m
    VecD costs;                    // M; +inf marks a diverged rollout

    std::size_t size() const { return costs.size(); }
};

using PolicyFn = std::function<VecD(std::span<const double>)>;
using CostFn = std::function<double(std::span<const double>, std::span<const double>)>;
// Returns V(x); the planner uses -V as terminal cost.
using TerminalValueFn = std::function<double(std::span<const double>)>;

// sum_h gamma^h c(x_h, u_h) + gamma^H * c_H(x_H), c_H = -V when supplied.
double total_cost(const Matrix& states, const Matrix& controls, const CostFn& cost,
                  const TerminalValueFn* terminal_value, double discount,
                  std::size_t horizon);

// Warm-start operators. Left shift drops the executed step and repeats the
// last mean; policy shift rolls the outer policy through the model from x0.
GaussianControlSequence left_shift(const GaussianControlSequence& prev);
GaussianControlSequence policy_shift(const PolicyFn& policy, const DynamicsModel& model,
                                     std::span<const double> x0, std::size_t horizon,
                                     VecD variance, const ActionBounds& bounds, Rng& rng);
GaussianControlSequence shift_sequence(const GaussianControlSequence* prev,
                                       const PolicyFn* policy, const DynamicsModel* model,
                                       std::span<const double> x0, ShiftMode mode,
                                       std::size_t horizon, VecD variance,
                                       const ActionBounds& bounds, Rng& rng);

RolloutBatch sample_rollouts(const DynamicsModel& model, std::span<const double> x0,
                             const GaussianControlSequence& seq, std::size_t count,
                             std::uint64_t seed, const CostFn& cost,
                             const TerminalValueFn* terminal_value, double discount,
                             const ActionBounds& bounds, double blowup_bound = 1e6);

// Lowest-cost rollout indices, ties broken by index; sorted by (cost, index).
std::vector<std::size_t> elite_indices(const VecD& costs, std::size_t elite_count);

// mu = (1 - alpha) * shifted mean + alpha * g over the elite set, clipped.
// `Exp` weights elites by exp(-(C - C_min)/lambda); `Literal` weights by
// raw cost C (rejecting zero-sum or mixed-sign elite costs).
GaussianControlSequence cem_update(const GaussianControlSequence& shifted,
                                   const RolloutBatch& batch, double step_size,
                                   double elite_fraction, double temperature,
                                   EliteWeighting weighting, const ActionBounds& bounds);

// Softmax(-C/lambda) average over all rollouts; the alpha = 1 case.
GaussianControlSequence mppi_update(const GaussianControlSequence& shifted,
                                    const RolloutBatch& batch, double temperature,
                                    const ActionBounds& bounds);

// KL between equal-covariance diagonal Gaussians over the H x m grid.
double kl_gaussian(const GaussianControlSequence& a, const GaussianControlSequence& b);
double kl_gaussian_mean(std::span<const double> mean_a, std::span<const double> mean_b,
                        std::span<const double> variance);

struct PlanResult {
    GaussianControlSequence plan;
    double best_rollout_cost = 0.0;
    std::size_t diverged_rollouts = 0;
};

// One full DMD-MPC round: shift, rollout, update.
PlanResult plan_step(const DynamicsModel& model, std::span<const double> x0,
                     const GaussianControlSequence* prev, const PolicyFn* policy,
                     const MpcConfig& cfg, const ActionBounds& bounds, const CostFn& cost,
                     const TerminalValueFn* terminal_value, std::uint64_t seed);

// Receding-horizon driver with a persistent warm start.
class MpcController {
public:
    MpcController(const DynamicsModel& model, MpcConfig cfg, ActionBounds bounds,
                  CostFn cost, TerminalValueFn terminal_value = nullptr,
                  PolicyFn policy = nullptr);

    VecD act(std::span<const double> x, std::uint64_t seed);
    const GaussianControlSequence& last_plan() const;
    void reset_warm_start();

private:
    const DynamicsModel* model_;
    MpcConfig cfg_;
    ActionBounds bounds_;
    CostFn cost_;
    TerminalValueFn terminal_value_;
    PolicyFn policy_;
    std::optional<GaussianControlSequence> prev_;
};

}  // namespace demorl

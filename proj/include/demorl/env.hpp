#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>

#include "demorl/common.hpp"

namespace demorl {

struct EnvSpec {
    std::string name;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    VecD action_low, action_high;
    std::size_t episode_length = 500;
    double discount = 0.99;
};

struct EnvState {
    VecD x;
    std::size_t t = 0;
};

struct Transition {
    VecD x, u;
    double r = 0.0;
    VecD x_next;
    bool done = false;
};

struct StepResult {
    EnvState state;
    double reward = 0.0;
    bool done = false;
    bool action_clipped = false;
};

// Analytic desk-scale environment. `dynamics` is the raw one-step
// integrator (also used as the planner's "exact model"); `step` adds
// action clipping, reward, episode bookkeeping, and finiteness checks.
// Episodes never terminate early: done iff t reaches episode_length.
class Env {
public:
    virtual ~Env() = default;

    const EnvSpec& spec() const { return spec_; }

    virtual EnvState reset(std::uint64_t seed) const = 0;
    virtual VecD dynamics(std::span<const double> x, std::span<const double> u) const = 0;
    virtual double reward(std::span<const double> x, std::span<const double> u) const = 0;

    double cost(std::span<const double> x, std::span<const double> u) const {
        return -reward(x, u);
    }

    StepResult step(const EnvState& state, std::span<const double> u) const;

    VecD clip_action(std::span<const double> u, bool* clipped = nullptr) const;

    virtual std::unique_ptr<Env> clone() const = 0;
    // Model-mismatch knob: copy with the env's characteristic length
    // (pendulum rod, cartpole pole) or mass (reacher) scaled.
    virtual std::unique_ptr<Env> with_length_scale(double factor) const = 0;

protected:
    EnvSpec spec_;
};

// names: "pendulum", "cartpole-swingup", "reacher2d".
// Physical constants can be overridden by key; unknown keys are errors.
std::unique_ptr<Env> make_env(const std::string& name,
                              const std::map<std::string, double>& overrides = {});

// Angle recovered from a (cos, sin) state pair, in (-pi, pi].
double angle_from_cs(double c, double s);

}  // namespace demorl

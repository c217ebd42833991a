#include <doctest.h>

#include <cmath>

#include "demorl/env.hpp"
#include "demorl/rng.hpp"

using namespace demorl;

namespace {

double wrap_pi(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

double pendulum_angle(const VecD& x) { return angle_from_cs(x[0], x[1]); }

// total mechanical energy, potential zero at the hanging rest point
double pendulum_energy(const VecD& x, double g = 10.0) {
    return 0.5 * x[2] * x[2] + g * (1.0 + x[0]);
}

}  // namespace

TEST_CASE("pendulum reset draws from the documented initial distribution") {
    auto env = make_env("pendulum");
    const EnvState s = env->reset(123);
    CHECK(s.t == 0);
    CHECK(std::abs(wrap_pi(pendulum_angle(s.x) - M_PI)) <= 0.05);
    CHECK(std::abs(s.x[2]) <= 0.05);

    const EnvState again = env->reset(123);
    CHECK(again.x == s.x);  // same seed, same state
}

TEST_CASE("reset noise is centered: 10k-draw Monte Carlo check") {
    auto env = make_env("pendulum");
    const int n = 10000;
    double mean_angle = 0.0, mean_vel = 0.0;
    for (int i = 0; i < n; ++i) {
        const EnvState s = env->reset(std::uint64_t(i));
        mean_angle += wrap_pi(pendulum_angle(s.x) - M_PI);
        mean_vel += s.x[2];
    }
    mean_angle /= n;
    mean_vel /= n;
    // U(-0.05, 0.05): sigma = 0.05/sqrt(3); tolerance 3 sigma / sqrt(n)
    const double tol = 3.0 * (0.05 / std::sqrt(3.0)) / std::sqrt(double(n));
    CHECK(std::abs(mean_angle) < tol);
    CHECK(std::abs(mean_vel) < tol);
}

TEST_CASE("pendulum hanging down is a fixed point of the dynamics") {
    auto env = make_env("pendulum");
    const VecD hanging{std::cos(M_PI), std::sin(M_PI), 0.0};
    const VecD next = env->dynamics(hanging, VecD{0.0});
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(std::abs(next[j] - hanging[j]) < 1e-12);
}

TEST_CASE("one documented integrator step from the horizontal") {
    // theta = pi/2, thdot = 0, u = 0, dt = 0.05, g = 10, l = 1:
    // thdot' = (g/l) sin(pi/2) dt = 0.5 away from upright, then
    // theta' = pi/2 + thdot' dt.
    auto env = make_env("pendulum");
    const VecD x{std::cos(M_PI / 2), std::sin(M_PI / 2), 0.0};
    const VecD next = env->dynamics(x, VecD{0.0});
    CHECK(next[2] == doctest::Approx(0.5).epsilon(1e-12));
    const double th = pendulum_angle(next);
    CHECK(th == doctest::Approx(M_PI / 2 + 0.5 * 0.05).epsilon(1e-12));
}

TEST_CASE("cartpole upright rest is an exact fixed point") {
    auto env = make_env("cartpole-swingup");
    const VecD upright{0.0, 0.0, 1.0, 0.0, 0.0};
    const VecD next = env->dynamics(upright, VecD{0.0});
    CHECK(next == upright);  // bitwise: every term vanishes analytically
}

TEST_CASE("cost is the negated reward on random probes") {
    Rng rng = make_rng(5);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (const char* name : {"pendulum", "cartpole-swingup", "reacher2d"}) {
        auto env = make_env(name);
        for (int probe = 0; probe < 20; ++probe) {
            VecD x(env->spec().state_dim), u(env->spec().action_dim);
            for (double& v : x) v = unit(rng);
            for (double& v : u) v = unit(rng);
            CHECK(env->cost(x, u) + env->reward(x, u) == 0.0);
        }
    }
}

TEST_CASE("pendulum reward peaks at the upright rest point") {
    auto env = make_env("pendulum");
    const VecD upright{1.0, 0.0, 0.0};
    const VecD tilted{std::cos(0.3), std::sin(0.3), 0.0};
    CHECK(env->reward(upright, VecD{0.0}) == 0.0);  // closed-form maximum
    CHECK(env->reward(tilted, VecD{0.0}) < 0.0);
    CHECK(env->reward(upright, VecD{1.0}) < 0.0);
}

TEST_CASE("cartpole reward at hanging rest equals the angle minimum") {
    auto env = make_env("cartpole-swingup");
    const VecD hanging{0.0, 0.0, -1.0, 0.0, 0.0};
    CHECK(env->reward(hanging, VecD{0.0}) == -1.0);
}

TEST_CASE("undriven pendulum conserves energy (no secular drift)") {
    auto env = make_env("pendulum");
    VecD x{std::cos(M_PI / 2), std::sin(M_PI / 2), 0.0};
    const double e0 = pendulum_energy(x);
    std::vector<double> energies;
    for (int i = 0; i < 200; ++i) {
        x = env->dynamics(x, VecD{0.0});
        energies.push_back(pendulum_energy(x));
    }
    // Symplectic Euler: energy oscillates within a bounded band
    // (~ dt * omega / 2 of E0) but must show no trend.
    double peak = 0.0;
    for (const double e : energies) peak = std::max(peak, std::abs(e - e0) / e0);
    CHECK(peak < 0.15);
    const std::size_t n = energies.size();
    const double xm = double(n - 1) / 2.0;
    double ym = 0.0;
    for (const double e : energies) ym += e;
    ym /= double(n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (double(i) - xm) * (energies[i] - ym);
        den += (double(i) - xm) * (double(i) - xm);
    }
    const double drift_over_run = std::abs(num / den) * double(n) / e0;
    CHECK(drift_over_run < 0.01);
}

TEST_CASE("same seed and action sequence give the same trajectory") {
    for (const char* name : {"pendulum", "cartpole-swingup", "reacher2d"}) {
        auto env = make_env(name);
        auto run = [&] {
            EnvState s = env->reset(77);
            VecD flat;
            Rng rng = make_rng(5);
            std::uniform_real_distribution<double> act(-1.0, 1.0);
            for (int i = 0; i < 50; ++i) {
                VecD u(env->spec().action_dim);
                for (double& v : u) v = act(rng);
                StepResult sr = env->step(s, u);
                s = sr.state;
                flat.insert(flat.end(), s.x.begin(), s.x.end());
                flat.push_back(sr.reward);
            }
            return flat;
        };
        CHECK(run() == run());
    }
}

TEST_CASE("out-of-bounds actions are clipped and flagged") {
    auto env = make_env("pendulum");
    EnvState s = env->reset(0);
    StepResult clipped = env->step(s, VecD{100.0});
    CHECK(clipped.action_clipped);
    StepResult at_limit = env->step(s, VecD{2.0});
    CHECK_FALSE(at_limit.action_clipped);
    CHECK(clipped.state.x == at_limit.state.x);
    CHECK(clipped.reward == at_limit.reward);  // reward sees the clipped action
}

TEST_CASE("episodes end exactly at episode_length and never before") {
    auto env = make_env("reacher2d", {{"episode_length", 5}});
    EnvState s = env->reset(1);
    for (int i = 0; i < 4; ++i) {
        StepResult sr = env->step(s, VecD{0.1, 0.1});
        CHECK_FALSE(sr.done);
        s = sr.state;
    }
    StepResult last = env->step(s, VecD{0.1, 0.1});
    CHECK(last.done);
    CHECK_THROWS_AS(env->step(last.state, VecD{0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("non-finite states are rejected with the env name") {
    auto env = make_env("pendulum");
    EnvState s = env->reset(0);
    s.x[2] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(env->step(s, VecD{0.0}), doctest::Contains("pendulum"),
                         std::runtime_error);
}

TEST_CASE("length-scale bias hook perturbs the model dynamics") {
    auto env = make_env("cartpole-swingup");
    auto biased = env->with_length_scale(1.2);
    const VecD x{0.0, 0.0, std::cos(2.0), std::sin(2.0), 0.3};
    const VecD a = env->dynamics(x, VecD{3.0});
    const VecD b = biased->dynamics(x, VecD{3.0});
    CHECK(a != b);
    // the true env is untouched
    CHECK(env->dynamics(x, VecD{3.0}) == a);
}

TEST_CASE("unknown env names and physics keys are hard errors") {
    CHECK_THROWS_AS(make_env("mujoco-halfcheetah"), std::invalid_argument);
    CHECK_THROWS_AS(make_env("pendulum", {{"polemass", 1.0}}), std::invalid_argument);
    CHECK(make_env("pendulum", {{"gravity", 9.81}})->spec().name == "pendulum");
}

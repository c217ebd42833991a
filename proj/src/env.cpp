#include "demorl/env.hpp"

#include <cmath>

#include "demorl/rng.hpp"

namespace demorl {

double angle_from_cs(double c, double s) { return std::atan2(s, c); }

VecD Env::clip_action(std::span<const double> u, bool* clipped) const {
    require(u.size() == spec_.action_dim,
            spec_.name + ": action length " + std::to_string(u.size()) +
                " != action_dim " + std::to_string(spec_.action_dim));
    VecD out(u.begin(), u.end());
    bool any = false;
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double c = clamp(out[j], spec_.action_low[j], spec_.action_high[j]);
        any |= (c != out[j]);
        out[j] = c;
    }
    if (clipped) *clipped = any;
    return out;
}

StepResult Env::step(const EnvState& state, std::span<const double> u) const {
    require(state.x.size() == spec_.state_dim,
            spec_.name + ": state length mismatch in step");
    require(state.t < spec_.episode_length,
            spec_.name + ": step past episode end (t=" + std::to_string(state.t) + ")");
    StepResult res;
    const VecD uc = clip_action(u, &res.action_clipped);
    res.reward = reward(state.x, uc);
    res.state.x = dynamics(state.x, uc);
    res.state.t = state.t + 1;
    res.done = res.state.t == spec_.episode_length;
    if (!all_finite(res.state.x))
        throw std::runtime_error(spec_.name + ": non-finite state after step t=" +
                                 std::to_string(state.t));
    return res;
}

namespace {

double get_override(const std::map<std::string, double>& m, const std::string& key,
                    double fallback) {
    auto it = m.find(key);
    return it == m.end() ? fallback : it->second;
}

void check_keys(const std::string& env, const std::map<std::string, double>& m,
                std::initializer_list<const char*> known) {
    for (const auto& [k, v] : m) {
        bool ok = false;
        for (const char* kk : known) ok |= (k == kk);
        require(ok, env + ": unknown physics override '" + k + "'");
    }
}

// Swing-up pendulum. State (cos th, sin th, thdot) with th measured from
// upright; th = pi hangs down. Gravity accelerates away from upright:
//   thdot' = clamp(thdot + ((g/l) sin th + u / (m l^2)) dt, +-max_speed)
//   th'    = th + thdot' dt            (semi-implicit Euler)
// Reward (closed form): -(th^2 + 0.1 thdot^2 + 0.001 u^2), th in (-pi, pi].
class PendulumEnv final : public Env {
public:
    explicit PendulumEnv(const std::map<std::string, double>& ov) {
        check_keys("pendulum", ov,
                   {"gravity", "length", "mass", "dt", "max_torque", "max_speed",
                    "episode_length", "discount"});
        gravity_ = get_override(ov, "gravity", 10.0);
        length_ = get_override(ov, "length", 1.0);
        mass_ = get_override(ov, "mass", 1.0);
        dt_ = get_override(ov, "dt", 0.05);
        max_torque_ = get_override(ov, "max_torque", 2.0);
        max_speed_ = get_override(ov, "max_speed", 8.0);
        spec_.name = "pendulum";
        spec_.state_dim = 3;
        spec_.action_dim = 1;
        spec_.action_low = {-max_torque_};
        spec_.action_high = {max_torque_};
        spec_.episode_length = std::size_t(get_override(ov, "episode_length", 500));
        spec_.discount = get_override(ov, "discount", 0.99);
        overrides_ = ov;
    }

    EnvState reset(std::uint64_t seed) const override {
        Rng rng = make_rng(seed);
        std::uniform_real_distribution<double> noise(-0.05, 0.05);
        const double th = M_PI + noise(rng);
        const double thdot = noise(rng);
        return {{std::cos(th), std::sin(th), thdot}, 0};
    }

    VecD dynamics(std::span<const double> x, std::span<const double> u) const override {
        const double th = angle_from_cs(x[0], x[1]);
        const double thdot = x[2];
        const double acc = (gravity_ / length_) * std::sin(th) +
                           u[0] / (mass_ * length_ * length_);
        const double thdot_next = clamp(thdot + acc * dt_, -max_speed_, max_speed_);
        const double th_next = th + thdot_next * dt_;
        return {std::cos(th_next), std::sin(th_next), thdot_next};
    }

    double reward(std::span<const double> x, std::span<const double> u) const override {
        const double th = angle_from_cs(x[0], x[1]);
        return -(th * th + 0.1 * x[2] * x[2] + 0.001 * u[0] * u[0]);
    }

    std::unique_ptr<Env> clone() const override {
        return std::make_unique<PendulumEnv>(overrides_);
    }

    std::unique_ptr<Env> with_length_scale(double factor) const override {
        auto ov = overrides_;
        ov["length"] = length_ * factor;
        return std::make_unique<PendulumEnv>(ov);
    }

private:
    double gravity_, length_, mass_, dt_, max_torque_, max_speed_;
    std::map<std::string, double> overrides_;
};

// Cartpole swing-up with a continuous force. State (x, xdot, cos th,
// sin th, thdot), th from upright; the pole starts hanging (th = pi).
// Dynamics follow the standard cart-pole equations (pole half-length l):
//   temp  = (F + mp l thdot^2 sin th) / (mc + mp)
//   thacc = (g sin th - cos th temp) / (l (4/3 - mp cos^2 th / (mc + mp)))
//   xacc  = temp - mp l thacc cos th / (mc + mp)
// integrated semi-implicitly. The track has inelastic walls at +-x_limit
// (position clamps, cart velocity zeroes); episodes never end early.
// Reward (closed form): cos th - 0.001 F^2.
class CartpoleSwingupEnv final : public Env {
public:
    explicit CartpoleSwingupEnv(const std::map<std::string, double>& ov) {
        check_keys("cartpole-swingup", ov,
                   {"gravity", "cart_mass", "pole_mass", "pole_half_length", "dt",
                    "max_force", "x_limit", "episode_length", "discount",
                    "reset_angle"});
        reset_angle_ = get_override(ov, "reset_angle", M_PI);
        gravity_ = get_override(ov, "gravity", 9.8);
        cart_mass_ = get_override(ov, "cart_mass", 1.0);
        pole_mass_ = get_override(ov, "pole_mass", 0.1);
        half_length_ = get_override(ov, "pole_half_length", 0.5);
        dt_ = get_override(ov, "dt", 0.02);
        max_force_ = get_override(ov, "max_force", 10.0);
        x_limit_ = get_override(ov, "x_limit", 2.4);
        spec_.name = "cartpole-swingup";
        spec_.state_dim = 5;
        spec_.action_dim = 1;
        spec_.action_low = {-max_force_};
        spec_.action_high = {max_force_};
        spec_.episode_length = std::size_t(get_override(ov, "episode_length", 500));
        spec_.discount = get_override(ov, "discount", 0.99);
        overrides_ = ov;
    }

    EnvState reset(std::uint64_t seed) const override {
        Rng rng = make_rng(seed);
        std::uniform_real_distribution<double> noise(-0.05, 0.05);
        const double px = noise(rng);
        const double pxdot = noise(rng);
        const double th = reset_angle_ + noise(rng);
        const double thdot = noise(rng);
        return {{px, pxdot, std::cos(th), std::sin(th), thdot}, 0};
    }

    VecD dynamics(std::span<const double> x, std::span<const double> u) const override {
        const double px = x[0], pxdot = x[1];
        const double costh = x[2], sinth = x[3], thdot = x[4];
        const double th = angle_from_cs(costh, sinth);
        const double force = u[0];
        const double total_mass = cart_mass_ + pole_mass_;
        const double temp =
            (force + pole_mass_ * half_length_ * thdot * thdot * sinth) / total_mass;
        const double thacc =
            (gravity_ * sinth - costh * temp) /
            (half_length_ * (4.0 / 3.0 - pole_mass_ * costh * costh / total_mass));
        const double xacc = temp - pole_mass_ * half_length_ * thacc * costh / total_mass;

        double pxdot_next = pxdot + xacc * dt_;
        double px_next = px + pxdot_next * dt_;
        if (px_next > x_limit_ || px_next < -x_limit_) {
            px_next = clamp(px_next, -x_limit_, x_limit_);
            pxdot_next = 0.0;
        }
        const double thdot_next = thdot + thacc * dt_;
        const double th_next = th + thdot_next * dt_;
        return {px_next, pxdot_next, std::cos(th_next), std::sin(th_next), thdot_next};
    }

    double reward(std::span<const double> x, std::span<const double> u) const override {
        return x[2] - 0.001 * u[0] * u[0];
    }

    std::unique_ptr<Env> clone() const override {
        return std::make_unique<CartpoleSwingupEnv>(overrides_);
    }

    std::unique_ptr<Env> with_length_scale(double factor) const override {
        auto ov = overrides_;
        ov["pole_half_length"] = half_length_ * factor;
        return std::make_unique<CartpoleSwingupEnv>(ov);
    }

private:
    double gravity_, cart_mass_, pole_mass_, half_length_, dt_, max_force_, x_limit_;
    double reset_angle_;
    std::map<std::string, double> overrides_;
};

// 2-D point mass pushed toward the origin. State (px, py, vx, vy),
// force action in [-1,1]^2, mass m:
//   v' = clamp(v + (u/m) dt, +-max_speed),  p' = p + v' dt
// Reward: -(|p|^2 + 0.01 |u|^2).
class Reacher2dEnv final : public Env {
public:
    explicit Reacher2dEnv(const std::map<std::string, double>& ov) {
        check_keys("reacher2d", ov,
                   {"mass", "dt", "max_force", "max_speed", "episode_length",
                    "discount"});
        mass_ = get_override(ov, "mass", 1.0);
        dt_ = get_override(ov, "dt", 0.1);
        max_force_ = get_override(ov, "max_force", 1.0);
        max_speed_ = get_override(ov, "max_speed", 2.0);
        spec_.name = "reacher2d";
        spec_.state_dim = 4;
        spec_.action_dim = 2;
        spec_.action_low = {-max_force_, -max_force_};
        spec_.action_high = {max_force_, max_force_};
        spec_.episode_length = std::size_t(get_override(ov, "episode_length", 150));
        spec_.discount = get_override(ov, "discount", 0.99);
        overrides_ = ov;
    }

    EnvState reset(std::uint64_t seed) const override {
        Rng rng = make_rng(seed);
        std::uniform_real_distribution<double> pos(-1.0, 1.0);
        std::uniform_real_distribution<double> vel(-0.05, 0.05);
        const double px = pos(rng), py = pos(rng);
        const double vx = vel(rng), vy = vel(rng);
        return {{px, py, vx, vy}, 0};
    }

    VecD dynamics(std::span<const double> x, std::span<const double> u) const override {
        const double vx = clamp(x[2] + (u[0] / mass_) * dt_, -max_speed_, max_speed_);
        const double vy = clamp(x[3] + (u[1] / mass_) * dt_, -max_speed_, max_speed_);
        return {x[0] + vx * dt_, x[1] + vy * dt_, vx, vy};
    }

    double reward(std::span<const double> x, std::span<const double> u) const override {
        return -(x[0] * x[0] + x[1] * x[1] + 0.01 * (u[0] * u[0] + u[1] * u[1]));
    }

    std::unique_ptr<Env> clone() const override {
        return std::make_unique<Reacher2dEnv>(overrides_);
    }

    std::unique_ptr<Env> with_length_scale(double factor) const override {
        auto ov = overrides_;
        ov["mass"] = mass_ * factor;
        return std::make_unique<Reacher2dEnv>(ov);
    }

private:
    double mass_, dt_, max_force_, max_speed_;
    std::map<std::string, double> overrides_;
};

}  // namespace

std::unique_ptr<Env> make_env(const std::string& name,
                              const std::map<std::string, double>& overrides) {
    if (name == "pendulum") return std::make_unique<PendulumEnv>(overrides);
    if (name == "cartpole-swingup") return std::make_unique<CartpoleSwingupEnv>(overrides);
    if (name == "reacher2d") return std::make_unique<Reacher2dEnv>(overrides);
    throw std::invalid_argument("make_env: unknown environment '" + name + "'");
}

}  // namespace demorl

#include "demorl/sac.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "demorl/kernels.hpp"

namespace demorl {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)
constexpr double kSquashGuard = 1e-12;

VecD concat(std::span<const double> a, std::span<const double> b) {
    VecD out(a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace

SacAgent SacAgent::create(std::size_t state_dim, std::size_t action_dim,
                          ActionBounds bounds, const SacConfig& cfg,
                          std::uint64_t seed) {
    require(bounds.dim() == action_dim, "SacAgent: bounds/action_dim mismatch");
    SacAgent agent;
    agent.cfg = cfg;
    agent.bounds = std::move(bounds);
    agent.state_dim = state_dim;
    agent.action_dim = action_dim;

    auto sizes = [&](std::size_t in, std::size_t out) {
        std::vector<std::size_t> s{in};
        s.insert(s.end(), cfg.hidden.begin(), cfg.hidden.end());
        s.push_back(out);
        return s;
    };
    agent.actor = Mlp::xavier(sizes(state_dim, 2 * action_dim), derive_seed(seed, "actor"));
    agent.critic1 = Mlp::xavier(sizes(state_dim + action_dim, 1), derive_seed(seed, "critic1"));
    agent.critic2 = Mlp::xavier(sizes(state_dim + action_dim, 1), derive_seed(seed, "critic2"));
    agent.value = Mlp::xavier(sizes(state_dim, 1), derive_seed(seed, "value"));
    agent.value_target = agent.value;
    agent.critic1_target = agent.critic1;
    agent.critic2_target = agent.critic2;

    const AdamHyper hyper{.learning_rate = cfg.learning_rate};
    agent.actor_opt = AdamState::for_mlp(agent.actor, hyper);
    agent.critic1_opt = AdamState::for_mlp(agent.critic1, hyper);
    agent.critic2_opt = AdamState::for_mlp(agent.critic2, hyper);
    agent.value_opt = AdamState::for_mlp(agent.value, hyper);
    return agent;
}

ActorEval actor_eval(const SacAgent& agent, std::span<const double> x,
                     std::span<const double> noise) {
    require(noise.size() == agent.action_dim, "actor_eval: noise dim mismatch");
    const VecD head = mlp_forward(agent.actor, x);
    const std::size_t m = agent.action_dim;
    ActorEval ev;
    ev.mean.assign(head.begin(), head.begin() + m);
    ev.log_std.resize(m);
    ev.std_dev.resize(m);
    ev.pre_squash.resize(m);
    ev.squashed.resize(m);
    ev.u.resize(m);
    ev.log_prob = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        ev.log_std[j] = clamp(head[m + j], agent.cfg.logstd_min, agent.cfg.logstd_max);
        ev.std_dev[j] = std::exp(ev.log_std[j]);
        ev.pre_squash[j] = ev.mean[j] + ev.std_dev[j] * noise[j];
        ev.squashed[j] = std::tanh(ev.pre_squash[j]);
        const double half = 0.5 * (agent.bounds.high[j] - agent.bounds.low[j]);
        const double mid = 0.5 * (agent.bounds.high[j] + agent.bounds.low[j]);
        ev.u[j] = mid + half * ev.squashed[j];
        // Gaussian density of the pre-squash sample, then the tanh and
        // affine-rescale change-of-variables corrections.
        ev.log_prob += -0.5 * noise[j] * noise[j] - kHalfLog2Pi - ev.log_std[j] -
                       std::log(1.0 - ev.squashed[j] * ev.squashed[j] + kSquashGuard) -
                       std::log(half);
    }
    return ev;
}

ActionSample actor_sample(const SacAgent& agent, std::span<const double> x, Rng& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    VecD noise(agent.action_dim);
    for (double& e : noise) e = unit(rng);
    const ActorEval ev = actor_eval(agent, x, noise);
    return {ev.u, ev.log_prob};
}

ActionSample actor_sample(const SacAgent& agent, std::span<const double> x,
                          std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return actor_sample(agent, x, rng);
}

VecD actor_mean_action(const SacAgent& agent, std::span<const double> x) {
    const VecD head = mlp_forward(agent.actor, x);
    VecD u(agent.action_dim);
    for (std::size_t j = 0; j < agent.action_dim; ++j) {
        const double half = 0.5 * (agent.bounds.high[j] - agent.bounds.low[j]);
        const double mid = 0.5 * (agent.bounds.high[j] + agent.bounds.low[j]);
        u[j] = mid + half * std::tanh(head[j]);
    }
    return u;
}

double value_of(const SacAgent& agent, std::span<const double> x) {
    return mlp_forward(agent.value, x)[0];
}

double critic_value(const SacAgent& agent, std::span<const double> x,
                    std::span<const double> u, int which) {
    require(which == 1 || which == 2, "critic_value: which must be 1 or 2");
    const VecD in = concat(x, u);
    return mlp_forward(which == 1 ? agent.critic1 : agent.critic2, in)[0];
}

namespace {

// Gradient of [alpha * log pi - min Q] w.r.t. the actor's raw head
// outputs (mean, raw log-std) for one sample at fixed noise.
VecD actor_head_upstream(const SacAgent& agent, const ActorEval& ev,
                         std::span<const double> x, std::span<const double> noise,
                         const VecD& raw_head, double* loss_out) {
    const std::size_t m = agent.action_dim;
    const VecD xu = concat(x, ev.u);
    const double q1 = mlp_forward(agent.critic1, xu)[0];
    const double q2 = mlp_forward(agent.critic2, xu)[0];
    const Mlp& critic_min = q1 <= q2 ? agent.critic1 : agent.critic2;
    const VecD one{1.0};
    const MlpGrads critic_grads = mlp_gradients(critic_min, xu, one);
    // dQ/du is the tail of the critic's input gradient.
    const double alpha = agent.cfg.entropy_weight;

    if (loss_out) *loss_out = alpha * ev.log_prob - std::min(q1, q2);

    VecD upstream(2 * m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        const double half = 0.5 * (agent.bounds.high[j] - agent.bounds.low[j]);
        const double t = ev.squashed[j];
        const double dsquash = 1.0 - t * t;
        const double dq_du = critic_grads.input_grad[agent.state_dim + j];
        const double du_dpre = half * dsquash;
        // d log pi / d pre_squash = 2 t / (1 - t^2 + guard) * (1 - t^2)
        const double dlogp_dpre = 2.0 * t * dsquash / (dsquash + kSquashGuard);
        // mean head: d pre / d mean = 1
        upstream[j] = alpha * dlogp_dpre - dq_du * du_dpre;
        // log-std head: d pre / d logstd = std * eps, plus the explicit
        // -logstd density term; zero gradient where the clamp is active.
        const bool clamped = raw_head[m + j] < agent.cfg.logstd_min ||
                             raw_head[m + j] > agent.cfg.logstd_max;
        if (!clamped) {
            const double dpre_dlogstd = ev.std_dev[j] * noise[j];
            upstream[m + j] = alpha * (-1.0 + dlogp_dpre * dpre_dlogstd) -
                              dq_du * du_dpre * dpre_dlogstd;
        }
    }
    return upstream;
}

}  // namespace

MlpGrads actor_loss_gradients(const SacAgent& agent, std::span<const double> x,
                              std::span<const double> noise, double* loss_out) {
    const VecD raw_head = mlp_forward(agent.actor, x);
    const ActorEval ev = actor_eval(agent, x, noise);
    const VecD upstream = actor_head_upstream(agent, ev, x, noise, raw_head, loss_out);
    return mlp_gradients(agent.actor, x, upstream);
}

SacLossReport sac_update(SacAgent& agent, std::span<const Transition> batch, Rng& rng) {
    require(!batch.empty(), "sac_update: empty batch");
    const std::size_t b = batch.size();
    const double inv_b = 1.0 / double(b);
    const double gamma = agent.cfg.discount;
    const double alpha = agent.cfg.entropy_weight;

    SacLossReport report;
    report.entropy_weight = alpha;

    MlpGrads q1_grads = MlpGrads::zeros_like(agent.critic1);
    MlpGrads q2_grads = MlpGrads::zeros_like(agent.critic2);
    MlpGrads v_grads = MlpGrads::zeros_like(agent.value);
    MlpGrads pi_grads = MlpGrads::zeros_like(agent.actor);

    std::normal_distribution<double> unit(0.0, 1.0);
    double mean_log_prob = 0.0;

    auto labeled = [](const char* component, auto&& fn) -> decltype(fn()) {
        try {
            return fn();
        } catch (const std::runtime_error& err) {
            throw std::runtime_error(std::string("sac_update: non-finite loss in ") +
                                     component + " (" + err.what() + ")");
        }
    };

    for (const Transition& t : batch) {
        require(t.x.size() == agent.state_dim && t.u.size() == agent.action_dim,
                "sac_update: transition shape mismatch");
        // Critics regress r + gamma * V_target(x'), zero at terminal.
        const double y =
            t.r + (t.done ? 0.0 : gamma * mlp_forward(agent.value_target, t.x_next)[0]);
        if (!std::isfinite(y))
            throw std::runtime_error("sac_update: non-finite loss in critic target");
        const VecD xu = concat(t.x, t.u);
        for (int k = 1; k <= 2; ++k) {
            const Mlp& critic = k == 1 ? agent.critic1 : agent.critic2;
            const double q = mlp_forward(critic, xu)[0];
            const double err = q - y;
            (k == 1 ? report.j_q1 : report.j_q2) += 0.5 * err * err * inv_b;
            const VecD upstream{err * inv_b};
            labeled(k == 1 ? "critic1" : "critic2", [&] {
                (k == 1 ? q1_grads : q2_grads)
                    .accumulate(mlp_gradients(critic, xu, upstream));
                return 0;
            });
        }

        // Fresh squashed-Gaussian action for the value and actor losses.
        VecD noise(agent.action_dim);
        for (double& e : noise) e = unit(rng);
        const ActorEval ev = actor_eval(agent, t.x, noise);
        mean_log_prob += ev.log_prob * inv_b;
        const VecD xu_pi = concat(t.x, ev.u);
        const double q1 = mlp_forward(agent.critic1, xu_pi)[0];
        const double q2 = mlp_forward(agent.critic2, xu_pi)[0];
        const double min_q = std::min(q1, q2);

        const double v = mlp_forward(agent.value, t.x)[0];
        const double v_target = min_q - alpha * ev.log_prob;
        const double v_err = v - v_target;
        report.j_value += 0.5 * v_err * v_err * inv_b;
        const VecD v_upstream{v_err * inv_b};
        labeled("value", [&] {
            v_grads.accumulate(mlp_gradients(agent.value, t.x, v_upstream));
            return 0;
        });

        double pi_loss = 0.0;
        labeled("actor", [&] {
            MlpGrads g = actor_loss_gradients(agent, t.x, noise, &pi_loss);
            g.scale(inv_b);
            pi_grads.accumulate(g);
            return 0;
        });
        report.j_pi += pi_loss * inv_b;
    }

    auto check = [](double loss, const char* name) {
        if (!std::isfinite(loss))
            throw std::runtime_error(std::string("sac_update: non-finite loss in ") + name);
    };
    check(report.j_q1, "critic1");
    check(report.j_q2, "critic2");
    check(report.j_value, "value");
    check(report.j_pi, "actor");

    adam_step(agent.critic1, q1_grads, agent.critic1_opt);
    adam_step(agent.critic2, q2_grads, agent.critic2_opt);
    adam_step(agent.value, v_grads, agent.value_opt);
    adam_step(agent.actor, pi_grads, agent.actor_opt);

    if (agent.cfg.auto_entropy) {
        // Gradient ascent/descent on log alpha toward entropy -action_dim.
        const double target_entropy = -double(agent.action_dim);
        const double grad = -(mean_log_prob + target_entropy);
        const double log_alpha = std::log(agent.cfg.entropy_weight) -
                                 agent.cfg.entropy_lr * grad;
        agent.cfg.entropy_weight = std::exp(clamp(log_alpha, -10.0, 3.0));
        report.entropy_weight = agent.cfg.entropy_weight;
    }
    return report;
}

void target_update(SacAgent& agent, double tau) {
    require(tau > 0.0 && tau <= 1.0, "target_update: tau must be in (0,1]");
    // target += tau * (live - target): same EMA, exact at live == target
    auto ema = [tau](Mlp& target, const Mlp& live) {
        for (std::size_t l = 0; l < live.weights.size(); ++l) {
            for (std::size_t k = 0; k < live.weights[l].size(); ++k)
                target.weights[l].data[k] +=
                    tau * (live.weights[l].data[k] - target.weights[l].data[k]);
            for (std::size_t k = 0; k < live.biases[l].size(); ++k)
                target.biases[l][k] += tau * (live.biases[l][k] - target.biases[l][k]);
        }
    };
    ema(agent.value_target, agent.value);
    ema(agent.critic1_target, agent.critic1);
    ema(agent.critic2_target, agent.critic2);
}

namespace {

constexpr char kMagic[4] = {'D', 'S', 'A', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("sac load: truncated stream");
    return v;
}

void write_vecd(std::ostream& out, const VecD& v) {
    write_pod(out, std::uint64_t(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()),
              std::streamsize(v.size() * sizeof(double)));
}

VecD read_vecd(std::istream& in) {
    VecD v(std::size_t(read_pod<std::uint64_t>(in)));
    in.read(reinterpret_cast<char*>(v.data()),
            std::streamsize(v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("sac load: truncated vector");
    return v;
}

void write_adam(std::ostream& out, const AdamState& st) {
    write_pod(out, std::int64_t(st.step_count));
    write_pod(out, st.hyper.learning_rate);
    write_pod(out, st.hyper.beta1);
    write_pod(out, st.hyper.beta2);
    write_pod(out, st.hyper.epsilon);
    write_pod(out, std::uint64_t(st.first_moment.size()));
    for (std::size_t i = 0; i < st.first_moment.size(); ++i) {
        write_vecd(out, st.first_moment[i]);
        write_vecd(out, st.second_moment[i]);
    }
}

AdamState read_adam(std::istream& in) {
    AdamState st;
    st.step_count = long(read_pod<std::int64_t>(in));
    st.hyper.learning_rate = read_pod<double>(in);
    st.hyper.beta1 = read_pod<double>(in);
    st.hyper.beta2 = read_pod<double>(in);
    st.hyper.epsilon = read_pod<double>(in);
    const auto n = std::size_t(read_pod<std::uint64_t>(in));
    for (std::size_t i = 0; i < n; ++i) {
        st.first_moment.push_back(read_vecd(in));
        st.second_moment.push_back(read_vecd(in));
    }
    return st;
}

}  // namespace

void save_sac(std::ostream& out, const SacAgent& agent) {
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, std::uint64_t(agent.state_dim));
    write_pod(out, std::uint64_t(agent.action_dim));
    write_vecd(out, agent.bounds.low);
    write_vecd(out, agent.bounds.high);
    write_pod(out, agent.cfg.learning_rate);
    write_pod(out, agent.cfg.discount);
    write_pod(out, agent.cfg.tau);
    write_pod(out, agent.cfg.entropy_weight);
    write_pod(out, std::uint8_t(agent.cfg.auto_entropy ? 1 : 0));
    write_pod(out, agent.cfg.entropy_lr);
    write_pod(out, agent.cfg.logstd_min);
    write_pod(out, agent.cfg.logstd_max);
    for (const Mlp* net : {&agent.actor, &agent.critic1, &agent.critic2, &agent.value,
                           &agent.value_target, &agent.critic1_target,
                           &agent.critic2_target})
        save_mlp(out, *net);
    for (const AdamState* st :
         {&agent.actor_opt, &agent.critic1_opt, &agent.critic2_opt, &agent.value_opt})
        write_adam(out, *st);
    if (!out) throw std::runtime_error("sac save: write failed");
}

SacAgent load_sac(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("sac load: bad magic");
    if (read_pod<std::uint32_t>(in) != kVersion)
        throw std::runtime_error("sac load: unsupported version");
    SacAgent agent;
    agent.state_dim = std::size_t(read_pod<std::uint64_t>(in));
    agent.action_dim = std::size_t(read_pod<std::uint64_t>(in));
    agent.bounds.low = read_vecd(in);
    agent.bounds.high = read_vecd(in);
    agent.cfg.learning_rate = read_pod<double>(in);
    agent.cfg.discount = read_pod<double>(in);
    agent.cfg.tau = read_pod<double>(in);
    agent.cfg.entropy_weight = read_pod<double>(in);
    agent.cfg.auto_entropy = read_pod<std::uint8_t>(in) != 0;
    agent.cfg.entropy_lr = read_pod<double>(in);
    agent.cfg.logstd_min = read_pod<double>(in);
    agent.cfg.logstd_max = read_pod<double>(in);
    agent.actor = load_mlp(in);
    agent.critic1 = load_mlp(in);
    agent.critic2 = load_mlp(in);
    agent.value = load_mlp(in);
    agent.value_target = load_mlp(in);
    agent.critic1_target = load_mlp(in);
    agent.critic2_target = load_mlp(in);
    agent.actor_opt = read_adam(in);
    agent.critic1_opt = read_adam(in);
    agent.critic2_opt = read_adam(in);
    agent.value_opt = read_adam(in);
    agent.cfg.hidden.clear();
    for (std::size_t i = 1; i + 1 < agent.actor.layer_sizes.size(); ++i)
        agent.cfg.hidden.push_back(agent.actor.layer_sizes[i]);
    return agent;
}

void save_sac_file(const std::string& path, const SacAgent& agent) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("sac save: cannot open " + path);
    save_sac(out, agent);
}

SacAgent load_sac_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("sac load: cannot open " + path);
    return load_sac(in);
}

}  // namespace demorl

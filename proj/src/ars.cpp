#include "demorl/ars.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "demorl/rng.hpp"

namespace demorl {

namespace {
constexpr double kVarFloor = 1e-8;
}

LinearPolicy LinearPolicy::zeros(std::size_t state_dim, std::size_t action_dim,
                                 ActionBounds bounds, bool normalize) {
    LinearPolicy p;
    p.theta = Matrix(action_dim, state_dim);
    p.obs_mean.assign(state_dim, 0.0);
    p.obs_var.assign(state_dim, 1.0);
    p.obs_count = 0;
    p.normalize = normalize;
    p.bounds = std::move(bounds);
    return p;
}

VecD LinearPolicy::act(std::span<const double> x) const {
    require(x.size() == theta.cols, "LinearPolicy: state dim mismatch");
    VecD z(x.begin(), x.end());
    if (normalize && obs_count > 0) {
        for (std::size_t j = 0; j < z.size(); ++j)
            z[j] = (z[j] - obs_mean[j]) / std::sqrt(std::max(obs_var[j], kVarFloor));
    }
    VecD u(theta.rows, 0.0);
    for (std::size_t i = 0; i < theta.rows; ++i)
        for (std::size_t j = 0; j < theta.cols; ++j) u[i] += theta.at(i, j) * z[j];
    return bounds.clip(std::move(u));
}

void LinearPolicy::update_obs_stats(const std::vector<VecD>& states) {
    // Chan et al. parallel-merge of (count, mean, M2) running moments.
    if (states.empty()) return;
    const std::size_t dim = obs_mean.size();
    VecD batch_mean(dim, 0.0), batch_m2(dim, 0.0);
    for (const VecD& s : states)
        for (std::size_t j = 0; j < dim; ++j) batch_mean[j] += s[j];
    for (std::size_t j = 0; j < dim; ++j) batch_mean[j] /= double(states.size());
    for (const VecD& s : states)
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = s[j] - batch_mean[j];
            batch_m2[j] += d * d;
        }
    const double nb = double(states.size());
    const double na = double(obs_count);
    for (std::size_t j = 0; j < dim; ++j) {
        if (obs_count == 0) {
            obs_mean[j] = batch_mean[j];
            obs_var[j] = batch_m2[j] / nb;
        } else {
            const double delta = batch_mean[j] - obs_mean[j];
            const double m2a = obs_var[j] * na;
            const double m2 = m2a + batch_m2[j] + delta * delta * na * nb / (na + nb);
            obs_mean[j] += delta * nb / (na + nb);
            obs_var[j] = m2 / (na + nb);
        }
    }
    obs_count += states.size();
}

void ArsConfig::validate() const {
    require(noise > 0.0, "ArsConfig: nu must be > 0");
    require(directions >= 1, "ArsConfig: need N >= 1");
    require(top_directions >= 1 && top_directions <= directions,
            "ArsConfig: need 1 <= b <= N");
    require(accel_beta > 0.0 && accel_beta < 1.0, "ArsConfig: beta must be in (0,1)");
    require(accel_gamma >= 0.0 && accel_gamma <= 1.0,
            "ArsConfig: gamma must be in [0,1]");
}

EpisodeEvaluator make_env_evaluator(const Env& env) {
    // clone() keeps the evaluator self-contained and safely copyable
    std::shared_ptr<Env> shared(env.clone());
    return [shared](const LinearPolicy& policy, std::uint64_t seed) {
        EpisodeResult res;
        EnvState state = shared->reset(seed);
        res.states.push_back(state.x);
        bool done = false;
        while (!done) {
            const VecD u = policy.act(state.x);
            StepResult sr = shared->step(state, u);
            res.episode_return += sr.reward;
            state = std::move(sr.state);
            done = sr.done;
            res.states.push_back(state.x);
        }
        return res;
    };
}

ArsIterationReport ars_iteration(LinearPolicy& policy, const EpisodeEvaluator& evaluate,
                                 const ArsConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t n = cfg.directions;
    Rng rng = make_rng(derive_seed(seed, "directions"));
    std::normal_distribution<double> unit(0.0, 1.0);

    std::vector<Matrix> deltas(n, Matrix(policy.theta.rows, policy.theta.cols));
    for (Matrix& d : deltas)
        for (double& v : d.data) v = unit(rng);

    // Normalization stats are frozen across all 2N evaluations.
    std::vector<double> r_plus(n), r_minus(n);
    std::vector<VecD> visited;
    for (std::size_t k = 0; k < n; ++k) {
        for (int sign : {+1, -1}) {
            LinearPolicy probe = policy;
            for (std::size_t i = 0; i < probe.theta.size(); ++i)
                probe.theta.data[i] += sign * cfg.noise * deltas[k].data[i];
            const std::uint64_t ep_seed = derive_seed(seed, "episode", k);
            EpisodeResult res = evaluate(probe, ep_seed);
            (sign > 0 ? r_plus : r_minus)[k] = res.episode_return;
            for (VecD& s : res.states) visited.push_back(std::move(s));
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = std::max(r_plus[a], r_minus[a]);
        const double sb = std::max(r_plus[b], r_minus[b]);
        if (sa != sb) return sa > sb;
        return a < b;
    });
    order.resize(cfg.top_directions);

    ArsIterationReport report;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t k : order) {
        sum += r_plus[k] + r_minus[k];
        sum_sq += r_plus[k] * r_plus[k] + r_minus[k] * r_minus[k];
        report.best_return = std::max({report.best_return, r_plus[k], r_minus[k]});
    }
    const double count = 2.0 * double(cfg.top_directions);
    report.mean_used_return = sum / count;
    const double var = std::max(sum_sq / count - report.mean_used_return *
                                                     report.mean_used_return,
                                0.0);
    report.sigma_r = std::sqrt(var);
    double scale_sigma = report.sigma_r;
    if (scale_sigma == 0.0) {
        report.sigma_degenerate = true;
        scale_sigma = 1.0;
    }

    const double scale = cfg.step_size / (double(cfg.top_directions) * scale_sigma);
    for (std::size_t k : order) {
        const double diff = r_plus[k] - r_minus[k];
        for (std::size_t i = 0; i < policy.theta.size(); ++i)
            policy.theta.data[i] += scale * diff * deltas[k].data[i];
    }

    policy.update_obs_stats(visited);
    return report;
}

Matrix accelerated_step(const std::vector<Matrix>& history, const ArsConfig& cfg) {
    cfg.validate();
    require(!history.empty(), "accelerated_step: empty history");
    const Matrix& fresh = history.back();
    if (history.size() == 1 || cfg.accel_gamma == 1.0) return fresh;

    // Normalized weights (1-beta)^i over past iterates, i = 0 at the most
    // recent one before `fresh`.
    Matrix avg(fresh.rows, fresh.cols);
    double total = 0.0;
    double w = 1.0;
    for (std::size_t back = history.size() - 1; back-- > 0;) {
        for (std::size_t k = 0; k < avg.size(); ++k)
            avg.data[k] += w * history[back].data[k];
        total += w;
        w *= (1.0 - cfg.accel_beta);
    }
    for (double& v : avg.data) v /= total;

    Matrix out(fresh.rows, fresh.cols);
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data[k] = cfg.accel_gamma * fresh.data[k] +
                      (1.0 - cfg.accel_gamma) * avg.data[k];
    return out;
}

void save_policy_file(const std::string& path, const LinearPolicy& policy) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("policy save: cannot open " + path);
    out.precision(17);
    out << "linear_policy v1\n";
    out << policy.theta.rows << " " << policy.theta.cols << " "
        << (policy.normalize ? 1 : 0) << " " << policy.obs_count << "\n";
    auto dump = [&out](const VecD& v) {
        for (std::size_t i = 0; i < v.size(); ++i)
            out << v[i] << (i + 1 < v.size() ? ' ' : '\n');
    };
    dump(policy.theta.data);
    dump(policy.obs_mean);
    dump(policy.obs_var);
    dump(policy.bounds.low);
    dump(policy.bounds.high);
    if (!out) throw std::runtime_error("policy save: write failed");
}

LinearPolicy load_policy_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("policy load: cannot open " + path);
    std::string word, version;
    in >> word >> version;
    if (word != "linear_policy" || version != "v1")
        throw std::runtime_error("policy load: bad header in " + path);
    std::size_t rows, cols;
    int norm_flag;
    std::size_t count;
    in >> rows >> cols >> norm_flag >> count;
    if (!in) throw std::runtime_error("policy load: bad dimensions");
    LinearPolicy p;
    p.theta = Matrix(rows, cols);
    p.normalize = norm_flag != 0;
    p.obs_count = count;
    auto slurp = [&in, &path](VecD& v, std::size_t n) {
        v.resize(n);
        for (double& x : v) in >> x;
        if (!in) throw std::runtime_error("policy load: truncated data in " + path);
    };
    slurp(p.theta.data, rows * cols);
    slurp(p.obs_mean, cols);
    slurp(p.obs_var, cols);
    slurp(p.bounds.low, rows);
    slurp(p.bounds.high, rows);
    return p;
}

}  // namespace demorl
